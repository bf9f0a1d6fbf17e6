"""Datasets and concept functions for the tabular, image and board pipelines."""
from . import board
from .board import (BoardDataset, generate_boards, is_legal, legality_violations, parse_board,
                    format_board, queen_threat)
from .images import (ImageDataset, concept_lightness, concept_loopiness, load_idx_images,
                     synthetic_digits, synthetic_fashion, write_idx)
from .tabular import (FEATURES, TabularDataset, concept_bedrooms_ratio, denormalize,
                      load_tabular_csv, normalize, synthetic_housing, write_tabular_csv)

__all__ = [
    "board", "BoardDataset", "generate_boards", "is_legal", "legality_violations", "parse_board",
    "format_board", "queen_threat", "ImageDataset", "concept_lightness", "concept_loopiness",
    "load_idx_images", "synthetic_digits", "synthetic_fashion", "write_idx", "FEATURES",
    "TabularDataset", "concept_bedrooms_ratio", "denormalize", "load_tabular_csv", "normalize",
    "synthetic_housing", "write_tabular_csv",
]
