"""6x6 chess without bishops: encoding, text format, attacks and legality.

Encoding is an (11, 6, 6) float array. Planes 0-9 are the pieces
``PNRQKpnrqk`` (white upper case), plane 10 is the side to move (all ones
when white moves). Row 0 is the top rank as printed (rank 6); white pawns
advance toward row 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

SIZE = 6
PIECES = "PNRQKpnrqk"
N_PIECE_PLANES = len(PIECES)
SIDE_PLANE = N_PIECE_PLANES
N_PLANES = N_PIECE_PLANES + 1
VALUES = {"P": 1, "N": 3, "R": 5, "Q": 9, "K": 0}

KNIGHT_STEPS = [(1, 2), (2, 1), (-1, 2), (-2, 1), (1, -2), (2, -1), (-1, -2), (-2, -1)]
KING_STEPS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
ORTHO = [(1, 0), (-1, 0), (0, 1), (0, -1)]
DIAG = [(1, 1), (1, -1), (-1, 1), (-1, -1)]

Grid = list[list[str]]


class BoardFormatError(ValueError):
    pass


class NoQueenError(ValueError):
    pass


def on_board(r: int, c: int) -> bool:
    return 0 <= r < SIZE and 0 <= c < SIZE


def is_white(piece: str) -> bool:
    return piece.isupper()


# ---------------------------------------------------------------------------
# encoding and text format


def empty_grid() -> Grid:
    return [["."] * SIZE for _ in range(SIZE)]


def encode(grid: Grid, white_to_move: bool) -> np.ndarray:
    enc = np.zeros((N_PLANES, SIZE, SIZE))
    for r in range(SIZE):
        for c in range(SIZE):
            piece = grid[r][c]
            if piece != ".":
                enc[PIECES.index(piece), r, c] = 1.0
    enc[SIDE_PLANE] = 1.0 if white_to_move else 0.0
    return enc


def is_valid_encoding(enc: np.ndarray) -> bool:
    """One-hot-or-empty per square, binary planes, constant side plane."""
    enc = np.asarray(enc)
    if enc.shape != (N_PLANES, SIZE, SIZE):
        return False
    if not np.all((enc == 0.0) | (enc == 1.0)):
        return False
    if enc[:N_PIECE_PLANES].sum(axis=0).max() > 1:
        return False
    side = enc[SIDE_PLANE]
    return bool(np.all(side == side[0, 0]))


def decode(enc: np.ndarray) -> tuple[Grid, bool]:
    if not is_valid_encoding(enc):
        raise BoardFormatError("not a one-hot-or-empty board encoding")
    grid = empty_grid()
    planes, rows, cols = np.nonzero(enc[:N_PIECE_PLANES])
    for p, r, c in zip(planes, rows, cols):
        grid[r][c] = PIECES[p]
    return grid, bool(enc[SIDE_PLANE, 0, 0] == 1.0)


def parse_board(text: str) -> np.ndarray:
    lines = [line.strip() for line in text.strip().splitlines()]
    if len(lines) != SIZE + 1:
        raise BoardFormatError(f"expected {SIZE} ranks and a side line, got {len(lines)} lines")
    grid = []
    for line in lines[:SIZE]:
        if len(line) != SIZE or any(ch not in PIECES + "." for ch in line):
            raise BoardFormatError(f"bad rank {line!r}")
        grid.append(list(line))
    if lines[SIZE] not in ("w", "b"):
        raise BoardFormatError(f"side to move must be 'w' or 'b', got {lines[SIZE]!r}")
    return encode(grid, lines[SIZE] == "w")


def format_board(enc: np.ndarray) -> str:
    grid, white = decode(enc)
    return "\n".join("".join(row) for row in grid) + "\n" + ("w" if white else "b") + "\n"


# ---------------------------------------------------------------------------
# attacks, implementation 1: walk rays outward from every attacker


def attacks_from(grid: Grid, r: int, c: int) -> set[tuple[int, int]]:
    piece = grid[r][c]
    kind = piece.upper()
    out: set[tuple[int, int]] = set()
    if kind == "P":
        dr = -1 if is_white(piece) else 1
        for dc in (-1, 1):
            if on_board(r + dr, c + dc):
                out.add((r + dr, c + dc))
    elif kind in "NK":
        for dr, dc in KNIGHT_STEPS if kind == "N" else KING_STEPS:
            if on_board(r + dr, c + dc):
                out.add((r + dr, c + dc))
    elif kind in "RQ":
        for dr, dc in ORTHO + (DIAG if kind == "Q" else []):
            rr, cc = r + dr, c + dc
            while on_board(rr, cc):
                out.add((rr, cc))
                if grid[rr][cc] != ".":
                    break
                rr, cc = rr + dr, cc + dc
    return out


def attack_map(grid: Grid, by_white: bool) -> np.ndarray:
    """Boolean (6, 6) map of squares attacked by one side."""
    hit = np.zeros((SIZE, SIZE), dtype=bool)
    for r in range(SIZE):
        for c in range(SIZE):
            piece = grid[r][c]
            if piece != "." and is_white(piece) == by_white:
                for rr, cc in attacks_from(grid, r, c):
                    hit[rr, cc] = True
    return hit


# ---------------------------------------------------------------------------
# attacks, implementation 2: precomputed tables looked up from the target


def _step_table(steps) -> list[list[list[tuple[int, int]]]]:
    return [[[(r + dr, c + dc) for dr, dc in steps if on_board(r + dr, c + dc)]
             for c in range(SIZE)] for r in range(SIZE)]


def _ray_table(dirs) -> list[list[list[list[tuple[int, int]]]]]:
    table = []
    for r in range(SIZE):
        row = []
        for c in range(SIZE):
            rays = []
            for dr, dc in dirs:
                ray, rr, cc = [], r + dr, c + dc
                while on_board(rr, cc):
                    ray.append((rr, cc))
                    rr, cc = rr + dr, cc + dc
                rays.append(ray)
            row.append(rays)
        table.append(row)
    return table


KNIGHT_TABLE = _step_table(KNIGHT_STEPS)
KING_TABLE = _step_table(KING_STEPS)
# a white pawn attacking (r, c) stands at (r+1, c±1); a black one at (r-1, c±1)
WHITE_PAWN_SOURCES = _step_table([(1, -1), (1, 1)])
BLACK_PAWN_SOURCES = _step_table([(-1, -1), (-1, 1)])
ORTHO_RAYS = _ray_table(ORTHO)
DIAG_RAYS = _ray_table(DIAG)


def is_attacked(grid: Grid, r: int, c: int, by_white: bool) -> bool:
    def own(piece: str) -> str:
        return piece if by_white else piece.lower()

    pawn_sources = WHITE_PAWN_SOURCES if by_white else BLACK_PAWN_SOURCES
    if any(grid[rr][cc] == own("P") for rr, cc in pawn_sources[r][c]):
        return True
    if any(grid[rr][cc] == own("N") for rr, cc in KNIGHT_TABLE[r][c]):
        return True
    if any(grid[rr][cc] == own("K") for rr, cc in KING_TABLE[r][c]):
        return True
    for rays, sliders in ((ORTHO_RAYS, ("R", "Q")), (DIAG_RAYS, ("Q",))):
        for ray in rays[r][c]:
            for rr, cc in ray:
                piece = grid[rr][cc]
                if piece == ".":
                    continue
                if piece in {own(s) for s in sliders}:
                    return True
                break
    return False


# ---------------------------------------------------------------------------
# concepts and legality


def find(grid: Grid, piece: str) -> list[tuple[int, int]]:
    return [(r, c) for r in range(SIZE) for c in range(SIZE) if grid[r][c] == piece]


def queen_threat(enc: np.ndarray) -> int:
    """1 if any queen of the side to move is attacked by the opponent."""
    grid, white = decode(enc)
    queens = find(grid, "Q" if white else "q")
    if not queens:
        raise NoQueenError("side to move has no queen")
    return int(any(is_attacked(grid, r, c, by_white=not white) for r, c in queens))


def queen_threat_by_enumeration(enc: np.ndarray) -> int:
    grid, white = decode(enc)
    queens = find(grid, "Q" if white else "q")
    if not queens:
        raise NoQueenError("side to move has no queen")
    hit = attack_map(grid, by_white=not white)
    return int(any(hit[r, c] for r, c in queens))


def in_check(grid: Grid, white: bool) -> bool:
    kings = find(grid, "K" if white else "k")
    return any(is_attacked(grid, r, c, by_white=not white) for r, c in kings)


def legality_violations(enc: np.ndarray) -> list[str]:
    """Rule-based oracle; an empty list means the position is legal."""
    if not is_valid_encoding(enc):
        return ["invalid encoding"]
    grid, white = decode(enc)
    problems = []
    for king, side in (("K", "white"), ("k", "black")):
        n = len(find(grid, king))
        if n != 1:
            problems.append(f"{side} has {n} kings")
    for c in range(SIZE):
        for r in (0, SIZE - 1):
            if grid[r][c] in "Pp":
                problems.append(f"pawn on back rank at {square_name(r, c)}")
    if in_check(grid, not white):
        problems.append("side not to move is in check")
    return problems


def is_legal(enc: np.ndarray) -> bool:
    return not legality_violations(enc)


def square_name(r: int, c: int) -> str:
    return "abcdef"[c] + str(SIZE - r)


def aux_targets(enc: np.ndarray) -> np.ndarray:
    """Side-to-move view: material balance / 10, in-check, attacked P/N/R/Q."""
    grid, white = decode(enc)
    material = 0
    for r in range(SIZE):
        for c in range(SIZE):
            piece = grid[r][c]
            if piece != ".":
                v = VALUES[piece.upper()]
                material += v if is_white(piece) == white else -v
    hit = attack_map(grid, by_white=not white)
    attacked = []
    for kind in "PNRQ":
        own = kind if white else kind.lower()
        attacked.append(float(any(hit[r, c] for r, c in find(grid, own))))
    return np.array([material / 10.0, float(in_check(grid, white)), *attacked])


AUX_NAMES = ("material", "in_check", "pawn_attacked", "knight_attacked", "rook_attacked",
             "queen_attacked")


# ---------------------------------------------------------------------------
# generation


@dataclass
class BoardDataset:
    boards: np.ndarray  # (n, 11, 6, 6)
    seed: int

    def __len__(self) -> int:
        return len(self.boards)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.boards)


PIECE_WEIGHTS = {"P": 4, "N": 2, "R": 2, "Q": 1}


START_TEXT = "rnqknr\npppppp\n......\n......\nPPPPPP\nRNQKNR\nw\n"


def start_position() -> np.ndarray:
    """The standard 6x6 opening position, white to move."""
    return parse_board(START_TEXT)


def random_board(rng: np.random.Generator, with_queen: bool = False,
                 extra: tuple[int, int] = (2, 8)) -> np.ndarray:
    """Both kings plus ``extra`` (inclusive range, default 2-8) random pieces, resampled until legal."""
    kinds = list(PIECE_WEIGHTS)
    probs = np.array(list(PIECE_WEIGHTS.values()), dtype=float)
    probs /= probs.sum()
    while True:
        grid = empty_grid()
        white = bool(rng.integers(0, 2))
        free = [divmod(int(i), SIZE) for i in rng.permutation(SIZE * SIZE)]
        n_extra = int(rng.integers(extra[0], extra[1] + 1))
        pieces = ["K", "k"]
        if with_queen:
            pieces.append("Q" if white else "q")
            n_extra -= 1
        for _ in range(n_extra):
            kind = str(rng.choice(kinds, p=probs))
            pieces.append(kind if rng.integers(0, 2) else kind.lower())
        for piece in pieces:
            # pawns never go on the first or last rank
            k = next((i for i, (r, _) in enumerate(free) if piece not in "Pp" or 0 < r < SIZE - 1), None)
            if k is None:
                break
            r, c = free.pop(k)
            grid[r][c] = piece
        else:
            enc = encode(grid, white)
            if is_legal(enc):
                return enc


def generate_boards(n: int, seed: int, with_queen: bool = False,
                    extra: tuple[int, int] = (2, 8)) -> BoardDataset:
    rng = np.random.default_rng(seed)
    boards = np.stack([random_board(rng, with_queen, extra) for _ in range(n)]) if n else \
        np.zeros((0, N_PLANES, SIZE, SIZE))
    return BoardDataset(boards, seed)


CORRUPTIONS = ("extra_king", "missing_king", "back_rank_pawn", "opponent_in_check", "stacked")


def corrupt_board(enc: np.ndarray, rng: np.random.Generator, kind: str | None = None) -> np.ndarray:
    """Return an illegal variant of a legal board.

    ``stacked`` produces a multi-hot square, so the result is only meant as
    classifier input; every other kind yields a valid encoding.
    """
    kind = kind or str(rng.choice(CORRUPTIONS))
    for _ in range(200):
        grid, white = decode(enc)
        empties = find(grid, ".")
        if kind == "extra_king":
            r, c = empties[rng.integers(len(empties))]
            grid[r][c] = "K" if rng.integers(0, 2) else "k"
        elif kind == "missing_king":
            r, c = find(grid, "K" if rng.integers(0, 2) else "k")[0]
            grid[r][c] = "."
        elif kind == "back_rank_pawn":
            spots = [(r, c) for r, c in empties if r in (0, SIZE - 1)]
            if not spots:
                continue
            r, c = spots[rng.integers(len(spots))]
            grid[r][c] = "P" if rng.integers(0, 2) else "p"
        elif kind == "opponent_in_check":
            kr, kc = find(grid, "k" if white else "K")[0]
            piece = str(rng.choice(list("NRQ")))
            piece = piece if white else piece.lower()
            r, c = empties[rng.integers(len(empties))]
            grid[r][c] = piece
        elif kind == "stacked":
            occupied = [(r, c) for r in range(SIZE) for c in range(SIZE) if grid[r][c] != "."]
            r, c = occupied[rng.integers(len(occupied))]
            out = encode(grid, white)
            choices = [p for p in range(N_PIECE_PLANES) if out[p, r, c] == 0]
            out[choices[rng.integers(len(choices))], r, c] = 1.0
            return out
        else:
            raise ValueError(f"unknown corruption {kind!r}")
        out = encode(grid, white)
        if not is_legal(out):
            return out
    raise RuntimeError(f"could not produce a '{kind}' corruption")
