"""Command line entry points: ``train``, ``probe``, ``maximise``, ``sweep``.

Exit codes: 0 success, 1 configuration error, 2 pipeline error. A maximisation
that does not converge is reported in its status, not as a failing exit.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import pipelines, reports
from .pipelines import ConfigError, PipelineRun

log = logging.getLogger("conceptbp")

OUT_ENV = "CONCEPTBP_OUT"
DEFAULT_OUT = "runs"
EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 1, 2


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def cmd_train(run: PipelineRun, out: Path, manifest: reports.RunManifest) -> None:
    path = reports.write_json(out / "train_report.json",
                              {"pipeline": run.cfg["pipeline"], "models": run.metrics,
                               "manifest": manifest.name})
    manifest.record(path)
    for name, info in sorted(run.metrics.items()):
        print(f"{name}: " + ", ".join(f"{k}={v}" for k, v in sorted(info.items()) if not isinstance(v, list)))


def cmd_probe(run: PipelineRun, out: Path, manifest: reports.RunManifest) -> None:
    if run.probe_report is None:
        print("probe: fixed by config")
        return
    metrics = ", ".join(f"{k}={v:.4f}" for k, v in sorted(run.probe_report.metrics.items()))
    print(f"probe on '{run.probe.tap}': {metrics}")


def cmd_maximise(run: PipelineRun, out: Path, manifest: reports.RunManifest) -> None:
    target = out / "maximise"
    target.mkdir(parents=True, exist_ok=True)
    results = pipelines.run_maximise(run)
    summary = []
    for i, s, res in results:
        report = pipelines.write_result(run, i, s, res, target, f"sample{i}", manifest)
        summary.append({"sample": i, "status": res.status, "initial_probe": res.initial_probe,
                        "probe_output": res.probe_output, "distance": res.distance,
                        "steps": res.steps, **({"after": report["after"]} if "after" in report else {})})
        print(f"sample {i}: {res.status} probe {res.initial_probe:.4f} -> {res.probe_output:.4f} "
              f"distance {res.distance:.4f}")
    if run.cfg["pipeline"] == "housing":
        manifest.record(pipelines.delta_table(run, results).write(target / "deltas.csv"))
    manifest.record(reports.write_json(target / "summary.json", {
        "pipeline": run.cfg["pipeline"], "config": run.cfg["maximise"], "runs": summary,
        "converged": sum(r["status"] == "converged" for r in summary), "manifest": manifest.name}))


def cmd_sweep(run: PipelineRun, out: Path, manifest: reports.RunManifest) -> None:
    target = out / "sweep"
    results = pipelines.run_sweep(run)
    for i, s, runs in results:
        for res in runs:
            lam = float(res.extras.get("lambda2", res.config.lambda2))
            if res.status == "failed":
                path = reports.write_json(target / f"lambda2_{lam:g}" / f"sample{i}_report.json",
                                          reports.run_report(res, manifest.name, sample=i))
                manifest.record(path)
                continue
            pipelines.write_result(run, i, s, res, target / f"lambda2_{lam:g}", f"sample{i}", manifest)
        print(f"sample {i}: " + "; ".join(
            f"lambda2={r.extras.get('lambda2', r.config.lambda2):g} distance={r.distance:.4f} {r.status}"
            for r in runs))
    path = target / "summary.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(pipelines.sweep_summary(results))
    manifest.record(path)


COMMANDS = {"train": cmd_train, "probe": cmd_probe, "maximise": cmd_maximise, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conceptbp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"train": "train the pipeline's models", "probe": "fit the concept probe",
             "maximise": "search perturbations for the selected samples",
             "sweep": "repeat the maximisation for each lambda2 in the config"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON pipeline config")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", default=None, help=f"output directory (else ${OUT_ENV}, else ./{DEFAULT_OUT})")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = pipelines.load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args.out)
    manifest = reports.RunManifest(args.command, str(args.config), cfg["seed"], str(out))
    try:
        out.mkdir(parents=True, exist_ok=True)
        manifest.record(reports.write_json(out / f"config_{args.command}.json", cfg))
        run = pipelines.prepare(cfg, out, manifest, with_probe=args.command != "train")
        COMMANDS[args.command](run, out, manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every module error maps to one exit code
        log.debug("pipeline failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    finally:
        if out.exists():
            manifest.write()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
