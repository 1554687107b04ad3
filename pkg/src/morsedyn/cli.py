"""Command-line entry point.

Subcommands: ``train``, ``analyze``, ``export``, ``pipeline``, ``validate-config``.
Exit codes: 0 success, 1 validation error, 2 runtime/numerical error,
3 capacity truncation.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from morsedyn.config import PipelineConfig, load_config
from morsedyn.dynamics import validate_outer, validate_pairs
from morsedyn.errors import CapacityError, MorsedynError, ValidationError
from morsedyn.export import MorseArtifact, dumps_json, load_artifact, render
from morsedyn.grid import Box, make_grid
from morsedyn.harness import (
    EnsembleRecord,
    load_dataset,
    prediction_entropy,
    project,
    read_records,
    select_coordinates,
    stratified_split,
    train_ensemble,
)
from morsedyn.pipeline import PipelineResult, adaptive_morse_pipeline
from morsedyn.surrogate import fit, image_box, loo_coverage
from morsedyn.systems import SYSTEMS, get_system

__all__ = ["main", "train_artifacts", "analyze_records", "analyze_system"]

log = logging.getLogger("morsedyn")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_CAPACITY = 0, 1, 2, 3
CONFIG_ECHO = "config.resolved.json"


@dataclass
class Artifacts:
    """Named text outputs plus flags that decide the exit status."""

    files: dict[str, str] = field(default_factory=dict)
    truncated: bool = False


class OutputDir:
    """Writes files into a directory and deletes them again if the run fails."""

    def __init__(self, path: Path):
        self.path = path
        self.created_dir = False
        self.written: list[Path] = []

    def write(self, files: dict[str, str]) -> None:
        if not self.path.exists():
            self.path.mkdir(parents=True)
            self.created_dir = True
        for name, text in files.items():
            target = self.path / name
            with open(target, "w", newline="") as fh:
                fh.write(text)
            self.written.append(target)

    def rollback(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)
        if self.created_dir:
            try:
                self.path.rmdir()
            except OSError:
                pass


# ---------------------------------------------------------------- train
def train_artifacts(cfg: PipelineConfig, threads: int = 1) -> Artifacts:
    ens = cfg.ensemble
    x, y = load_dataset(ens.dataset, ens.label_column)
    data = stratified_split(x, y, ens.train_fraction, ens.split_seed)
    if cfg.net.layers[0] != x.shape[1]:
        raise ValidationError(f"network.layers: input width {cfg.net.layers[0]} != {x.shape[1]} features")
    if cfg.net.layers[-1] != data.n_classes:
        raise ValidationError(f"network.layers: output width {cfg.net.layers[-1]} != {data.n_classes} classes")
    records = train_ensemble(cfg.net, ens, data, threads=threads)

    lines = "".join(r.to_json() + "\n" for r in sorted(records, key=lambda r: r.cycle))
    live = [r for r in records if not r.diverged]
    acc = np.array([r.balanced_accuracy for r in live])
    ent = prediction_entropy(records, data.n_classes)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["test_point", "label", "entropy_bits"])
    w.writerows((t, int(lab), repr(float(h))) for t, (lab, h) in enumerate(zip(data.y_test, ent)))
    summary = {
        "cycles": len(records),
        "diverged": len(records) - len(live),
        "weights": cfg.net.n_weights,
        "test_points": int(len(data.y_test)),
        "balanced_accuracy": {"mean": float(acc.mean()), "std": float(acc.std())},
        "entropy_bits": {"min": float(ent.min()), "max": float(ent.max()), "mean": float(ent.mean())},
    }
    return Artifacts(
        {
            "records.jsonl": lines,
            "summary.json": dumps_json(summary),
            "entropy.csv": buf.getvalue(),
            CONFIG_ECHO: cfg.dumps(),
        }
    )


# -------------------------------------------------------------- analyze
def _morse_files(cfg: PipelineConfig, res: PipelineResult) -> dict[str, str]:
    art = MorseArtifact.from_analysis(res.condensation, res.morse_graph, res.retraction)
    names = {"json": "morse.json", "dot": "morse.dot", "csv": "basins.csv"}
    return {names[f]: render(art, f) for f in ("json", "dot", "csv") if f in cfg.resolved["output"]["formats"]}


def _report(res: PipelineResult, source: dict, coverage: dict) -> dict:
    mg = res.morse_graph
    return {
        "source": source,
        "morse_nodes": len(mg),
        "minimal_nodes": sum(mg.minimal),
        "minimal": list(mg.minimal),
        "order_edges": [list(e) for e in mg.covering_edges()],
        "retraction_present": res.retraction is not None,
        "leaves": len(res.grid),
        "max_depth": res.grid.max_depth(),
        "clipped_cells": len(res.map.clipped_cells()),
        "truncated": res.truncated,
        "coverage": coverage,
        "rounds": [h.to_dict() for h in res.history],
    }


def analyze_records(
    cfg: PipelineConfig, records: Sequence[EnsembleRecord], threads: int = 1
) -> tuple[Artifacts, PipelineResult]:
    live = [r for r in records if not r.diverged]
    if len(live) < 2:
        raise ValidationError("need at least 2 non-diverged records")
    n_w = len(live[0].initial)
    if cfg.selection_indices is not None:
        idx = list(cfg.selection_indices)
        if max(idx) >= n_w:
            raise ValidationError(f"selection.indices: records have only {n_w} weights")
    else:
        if cfg.selection_k > n_w:
            raise ValidationError(f"selection.k: records have only {n_w} weights")
        idx = select_coordinates(records, cfg.selection_k)
    pairs = project(records, idx)
    model = fit(pairs, cfg.kernel)
    x = np.array([p.input for p in pairs])
    y = np.array([p.output for p in pairs])

    domain = cfg.explicit_domain
    if domain is None:
        bbox = Box.from_arrays(x.min(axis=0), x.max(axis=0))
        domain = bbox.inflate(cfg.grid["auto_margin"] / 2)
    if domain.dim != len(idx):
        raise ValidationError(f"grid.domain: dimension {domain.dim} != {len(idx)} selected coordinates")
    grid = make_grid(domain, cfg.grid["initial_depth"], leaf_cap=cfg.grid["leaf_cap"])
    variance = cfg.variance
    res = adaptive_morse_pipeline(
        grid, lambda cell: image_box(model, cell, variance), cfg.grid["max_depth"], threads=threads
    )
    coverage = validate_pairs(res.map, res.grid, x, y).to_dict()
    coverage["gp_loo_interval_coverage"] = loo_coverage(pairs, variance.z, cfg.kernel)
    source = {"kind": "records", "selected_coordinates": idx, "pairs": len(pairs), "domain": domain.to_dict()}
    files = {
        "grid.json": dumps_json(res.grid.to_dict(), compact=True),
        "map.json": dumps_json(res.map.to_dict(), compact=True),
        "model.json": dumps_json(model.to_dict(), compact=True),
        **_morse_files(cfg, res),
        "report.json": dumps_json(_report(res, source, coverage)),
        CONFIG_ECHO: cfg.dumps(),
    }
    return Artifacts(files, res.truncated), res


def analyze_system(cfg: PipelineConfig, name: str, threads: int = 1) -> tuple[Artifacts, PipelineResult]:
    system = get_system(name)
    grid = make_grid(system.domain, cfg.grid["initial_depth"], leaf_cap=cfg.grid["leaf_cap"])
    res = adaptive_morse_pipeline(grid, system.box_image, cfg.grid["max_depth"], threads=threads)
    val = cfg.validation
    coverage = validate_outer(res.map, res.grid, system.point_map, val["samples_per_cell"], val["seed"]).to_dict()
    source = {"kind": "system", "name": system.name, "domain": system.domain.to_dict()}
    files = {
        "grid.json": dumps_json(res.grid.to_dict(), compact=True),
        "map.json": dumps_json(res.map.to_dict(), compact=True),
        **_morse_files(cfg, res),
        "report.json": dumps_json(_report(res, source, coverage)),
        CONFIG_ECHO: cfg.dumps(),
    }
    return Artifacts(files, res.truncated), res


# ----------------------------------------------------------------- main
class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors are validation errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline configuration JSON")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (outputs do not depend on it)")
    common.add_argument("--seed", type=int, help="override ensemble.base_seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="morsedyn", description="Morse-graph analysis of sampled training dynamics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train the ensemble and write records")
    an = sub.add_parser("analyze", parents=[common], help="Morse analysis of records or a test system")
    src = an.add_mutually_exclusive_group(required=True)
    src.add_argument("--records", help="EnsembleRecord JSONL file")
    src.add_argument("--system", choices=sorted(SYSTEMS), help="bundled analytic system")
    ex = sub.add_parser("export", help="re-serialise a Morse JSON artifact to stdout")
    ex.add_argument("artifact", help="morse.json written by analyze")
    ex.add_argument("--format", required=True, choices=["dot", "json", "csv"])
    sub.add_parser("pipeline", parents=[common], help="train then analyze in one run")
    sub.add_parser("validate-config", parents=[common], help="print the resolved configuration")
    return p


def _run(args: argparse.Namespace) -> int:
    if args.command == "export":
        sys.stdout.write(render(load_artifact(args.artifact), args.format))
        return EXIT_OK
    if args.threads < 1:
        raise ValidationError("--threads must be >= 1")
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    if args.command == "validate-config":
        sys.stdout.write(cfg.dumps())
        return EXIT_OK

    out = OutputDir(cfg.output_dir)
    truncated = False
    try:
        if args.command in ("train", "pipeline"):
            out.write(train_artifacts(cfg, args.threads).files)
        if args.command == "analyze":
            if args.system:
                arts, _ = analyze_system(cfg, args.system, args.threads)
            else:
                rec_path = Path(args.records)
                if not rec_path.is_file():
                    raise ValidationError(f"records not found: {rec_path}")
                arts, _ = analyze_records(cfg, read_records(rec_path), args.threads)
            out.write(arts.files)
            truncated = arts.truncated
        if args.command == "pipeline":
            arts, _ = analyze_records(cfg, read_records(cfg.output_dir / "records.jsonl"), args.threads)
            out.write(arts.files)
            truncated = arts.truncated
    except BaseException:
        out.rollback()
        raise
    print(f"wrote {len(set(out.written))} files to {cfg.output_dir}", file=sys.stderr)
    if truncated:
        print("warning: refinement stopped at the leaf cap; results are truncated", file=sys.stderr)
        return EXIT_CAPACITY
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (MorsedynError, ArithmeticError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
