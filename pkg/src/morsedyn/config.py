"""Pipeline configuration: a single JSON document validated against a shipped schema.

Missing keys take the defaults below (the Iris baseline).  Every numeric field
is checked before any stage runs; errors name the offending field path.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from morsedyn.errors import ValidationError
from morsedyn.grid import MAX_DIM, Box
from morsedyn.harness import EnsembleConfig, NetConfig
from morsedyn.surrogate import KernelConfig, VarianceConfig

__all__ = ["DEFAULTS", "PipelineConfig", "load_config", "resolve_config", "schema"]

DEFAULTS: dict = {
    "dataset": {"path": None, "label_column": "label", "split_seed": 0, "train_fraction": 0.8},
    "network": {
        "layers": [4, 1, 3],
        "activation": "tanh",
        "epochs": 150,
        "batch_size": 32,
        "learning_rate": 0.1,
    },
    "ensemble": {"cycles": 100, "base_seed": 0, "init_box": {"low": -1.0, "high": 1.0}},
    "selection": {"k": 2, "indices": None},
    "surrogate": {
        "jitter": 1e-6,
        "escalation": 10.0,
        "max_escalations": 6,
        "lengthscale": None,
        "z": 2.0,
        "samples_per_cell": None,
        "epsilon": 1e-9,
    },
    "grid": {
        "domain": "auto",
        "auto_margin": 0.1,
        "initial_depth": 2,
        "max_depth": 8,
        "leaf_cap": 1 << 20,
    },
    "validation": {"samples_per_cell": 100, "seed": 0},
    "output": {"directory": "morsedyn-out", "formats": ["dot", "json", "csv"]},
}


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("morsedyn").joinpath("data/config.schema.json").read_text()
    return json.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


@dataclass(frozen=True)
class PipelineConfig:
    resolved: dict
    net: NetConfig
    ensemble: EnsembleConfig
    kernel: KernelConfig
    variance: VarianceConfig

    @property
    def selection_k(self) -> int:
        return self.resolved["selection"]["k"]

    @property
    def selection_indices(self) -> list[int] | None:
        return self.resolved["selection"]["indices"]

    @property
    def grid(self) -> dict:
        return self.resolved["grid"]

    @property
    def explicit_domain(self) -> Box | None:
        dom = self.grid["domain"]
        return None if dom == "auto" else Box(tuple(dom["lower"]), tuple(dom["upper"]))

    @property
    def output_dir(self) -> Path:
        return Path(self.resolved["output"]["directory"])

    @property
    def validation(self) -> dict:
        return self.resolved["validation"]

    def dumps(self) -> str:
        """Resolved config as written next to outputs.  The output directory is
        left out so artifacts do not depend on where they were written."""
        echo = copy.deepcopy(self.resolved)
        del echo["output"]["directory"]
        return json.dumps(echo, indent=2, sort_keys=True) + "\n"


def _check(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ValidationError(f"{path}: {msg}")


def resolve_config(raw: dict | None = None, seed: int | None = None, out: str | None = None) -> PipelineConfig:
    """Merge ``raw`` over the defaults, apply overrides, validate everything."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ValidationError("<root>: configuration must be a JSON object")
    errors = sorted(
        jsonschema.Draft202012Validator(schema()).iter_errors(raw), key=lambda e: list(e.absolute_path)
    )
    if errors:
        raise ValidationError("; ".join(f"{_path(e)}: {e.message}" for e in errors))
    cfg = _merge(DEFAULTS, raw)
    if seed is not None:
        cfg["ensemble"]["base_seed"] = int(seed)
    if out is not None:
        cfg["output"]["directory"] = str(out)

    g = cfg["grid"]
    _check(g["max_depth"] >= g["initial_depth"], "grid.max_depth", "must be >= grid.initial_depth")
    _check(g["max_depth"] <= 30, "grid.max_depth", "must be <= 30")
    if g["domain"] != "auto":
        lo, hi = g["domain"]["lower"], g["domain"]["upper"]
        _check(len(lo) == len(hi), "grid.domain", "lower and upper differ in length")
        _check(len(lo) <= MAX_DIM, "grid.domain", f"dimension exceeds {MAX_DIM}")
        _check(all(a < b for a, b in zip(lo, hi)), "grid.domain", "needs lower < upper on every axis")
    sel = cfg["selection"]
    n_sel = len(sel["indices"]) if sel["indices"] is not None else sel["k"]
    sel_path = "selection.indices" if sel["indices"] is not None else "selection.k"
    _check(n_sel <= MAX_DIM, sel_path, f"at most {MAX_DIM} coordinates")
    if g["domain"] != "auto":
        _check(len(g["domain"]["lower"]) == n_sel, "grid.domain", "dimension must equal the selection size")
    lsc = cfg["surrogate"]["lengthscale"]
    if lsc is not None:
        _check(len(lsc) == n_sel, "surrogate.lengthscale", "needs one entry per selected coordinate")

    net_raw, ens_raw, sur = cfg["network"], cfg["ensemble"], cfg["surrogate"]
    sections = {}
    try:
        sections["network"] = NetConfig(
            layers=tuple(net_raw["layers"]),
            activation=net_raw["activation"],
            epochs=net_raw["epochs"],
            batch_size=net_raw["batch_size"],
            learning_rate=float(net_raw["learning_rate"]),
        )
        box = ens_raw["init_box"]
        ens = EnsembleConfig(
            cycles=ens_raw["cycles"],
            base_seed=ens_raw["base_seed"],
            init_low=tuple(box["low"]) if isinstance(box["low"], list) else float(box["low"]),
            init_high=tuple(box["high"]) if isinstance(box["high"], list) else float(box["high"]),
            dataset=cfg["dataset"]["path"],
            label_column=cfg["dataset"]["label_column"],
            split_seed=cfg["dataset"]["split_seed"],
            train_fraction=float(cfg["dataset"]["train_fraction"]),
        )
        n_w = sections["network"].n_weights
        for key in ("low", "high"):
            if isinstance(box[key], list):
                _check(len(box[key]) == n_w, f"ensemble.init_box.{key}", f"needs {n_w} entries")
        ens.init_box(n_w)
        sections["ensemble"] = ens
        sections["surrogate"] = KernelConfig(
            jitter=float(sur["jitter"]),
            escalation=float(sur["escalation"]),
            max_escalations=sur["max_escalations"],
            lengthscale=None if lsc is None else tuple(float(v) for v in lsc),
        )
        variance = VarianceConfig(
            z=float(sur["z"]), samples_per_cell=sur["samples_per_cell"], epsilon=float(sur["epsilon"])
        )
    except ValidationError as exc:
        section = next((s for s in ("network", "ensemble", "surrogate") if s not in sections), "surrogate")
        raise ValidationError(f"{section}: {exc}") from None
    if sel["indices"] is not None:
        _check(max(sel["indices"]) < n_w, "selection.indices", f"indices must be < {n_w}")
    else:
        _check(sel["k"] <= n_w, "selection.k", f"must be <= weight count {n_w}")
    return PipelineConfig(
        resolved=cfg,
        net=sections["network"],
        ensemble=sections["ensemble"],
        kernel=sections["surrogate"],
        variance=variance,
    )


def load_config(path: str | Path | None, seed: int | None = None, out: str | None = None) -> PipelineConfig:
    if path is None:
        return resolve_config({}, seed, out)
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return resolve_config(raw, seed, out)
