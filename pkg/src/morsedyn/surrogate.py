"""Gaussian-process surrogate of a sampled map and its variance-inflated cell images.

Each output coordinate gets an independent zero-mean-residual GP with a
squared-exponential kernel over the shared inputs::

    k(x, x') = s2 * exp(-0.5 * sum_i ((x_i - x'_i) / ell_i) ** 2)

Hyperparameters are fixed from the data, never optimised: ``ell_i`` is the
median pairwise distance of the inputs along axis ``i``, ``s2`` the variance of
the outputs of that coordinate, and the noise variance a relative jitter times
``s2``.  Because every coordinate shares the correlation matrix ``R`` and the
relative jitter, one Cholesky factor of ``R + jitter * I`` serves all of them.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from morsedyn.errors import NumericalError, ValidationError
from morsedyn.grid import Box

__all__ = [
    "SamplePair",
    "KernelConfig",
    "VarianceConfig",
    "SurrogateModel",
    "fit",
    "image_box",
    "cell_samples",
    "loo_coverage",
    "read_pairs_csv",
    "write_pairs_csv",
]


@dataclass(frozen=True)
class SamplePair:
    input: tuple[float, ...]
    output: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.input) != len(self.output):
            raise ValidationError(
                f"pair input/output dimensions differ: {len(self.input)} vs {len(self.output)}"
            )


@dataclass(frozen=True)
class KernelConfig:
    """Deterministic kernel settings.

    ``jitter`` is relative: the noise variance of coordinate j is
    ``jitter * s2_j``.  On Cholesky failure it is multiplied by
    ``escalation`` up to ``max_escalations`` times.
    """

    jitter: float = 1e-6
    escalation: float = 10.0
    max_escalations: int = 6
    lengthscale: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.jitter > 0:
            raise ValidationError("jitter must be positive")
        if self.escalation <= 1 or self.max_escalations < 0:
            raise ValidationError("escalation must exceed 1 and max_escalations be >= 0")
        if self.lengthscale is not None and any(not v > 0 for v in self.lengthscale):
            raise ValidationError("lengthscales must be positive")


@dataclass(frozen=True)
class VarianceConfig:
    """How a cell's image box is formed: ``z`` standard deviations around the
    posterior mean at ``samples_per_cell`` points, then relative inflation."""

    z: float = 2.0
    samples_per_cell: int | None = None
    epsilon: float = 1e-9

    def __post_init__(self) -> None:
        if not self.z >= 0:
            raise ValidationError("z must be non-negative")
        if self.samples_per_cell is not None and self.samples_per_cell < 1:
            raise ValidationError("samples_per_cell must be >= 1")
        if not self.epsilon >= 0:
            raise ValidationError("epsilon must be non-negative")

    def n_samples(self, dim: int) -> int:
        if self.samples_per_cell is not None:
            return self.samples_per_cell
        return min(2**dim + 3**dim, 64)


def _as_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2 and not isinstance(pairs[0], SamplePair):
        x, y = (np.asarray(a, dtype=float) for a in pairs)
    else:
        pairs = list(pairs)
        if not pairs:
            raise ValidationError("no sample pairs")
        dims = {(len(p.input), len(p.output)) for p in pairs}
        if len(dims) != 1:
            raise ValidationError(f"inconsistent pair dimensions: {sorted(dims)}")
        x = np.array([p.input for p in pairs], dtype=float)
        y = np.array([p.output for p in pairs], dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    return x, y


def _median_lengthscales(x: np.ndarray) -> np.ndarray:
    n, d = x.shape
    iu = np.triu_indices(n, k=1)
    out = np.empty(d)
    for a in range(d):
        dist = np.abs(x[:, a][:, None] - x[:, a][None, :])[iu]
        med = float(np.median(dist))
        if med <= 0:
            positive = dist[dist > 0]
            med = float(np.median(positive)) if positive.size else 1.0
        out[a] = med
    return out


def _correlation(a: np.ndarray, b: np.ndarray, ell: np.ndarray) -> np.ndarray:
    diff = (a[:, None, :] - b[None, :, :]) / ell
    return np.exp(-0.5 * np.sum(diff * diff, axis=2))


@dataclass
class SurrogateModel:
    """Fitted per-coordinate GP.  Treat as immutable once built."""

    inputs: np.ndarray
    lengthscale: np.ndarray
    signal_variance: np.ndarray
    jitter: float
    prior_mean: np.ndarray
    dual_weights: np.ndarray
    _chol: np.ndarray = field(repr=False)

    @property
    def dim_in(self) -> int:
        return self.inputs.shape[1]

    @property
    def dim_out(self) -> int:
        return self.prior_mean.shape[0]

    @property
    def noise_variance(self) -> np.ndarray:
        return self.jitter * self.signal_variance

    def predict_many(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and standard deviations at query rows, shape ``(m, d_out)``."""
        q = np.asarray(x, dtype=float)
        if q.ndim == 1:
            q = q[None, :]
        if q.shape[1] != self.dim_in:
            raise ValidationError(f"query has dimension {q.shape[1]}, model expects {self.dim_in}")
        r = _correlation(q, self.inputs, self.lengthscale)
        mean = self.prior_mean + r @ self.dual_weights
        v = solve_triangular(self._chol, r.T, lower=True, check_finite=False)
        reduction = np.sum(v * v, axis=0)
        rel_var = np.maximum(1.0 + self.jitter - reduction, 0.0)
        std = np.sqrt(rel_var[:, None] * self.signal_variance[None, :])
        return mean, std

    def predict(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        mean, std = self.predict_many(np.asarray(x, dtype=float)[None, :])
        return mean[0], std[0]

    def mean_map(self, x: np.ndarray) -> np.ndarray:
        """Posterior mean as a point map on rows of ``x``."""
        return self.predict_many(x)[0]

    def coverage(self, x: np.ndarray, y: np.ndarray, z: float) -> float:
        """Fraction of rows whose every output coordinate lies within mean +- z*std."""
        mean, std = self.predict_many(x)
        y = np.asarray(y, dtype=float).reshape(mean.shape)
        inside = np.all(np.abs(y - mean) <= z * std, axis=1)
        return float(inside.mean())

    # -------------------------------------------------------- serialisation
    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs.tolist(),
            "lengthscale": self.lengthscale.tolist(),
            "signal_variance": self.signal_variance.tolist(),
            "jitter": self.jitter,
            "noise_variance": self.noise_variance.tolist(),
            "prior_mean": self.prior_mean.tolist(),
            "dual_weights": self.dual_weights.T.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogateModel":
        inputs = np.asarray(data["inputs"], dtype=float)
        ell = np.asarray(data["lengthscale"], dtype=float)
        jitter = float(data["jitter"])
        r = _correlation(inputs, inputs, ell)
        chol = cholesky(r + jitter * np.eye(len(inputs)), lower=True)
        return cls(
            inputs=inputs,
            lengthscale=ell,
            signal_variance=np.asarray(data["signal_variance"], dtype=float),
            jitter=jitter,
            prior_mean=np.asarray(data["prior_mean"], dtype=float),
            dual_weights=np.asarray(data["dual_weights"], dtype=float).T,
            _chol=chol,
        )


def fit(pairs, config: KernelConfig | None = None) -> SurrogateModel:
    """Fit the surrogate to ``pairs``.

    ``pairs`` is a sequence of :class:`SamplePair` or an ``(inputs, outputs)``
    tuple of arrays.
    """
    config = config or KernelConfig()
    x, y = _as_arrays(pairs)
    n, d = x.shape
    if n < 2:
        raise ValidationError("fit needs at least 2 pairs")
    if y.shape[0] != n:
        raise ValidationError("inputs and outputs differ in length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("pairs contain non-finite values")
    if np.all(x == x[0]):
        raise ValidationError("training inputs are all identical")

    if config.lengthscale is not None:
        ell = np.asarray(config.lengthscale, dtype=float)
        if ell.shape != (d,):
            raise ValidationError(f"need {d} lengthscales, got {ell.shape[0]}")
    else:
        ell = _median_lengthscales(x)
    prior = y.mean(axis=0)
    s2 = y.var(axis=0)
    corr = _correlation(x, x, ell)

    jitter = config.jitter
    for _ in range(config.max_escalations + 1):
        try:
            chol = cholesky(corr + jitter * np.eye(n), lower=True, check_finite=False)
            break
        except np.linalg.LinAlgError:
            jitter *= config.escalation
    else:
        raise NumericalError(f"Cholesky failed up to relative jitter {jitter / config.escalation:g}")

    alpha = cho_solve((chol, True), y - prior, check_finite=False)
    return SurrogateModel(
        inputs=x,
        lengthscale=ell,
        signal_variance=s2,
        jitter=jitter,
        prior_mean=prior,
        dual_weights=alpha,
        _chol=chol,
    )


def loo_coverage(pairs, z: float, config: KernelConfig | None = None) -> float:
    """Leave-one-out interval coverage: refit without pair ``i``, check pair ``i`` is within ``z`` sigma."""
    x, y = _as_arrays(pairs)
    if len(x) < 3:
        raise ValidationError("leave-one-out coverage needs at least 3 pairs")
    hits = 0
    for i in range(len(x)):
        keep = np.arange(len(x)) != i
        model = fit((x[keep], y[keep]), config)
        hits += model.coverage(x[i : i + 1], y[i : i + 1], z) == 1.0
    return hits / len(x)


def cell_samples(cell: Box, n: int) -> np.ndarray:
    """Deterministic sample points in ``cell``.

    With ``n >= 2**d``: all corners plus the largest regular interior lattice
    ``m**d <= n - 2**d`` at fractions ``k / (m + 1)``.  Otherwise the centre
    plus the first ``n - 1`` corners.
    """
    d = cell.dim
    lo, ext = np.asarray(cell.lower), cell.extent
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
    if n >= 2**d:
        rest = n - 2**d
        m = int(math.floor(rest ** (1.0 / d) + 1e-9)) if rest > 0 else 0
        while m > 0 and m**d > rest:
            m -= 1
        fracs = [corners]
        if m > 0:
            ticks = np.arange(1, m + 1) / (m + 1)
            fracs.append(np.array(list(itertools.product(ticks, repeat=d))))
        unit = np.vstack(fracs)
    else:
        unit = np.vstack([np.full((1, d), 0.5), corners[: n - 1]])
    return lo + unit * ext


def image_box(model: SurrogateModel, cell: Box, cfg: VarianceConfig | None = None) -> Box:
    """Bounding box of the ``z``-sigma intervals at the cell's sample points, inflated."""
    cfg = cfg or VarianceConfig()
    pts = cell_samples(cell, cfg.n_samples(cell.dim))
    mean, std = model.predict_many(pts)
    lo = np.min(mean - cfg.z * std, axis=0)
    hi = np.max(mean + cfg.z * std, axis=0)
    pad = cfg.epsilon * (hi - lo)
    return Box.from_arrays(lo - pad, hi + pad)


def read_pairs_csv(path: str | Path) -> list[SamplePair]:
    """Read ``x_1..x_d, y_1..y_d`` columns (header required)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty pair file") from None
        if len(header) % 2 or not header:
            raise ValidationError(f"{path}: expected an even number of columns, got {len(header)}")
        d = len(header) // 2
        expected = [f"x_{i + 1}" for i in range(d)] + [f"y_{i + 1}" for i in range(d)]
        if [h.strip() for h in header] != expected:
            raise ValidationError(f"{path}: header must be {','.join(expected)}")
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 * d:
                raise ValidationError(f"{path}:{lineno}: expected {2 * d} fields")
            vals = [float(v) for v in row]
            pairs.append(SamplePair(tuple(vals[:d]), tuple(vals[d:])))
    return pairs


def write_pairs_csv(path: str | Path, pairs: Iterable[SamplePair]) -> None:
    pairs = list(pairs)
    d = len(pairs[0].input) if pairs else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x_{i + 1}" for i in range(d)] + [f"y_{i + 1}" for i in range(d)])
        for p in pairs:
            w.writerow([repr(float(v)) for v in (*p.input, *p.output)])
