"""Synthetic sparse-regression datasets and population-error evaluation.

The generator draws ``x ~ N(0, I)`` columns and labels
``y ~ N(<beta*, x>, noise_std**2)`` where ``beta*`` has ``r_star`` nonzero
entries equal to ``1/sqrt(r_star)``.  Sampling uses ``numpy.random.Generator``
backed by PCG64, so outputs are bit-reproducible for a given seed across
platforms.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError

__all__ = [
    "Dataset",
    "gen_sparse_regression",
    "population_error",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class Dataset:
    """A design matrix X (d x N, samples in columns), labels y (N,), and
    optionally the ground-truth regressor plus label-noise variance."""

    X: np.ndarray
    y: np.ndarray
    beta_star: np.ndarray | None = None
    noise_var: float = 0.0
    meta: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.shape[1] != y.shape[0]:
            raise ParameterError(
                f"X has {X.shape[1]} columns but y has {y.shape[0]} entries"
            )
        if self.beta_star is not None:
            b = np.asarray(self.beta_star, dtype=float).ravel()
            object.__setattr__(self, "beta_star", b)
            if b.shape[0] != X.shape[0]:
                raise ParameterError(
                    f"beta_star has length {b.shape[0]}, expected d={X.shape[0]}"
                )
        if self.noise_var < 0:
            raise ParameterError("noise_var must be nonnegative")

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]


def gen_sparse_regression(
    n: int, d: int, r_star: int, noise_std: float, seed: int
) -> Dataset:
    """Draw an n-sample, d-dimensional sparse-regression problem.

    The ground truth puts ``1/sqrt(r_star)`` on the first ``r_star``
    coordinates (a fixed support convention, so runs are comparable across
    seeds).  Identical arguments give bit-identical output.
    """
    if n < 1 or d < 1:
        raise ParameterError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if not 1 <= r_star <= d:
        raise ParameterError(f"need 1 <= r_star <= d, got r_star={r_star}, d={d}")
    if noise_std < 0:
        raise ParameterError("noise_std must be nonnegative")

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((d, n))
    beta = np.zeros(d)
    beta[:r_star] = 1.0 / np.sqrt(r_star)
    y = X.T @ beta
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(n)
    meta = {
        "n": n,
        "d": d,
        "r_star": r_star,
        "noise_std": noise_std,
        "seed": seed,
        "beta_star_support": list(range(r_star)),
    }
    return Dataset(X=X, y=y, beta_star=beta, noise_var=noise_std**2, meta=meta)


def population_error(w: np.ndarray, dataset: Dataset) -> float:
    """Expected squared prediction error of ``w`` on fresh Gaussian inputs.

    For this data model the expectation is available in closed form,
    ``||beta* - w||^2 + noise_var``; no Monte Carlo estimate is involved.
    """
    if dataset.beta_star is None:
        raise ParameterError("population_error requires dataset.beta_star")
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != dataset.d:
        raise ParameterError(f"w has length {w.shape[0]}, expected {dataset.d}")
    diff = dataset.beta_star - w
    return float(diff @ diff + dataset.noise_var)


def _fmt(v: float) -> str:
    return repr(float(v))


def save_dataset(dataset: Dataset, directory: str, stem: str = "dataset") -> dict:
    """Write ``<stem>_X.csv`` (d rows x N columns), ``<stem>_y.csv`` (one
    column) and a JSON sidecar with the generation parameters."""
    os.makedirs(directory, exist_ok=True)
    paths = {
        "X": os.path.join(directory, f"{stem}_X.csv"),
        "y": os.path.join(directory, f"{stem}_y.csv"),
        "meta": os.path.join(directory, f"{stem}_meta.json"),
    }
    with open(paths["X"], "w") as fh:
        for row in dataset.X:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    with open(paths["y"], "w") as fh:
        for v in dataset.y:
            fh.write(_fmt(v) + "\n")
    meta = dict(dataset.meta or {})
    meta.setdefault("n", dataset.n)
    meta.setdefault("d", dataset.d)
    meta["noise_var"] = dataset.noise_var
    with open(paths["meta"], "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def load_dataset(directory: str, stem: str = "dataset") -> Dataset:
    """Inverse of :func:`save_dataset` (lossless at binary64 precision)."""
    X = np.loadtxt(os.path.join(directory, f"{stem}_X.csv"), delimiter=",", ndmin=2)
    y = np.loadtxt(os.path.join(directory, f"{stem}_y.csv"), delimiter=",", ndmin=1)
    with open(os.path.join(directory, f"{stem}_meta.json")) as fh:
        meta = json.load(fh)
    beta = None
    if "r_star" in meta and "d" in meta:
        beta = np.zeros(int(meta["d"]))
        support = meta.get("beta_star_support", list(range(int(meta["r_star"]))))
        beta[np.asarray(support, dtype=int)] = 1.0 / np.sqrt(len(support))
    return Dataset(
        X=X, y=y, beta_star=beta, noise_var=float(meta.get("noise_var", 0.0)), meta=meta
    )
