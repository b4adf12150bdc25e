"""The three model families: diagonal nets, fully connected linear nets, and a
single leaky-ReLU neuron.

Each family exposes the square loss, its analytic gradient, the effective
linear predictor (the vector ``w`` with ``f(x) = w @ x`` whatever the internal
parameterization), the quantities conserved along exact gradient flow, and
initialization builders in (scale, shape, orientation) coordinates.

The residual convention is ``r_n = (y_n - f_n) / N`` throughout, so that the
gradient returned here is exactly the gradient of ``loss`` and the flow is
``d(theta)/dt = -gradient``.  Any positive rescaling of ``r`` is only a time
reparameterization and leaves limit points unchanged.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import singledispatch

import numpy as np

from .data import Dataset
from .exceptions import ParameterError

__all__ = [
    "DiagonalParams",
    "FcParams",
    "LeakyParams",
    "InitShapeScale",
    "ConservedDiag",
    "ConservedFc",
    "predictor",
    "loss_and_residual",
    "gradient",
    "conserved",
    "init_from_shape_scale",
    "uv_to_shape_scale",
    "balanced_multi_init",
    "params_to_json",
    "params_from_json",
]


# ---------------------------------------------------------------------------
# parameter records


@dataclass(frozen=True)
class DiagonalParams:
    """Diagonal net with untied layers; the predictor is
    ``u_plus*v_plus - u_minus*v_minus`` coordinatewise."""

    u_plus: np.ndarray
    u_minus: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray

    def __post_init__(self):
        for name in ("u_plus", "u_minus", "v_plus", "v_minus"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float).ravel())
        d = self.u_plus.shape[0]
        if any(getattr(self, n).shape[0] != d for n in ("u_minus", "v_plus", "v_minus")):
            raise ParameterError("all four diagonal vectors must share one length")

    @property
    def d(self) -> int:
        return self.u_plus.shape[0]


@dataclass(frozen=True)
class FcParams:
    """Two-layer linear net: output weights a (m,), hidden columns W (d, m)."""

    a: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, float).ravel())
        W = np.asarray(self.W, float)
        if W.ndim == 1:
            W = W[:, None]
        object.__setattr__(self, "W", W)
        if self.W.shape[1] != self.a.shape[0] or self.a.shape[0] < 1:
            raise ParameterError(
                f"W has {self.W.shape[1]} columns but a has {self.a.shape[0]} entries"
            )

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class LeakyParams:
    """Single hidden neuron with leaky-ReLU activation max(t, rho*t)."""

    a: float
    w: np.ndarray
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "w", np.asarray(self.w, float).ravel())
        object.__setattr__(self, "rho", float(self.rho))
        if self.rho <= 0:
            raise ParameterError(f"leaky slope must be positive, got rho={self.rho}")
        if self.a == 0.0 and not np.any(self.w):
            raise ParameterError("(a, w) must not both be zero")

    @property
    def d(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class InitShapeScale:
    """Initialization coordinates: scale alpha > 0, shape |s| < 1, and (for
    the fully connected families) a unit orientation vector."""

    alpha: float
    shape: float
    orientation: np.ndarray | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if not abs(self.shape) < 1:
            raise ParameterError(f"|shape| must be < 1, got {self.shape}")
        if self.orientation is not None:
            u = np.asarray(self.orientation, float).ravel()
            if abs(np.linalg.norm(u) - 1.0) > 1e-12:
                raise ParameterError("orientation must have unit norm (tol 1e-12)")
            object.__setattr__(self, "orientation", u)


@dataclass(frozen=True)
class ConservedDiag:
    """Per-coordinate invariants of the diagonal flow: c = u+u- + v+v-, and
    the two layer imbalances v**2 - u**2."""

    c: np.ndarray
    delta_plus: np.ndarray
    delta_minus: np.ndarray

    def as_groups(self) -> dict[str, np.ndarray]:
        return {"c": self.c, "delta_plus": self.delta_plus, "delta_minus": self.delta_minus}


@dataclass(frozen=True)
class ConservedFc:
    """Balancedness invariants of the linear fc flow: per-neuron
    delta_i = a_i**2 - ||w_i||**2 and the matrix a a^T - W^T W."""

    delta: np.ndarray
    Delta: np.ndarray

    def as_groups(self) -> dict[str, np.ndarray]:
        return {"delta": self.delta, "Delta": self.Delta}


# ---------------------------------------------------------------------------
# predictor / loss / gradient


@singledispatch
def predictor(params) -> np.ndarray:
    """Effective linear predictor w with f(x) = w @ x."""
    raise ParameterError(f"unsupported parameter record {type(params).__name__}")


@predictor.register
def _(params: DiagonalParams) -> np.ndarray:
    return params.u_plus * params.v_plus - params.u_minus * params.v_minus


@predictor.register
def _(params: FcParams) -> np.ndarray:
    return params.W @ params.a


@predictor.register
def _(params: LeakyParams) -> np.ndarray:
    # Only meaningful for rho=1 (identity activation); used for the linear
    # specialization checks.  The leaky model itself is not linear in x.
    return params.a * params.w


def _forward(params, dataset: Dataset) -> np.ndarray:
    if isinstance(params, LeakyParams):
        z = dataset.X.T @ params.w
        return params.a * np.maximum(z, params.rho * z)
    return dataset.X.T @ predictor(params)


def loss_and_residual(params, dataset: Dataset) -> tuple[float, np.ndarray]:
    """Square loss (1/2N) sum (y_n - f_n)^2 and residual r_n = (y_n - f_n)/N."""
    if params.d != dataset.d:
        raise ParameterError(
            f"params have d={params.d} but dataset has d={dataset.d}"
        )
    f = _forward(params, dataset)
    diff = dataset.y - f
    n = dataset.n
    return float(diff @ diff / (2 * n)), diff / n


@singledispatch
def gradient(params, dataset: Dataset):
    """Analytic loss gradient, shaped like ``params``.

    The flow integrates ``d(theta)/dt = -gradient(theta)``.
    """
    raise ParameterError(f"unsupported parameter record {type(params).__name__}")


@gradient.register
def _(params: DiagonalParams, dataset: Dataset) -> DiagonalParams:
    _, r = loss_and_residual(params, dataset)
    s = dataset.X @ r
    return DiagonalParams(
        u_plus=-params.v_plus * s,
        u_minus=params.v_minus * s,
        v_plus=-params.u_plus * s,
        v_minus=params.u_minus * s,
    )


@gradient.register
def _(params: FcParams, dataset: Dataset) -> FcParams:
    _, r = loss_and_residual(params, dataset)
    s = dataset.X @ r
    return FcParams(a=-(params.W.T @ s), W=-np.outer(s, params.a))


@gradient.register
def _(params: LeakyParams, dataset: Dataset) -> LeakyParams:
    _, r = loss_and_residual(params, dataset)
    z = dataset.X.T @ params.w
    # slope of the activation per sample; the kink z == 0 uses slope 1, an
    # event of measure zero along the flow
    c = np.where(z >= 0, 1.0, params.rho)
    s = dataset.X @ (c * r)
    return LeakyParams(a=-(params.w @ s), w=-params.a * s, rho=params.rho)


# ---------------------------------------------------------------------------
# conserved quantities


@singledispatch
def conserved(params):
    """Quantities constant along exact gradient flow, evaluated at params."""
    raise ParameterError(f"unsupported parameter record {type(params).__name__}")


@conserved.register
def _(params: DiagonalParams) -> ConservedDiag:
    return ConservedDiag(
        c=params.u_plus * params.u_minus + params.v_plus * params.v_minus,
        delta_plus=params.v_plus**2 - params.u_plus**2,
        delta_minus=params.v_minus**2 - params.u_minus**2,
    )


@conserved.register
def _(params: FcParams) -> ConservedFc:
    delta = params.a**2 - np.sum(params.W**2, axis=0)
    Delta = np.outer(params.a, params.a) - params.W.T @ params.W
    return ConservedFc(delta=delta, Delta=Delta)


@conserved.register
def _(params: LeakyParams) -> ConservedFc:
    delta = np.array([params.a**2 - params.w @ params.w])
    return ConservedFc(delta=delta, Delta=delta.reshape(1, 1))


# ---------------------------------------------------------------------------
# initialization builders


def _layer_norms(alpha: float, s: float) -> tuple[float, float]:
    # inner-layer magnitude, outer-layer magnitude
    lo = np.sqrt(alpha * (1 - s) / (1 + s))
    hi = np.sqrt(alpha * (1 + s) / (1 - s))
    return float(lo), float(hi)


def init_from_shape_scale(
    spec: InitShapeScale, family: str, d: int | None = None, rho: float = 1.0
):
    """Build parameters at a prescribed scale/shape.

    * ``diagonal``: unbiased per-coordinate build (u+ = u-, v+ = v-), so the
      predictor starts at zero; requires ``d``.
    * ``fc_single`` / ``leaky``: single neuron with w(0) along the given
      orientation and a(0) >= 0, so the initial predictor is
      alpha * orientation.

    Negative shapes are permitted for the fc families but fall outside the
    scope of the single-neuron guarantees (imbalance delta < 0); a warning
    tags such builds.
    """
    alpha, s = spec.alpha, spec.shape
    if family == "diagonal":
        if d is None:
            raise ParameterError("diagonal init needs an explicit dimension d")
        u, v = _layer_norms(alpha, s)
        ones = np.ones(d)
        return DiagonalParams(
            u_plus=u * ones, u_minus=u * ones, v_plus=v * ones, v_minus=v * ones
        )
    if family in ("fc_single", "leaky"):
        if spec.orientation is None:
            raise ParameterError(f"{family} init needs an orientation vector")
        if s < 0:
            warnings.warn(
                "shape < 0 gives imbalance delta < 0: outside theorem scope",
                stacklevel=2,
            )
        wn, an = _layer_norms(alpha, s)
        w0 = wn * spec.orientation
        if family == "fc_single":
            return FcParams(a=np.array([an]), W=w0[:, None])
        return LeakyParams(a=an, w=w0, rho=rho)
    raise ParameterError(f"unknown family {family!r}")


def uv_to_shape_scale(params):
    """Recover (alpha, shape) from built parameters.

    Returns per-coordinate arrays for diagonal records and scalars for the
    single-neuron families.
    """
    if isinstance(params, DiagonalParams):
        u, v = np.abs(params.u_plus), np.abs(params.v_plus)
        return u * v, (v - u) / (v + u)
    if isinstance(params, FcParams):
        if params.m != 1:
            raise ParameterError("shape/scale recovery is per neuron; need m=1")
        an, wn = abs(float(params.a[0])), float(np.linalg.norm(params.W[:, 0]))
    elif isinstance(params, LeakyParams):
        an, wn = abs(params.a), float(np.linalg.norm(params.w))
    else:
        raise ParameterError(f"unsupported parameter record {type(params).__name__}")
    return an * wn, (an - wn) / (an + wn)


def balanced_multi_init(a: np.ndarray, c: np.ndarray) -> FcParams:
    """Strictly balanced multi-neuron build: W = c a^T, so a a^T = W^T W
    exactly and the initial predictor is ||a||^2 c."""
    a = np.asarray(a, float).ravel()
    c = np.asarray(c, float).ravel()
    if not np.any(a):
        raise ParameterError("a must be nonzero")
    if abs(np.linalg.norm(c) - 1.0) > 1e-12:
        raise ParameterError("c must have unit norm (tol 1e-12)")
    return FcParams(a=a, W=np.outer(c, a))


# ---------------------------------------------------------------------------
# serialization


def params_to_json(params) -> str:
    """Lossless JSON encoding (17-significant-digit floats)."""
    if isinstance(params, DiagonalParams):
        payload = {
            "family": "diagonal",
            "u_plus": params.u_plus.tolist(),
            "u_minus": params.u_minus.tolist(),
            "v_plus": params.v_plus.tolist(),
            "v_minus": params.v_minus.tolist(),
        }
    elif isinstance(params, FcParams):
        payload = {"family": "fc", "a": params.a.tolist(), "W": params.W.tolist()}
    elif isinstance(params, LeakyParams):
        payload = {
            "family": "leaky",
            "a": params.a,
            "w": params.w.tolist(),
            "rho": params.rho,
        }
    else:
        raise ParameterError(f"unsupported parameter record {type(params).__name__}")
    return json.dumps(payload, sort_keys=True)


def params_from_json(text: str):
    payload = json.loads(text)
    family = payload.get("family")
    if family == "diagonal":
        return DiagonalParams(
            u_plus=payload["u_plus"],
            u_minus=payload["u_minus"],
            v_plus=payload["v_plus"],
            v_minus=payload["v_minus"],
        )
    if family == "fc":
        return FcParams(a=payload["a"], W=payload["W"])
    if family == "leaky":
        return LeakyParams(a=payload["a"], w=payload["w"], rho=payload["rho"])
    raise ParameterError(f"unknown family {family!r}")
