"""Closed-form implicit regularizers, their gradients and inverse-gradient
maps, shape/scale algebra, and the kernel/rich/vanishing-initialization limit
forms.

Two scalar building blocks appear throughout.  For the diagonal family,

    qk(x) = (sqrt(k)/4) * [1 - sqrt(1 + 4x^2/k) + (2x/sqrt(k)) asinh(2x/sqrt(k))]

with derivative ``asinh(2x/sqrt(k)) / 2`` and inverse map
``x(g) = (sqrt(k)/2) sinh(2g)``.  For the single-neuron radial family, with
``R(x) = sqrt(x^2 + delta^2/4)``, the closed-form potential is

    qhat(x) = (R - delta) * sqrt(R + delta/2)

(an exact algebraic rewrite of the quotient form
``(x^2 - (delta/2)(delta/2 + R)) sqrt(R - delta/2) / x``, stable at x = 0).
Its derivative is ``(3/2) * phi(x)`` where ``phi(x) = x / sqrt(R + delta/2)``
equals ``sqrt(R - delta/2)``; the function exposed as ``derivative`` below is
``phi`` itself, the normalization whose inverse is ``r(m) = sqrt(m^4 +
delta m^2)`` and which the constrained solvers invert.  The factor 3/2 is a
fixed constant, so both normalizations define the same constrained minimizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import OverflowGuardError, ParameterError
from .models import DiagonalParams

__all__ = [
    "qk",
    "qk_grad_inverse",
    "k_from_init",
    "ShapeScale",
    "shape_scale_algebra",
    "qhat_radial",
    "qhat_radial_inverse",
    "radial_linear_anchor",
    "DiagonalQ",
    "RadialQ",
    "L1",
    "L2",
    "WeightedL2",
    "MahalanobisAboutInit",
    "RegularizerSpec",
    "q_eval",
    "weighted_l2_from_init",
    "mahalanobis_B",
    "rkhs_norm",
    "spec_to_json",
    "spec_from_json",
]

# binary64 sinh overflows near an argument of 710; dual points are rejected
# before 2*g reaches 700
SINH_GUARD = 350.0


class ScalarEval(NamedTuple):
    value: float | np.ndarray
    gradient: float | np.ndarray


class QEval(NamedTuple):
    value: float
    gradient: np.ndarray


# ---------------------------------------------------------------------------
# diagonal scalar potential


def qk(x, k) -> ScalarEval:
    """Value and derivative of the diagonal-family scalar potential."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ParameterError("k must be positive")
    rk = np.sqrt(k)
    t = 2.0 * x / rk
    value = (rk / 4.0) * (1.0 - np.sqrt(1.0 + t * t) + t * np.arcsinh(t))
    grad = 0.5 * np.arcsinh(t)
    if value.ndim == 0:
        return ScalarEval(float(value), float(grad))
    return ScalarEval(value, grad)


def qk_grad_inverse(g, k):
    """Inverse of the qk derivative: the dual point g maps to
    (sqrt(k)/2) sinh(2 g)."""
    g = np.asarray(g, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ParameterError("k must be positive")
    if np.any(np.abs(g) > SINH_GUARD):
        worst = float(np.max(np.abs(g)))
        raise OverflowGuardError(
            f"dual point |g|={worst:.3g} exceeds the sinh overflow guard ({SINH_GUARD:g})"
        )
    out = 0.5 * np.sqrt(k) * np.sinh(2.0 * g)
    return float(out) if out.ndim == 0 else out


def k_from_init(params0: DiagonalParams) -> np.ndarray:
    """Per-coordinate k from an initialization:
    k_i = (delta_plus_i - delta_minus_i)^2 + 4 c_i^2.

    For unbiased builds this equals [2(u_i^2 + v_i^2)]^2.
    """
    dp = params0.v_plus**2 - params0.u_plus**2
    dm = params0.v_minus**2 - params0.u_minus**2
    c = params0.u_plus * params0.u_minus + params0.v_plus * params0.v_minus
    return (dp - dm) ** 2 + 4.0 * c**2


# ---------------------------------------------------------------------------
# shape/scale algebra


@dataclass(frozen=True)
class ShapeScale:
    alpha: float
    s: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if not abs(self.s) < 1:
            raise ParameterError(f"|s| must be < 1, got {self.s}")


@dataclass(frozen=True)
class ShapeScaleAlgebra:
    """The quantities the (alpha, s) coordinates determine:

    khat        = alpha / (1 - s^2)       regime-controlling factor
    delta       = 4 alpha s / (1 - s^2)   layer imbalance
    sqrt_combo  = sqrt(alpha^2 + delta^2/4) = alpha (1 + s^2) / (1 - s^2)
    minus_branch = sqrt_combo - delta/2     = alpha (1 - s) / (1 + s)
    plus_branch  = sqrt_combo + delta/2     = alpha (1 + s) / (1 - s)
    """

    khat: float
    delta: float
    sqrt_combo: float
    minus_branch: float
    plus_branch: float


def shape_scale_algebra(alpha: float, s: float) -> ShapeScaleAlgebra:
    ss = ShapeScale(alpha, s)
    one = 1.0 - ss.s * ss.s
    return ShapeScaleAlgebra(
        khat=ss.alpha / one,
        delta=4.0 * ss.alpha * ss.s / one,
        sqrt_combo=ss.alpha * (1.0 + ss.s * ss.s) / one,
        minus_branch=ss.alpha * (1.0 - ss.s) / (1.0 + ss.s),
        plus_branch=ss.alpha * (1.0 + ss.s) / (1.0 - ss.s),
    )


# ---------------------------------------------------------------------------
# single-neuron radial potential


def _radial_R(x, delta):
    return np.sqrt(np.square(x) + 0.25 * delta * delta)


def qhat_radial(x, delta) -> ScalarEval:
    """Radial potential of the single-neuron family.

    Returns the closed-form value ``(R - delta) sqrt(R + delta/2)`` (which is
    ``x**1.5`` when delta = 0) and the strictly increasing normalized
    derivative ``phi(x) = x / sqrt(R + delta/2)``.  The value's actual slope
    is ``1.5 * phi``; see the module docstring for why both normalizations
    are carried.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or delta < 0:
        raise ParameterError("qhat_radial needs x >= 0 and delta >= 0")
    R = _radial_R(x, delta)
    plus = np.sqrt(R + 0.5 * delta)
    value = (R - delta) * plus
    with np.errstate(invalid="ignore", divide="ignore"):
        deriv = np.where(plus > 0, x / np.where(plus > 0, plus, 1.0), 0.0)
    if value.ndim == 0:
        return ScalarEval(float(value), float(deriv))
    return ScalarEval(value, deriv)


def qhat_radial_inverse(m, delta):
    """Inverse of the normalized radial derivative: r(m) = sqrt(m^4 + delta m^2)."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0) or delta < 0:
        raise ParameterError("qhat_radial_inverse needs m >= 0 and delta >= 0")
    out = m * np.sqrt(m * m + delta)
    return float(out) if out.ndim == 0 else out


def radial_linear_anchor(delta: float, wtilde0: np.ndarray) -> np.ndarray:
    """The fixed linear-term vector z that makes the radial regularizer's
    gradient vanish at the initial predictor:
    z = -(3/2) sqrt(R(||w0||) - delta/2) * w0 / ||w0||.
    """
    wtilde0 = np.asarray(wtilde0, dtype=float).ravel()
    norm0 = np.linalg.norm(wtilde0)
    if norm0 == 0:
        raise ParameterError("wtilde0 must be nonzero")
    phi0 = qhat_radial(norm0, delta).gradient
    return -1.5 * phi0 * wtilde0 / norm0


# ---------------------------------------------------------------------------
# regularizer specs


@dataclass(frozen=True)
class DiagonalQ:
    k: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float).ravel()
        object.__setattr__(self, "k", k)
        if np.any(k <= 0):
            raise ParameterError("all k entries must be positive")


@dataclass(frozen=True)
class RadialQ:
    delta: float
    wtilde0: np.ndarray

    def __post_init__(self):
        w0 = np.asarray(self.wtilde0, dtype=float).ravel()
        object.__setattr__(self, "wtilde0", w0)
        if self.delta < 0:
            raise ParameterError("delta must be nonnegative")
        if not np.any(w0):
            raise ParameterError("wtilde0 must be nonzero")

    @property
    def z(self) -> np.ndarray:
        return radial_linear_anchor(self.delta, self.wtilde0)


@dataclass(frozen=True)
class L1:
    pass


@dataclass(frozen=True)
class L2:
    pass


@dataclass(frozen=True)
class WeightedL2:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "weights", w)
        if np.any(w <= 0):
            raise ParameterError("weights must be positive")


@dataclass(frozen=True)
class MahalanobisAboutInit:
    B: np.ndarray
    wtilde0: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        w0 = np.asarray(self.wtilde0, dtype=float).ravel()
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "wtilde0", w0)
        if B.shape != (w0.shape[0], w0.shape[0]):
            raise ParameterError("B must be square with the dimension of wtilde0")
        if not np.allclose(B, B.T, atol=1e-12):
            raise ParameterError("B must be symmetric")
        try:
            np.linalg.cholesky(B)
        except np.linalg.LinAlgError as exc:
            raise ParameterError("B must be positive definite") from exc


RegularizerSpec = Union[DiagonalQ, RadialQ, L1, L2, WeightedL2, MahalanobisAboutInit]


def q_eval(spec: RegularizerSpec, w: np.ndarray) -> QEval:
    """Value and gradient of the chosen regularizer at w.

    For RadialQ the gradient is ``1.5 * phi(||w||) w/||w|| + z``, which
    vanishes at ``w = wtilde0`` by construction of z; at w = 0 the limit of
    that expression is z itself.  For L1 the gradient is the sign subgradient
    (zero on zero coordinates).
    """
    w = np.asarray(w, dtype=float).ravel()
    if isinstance(spec, DiagonalQ):
        if w.shape != spec.k.shape:
            raise ParameterError("w and k dimensions differ")
        value, grad = qk(w, spec.k)
        return QEval(float(np.sum(value)), np.asarray(grad))
    if isinstance(spec, RadialQ):
        if w.shape != spec.wtilde0.shape:
            raise ParameterError("w and wtilde0 dimensions differ")
        norm = np.linalg.norm(w)
        z = spec.z
        val = qhat_radial(norm, spec.delta).value + z @ w
        plus = np.sqrt(_radial_R(norm, spec.delta) + 0.5 * spec.delta)
        if plus == 0.0:
            # only reachable for delta = 0 at w = 0, where the radial slope
            # vanishes anyway
            return QEval(float(val), z.copy())
        return QEval(float(val), 1.5 * w / plus + z)
    if isinstance(spec, L1):
        return QEval(float(np.sum(np.abs(w))), np.sign(w))
    if isinstance(spec, L2):
        return QEval(float(w @ w), 2.0 * w)
    if isinstance(spec, WeightedL2):
        if w.shape != spec.weights.shape:
            raise ParameterError("w and weights dimensions differ")
        return QEval(float(spec.weights @ (w * w)), 2.0 * spec.weights * w)
    if isinstance(spec, MahalanobisAboutInit):
        if w.shape != spec.wtilde0.shape:
            raise ParameterError("w and wtilde0 dimensions differ")
        diff = w - spec.wtilde0
        Bd = spec.B @ diff
        return QEval(float(diff @ Bd), 2.0 * Bd)
    raise ParameterError(f"unsupported regularizer {type(spec).__name__}")


def weighted_l2_from_init(params0: DiagonalParams) -> WeightedL2:
    """The large-k limit of the diagonal regularizer: coordinate weights
    1 / (2 (u_i^2 + v_i^2)) taken at initialization."""
    denom = 2.0 * (params0.u_plus**2 + params0.v_plus**2)
    if np.any(denom <= 0):
        raise ParameterError("degenerate initialization: u and v vanish somewhere")
    return WeightedL2(weights=1.0 / denom)


def mahalanobis_B(s: float, u: np.ndarray) -> np.ndarray:
    """Large-scale limit metric B = I - (1-s)^2 / (2 (1+s^2)) u u^T for a unit
    orientation u.  (s = 1 is allowed and gives the identity.)"""
    u = np.asarray(u, dtype=float).ravel()
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ParameterError("orientation must have unit norm")
    coef = (1.0 - s) ** 2 / (2.0 * (1.0 + s * s))
    return np.eye(u.shape[0]) - coef * np.outer(u, u)


def rkhs_norm(w: np.ndarray, A: np.ndarray) -> float:
    """w^T A^{-1} w for symmetric positive definite A, via Cholesky."""
    w = np.asarray(w, dtype=float).ravel()
    A = np.asarray(A, dtype=float)
    factor = cho_factor(A, lower=True)
    return float(w @ cho_solve(factor, w))


# ---------------------------------------------------------------------------
# serialization


def spec_to_json(spec: RegularizerSpec) -> str:
    if isinstance(spec, DiagonalQ):
        payload = {"kind": "diagonal_q", "k": spec.k.tolist()}
    elif isinstance(spec, RadialQ):
        payload = {"kind": "radial_q", "delta": spec.delta, "wtilde0": spec.wtilde0.tolist()}
    elif isinstance(spec, L1):
        payload = {"kind": "l1"}
    elif isinstance(spec, L2):
        payload = {"kind": "l2"}
    elif isinstance(spec, WeightedL2):
        payload = {"kind": "weighted_l2", "weights": spec.weights.tolist()}
    elif isinstance(spec, MahalanobisAboutInit):
        payload = {
            "kind": "mahalanobis_about_init",
            "B": spec.B.tolist(),
            "wtilde0": spec.wtilde0.tolist(),
        }
    else:
        raise ParameterError(f"unsupported regularizer {type(spec).__name__}")
    return json.dumps(payload, sort_keys=True)


def spec_from_json(text: str) -> RegularizerSpec:
    payload = json.loads(text)
    kind = payload.get("kind")
    if kind == "diagonal_q":
        return DiagonalQ(k=payload["k"])
    if kind == "radial_q":
        return RadialQ(delta=payload["delta"], wtilde0=payload["wtilde0"])
    if kind == "l1":
        return L1()
    if kind == "l2":
        return L2()
    if kind == "weighted_l2":
        return WeightedL2(weights=payload["weights"])
    if kind == "mahalanobis_about_init":
        return MahalanobisAboutInit(B=payload["B"], wtilde0=payload["wtilde0"])
    raise ParameterError(f"unknown regularizer kind {kind!r}")
