"""Numeric verification of the time-warp construction for the single-neuron
family: the induced metric tensor, the symmetry condition a tensor field must
satisfy to be a Hessian field, the scalar warp that repairs it, and the
integral monitors that justify reading the flow limit as a constrained
stationary point.

With ``R = sqrt(delta^2/4 + ||w||^2)``, the induced metric is

    H(w) = (delta/2 + R)^{-1} (I - w w^T / (2 (delta/2 + R) R))

which is positive definite but not a Hessian field; multiplying it by

    ghat(||w||),   ghat(x) = sqrt(R(x) + delta/2)

makes it one (ghat is the exact algebraic simplification of
``sqrt(R - delta/2)/x * (delta/2 + R)``, positive, strictly increasing, with
right limit sqrt(delta) at 0).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from scipy.integrate import trapezoid

from .exceptions import ParameterError
from .flow import Trajectory

__all__ = [
    "metric_tensor_fc",
    "hessian_map_defect",
    "g_hat",
    "warp_integral",
]


def metric_tensor_fc(w: np.ndarray, delta: float) -> np.ndarray:
    """The induced metric of the single-neuron predictor dynamics at w."""
    w = np.asarray(w, dtype=float).ravel()
    if delta < 0:
        raise ParameterError("delta must be nonnegative")
    nw = float(np.linalg.norm(w))
    if nw == 0.0 and delta == 0.0:
        raise ParameterError("the metric tensor is singular at w=0 when delta=0")
    R = np.sqrt(0.25 * delta * delta + nw * nw)
    outer_scale = 1.0 / (2.0 * (0.5 * delta + R) * R)
    return (np.eye(w.shape[0]) - outer_scale * np.outer(w, w)) / (0.5 * delta + R)


def hessian_map_defect(
    tensor_field: Callable[[np.ndarray], np.ndarray],
    w: np.ndarray,
    fd_step: float | None = None,
) -> float:
    """max over (i, j, k) of |dH_ij/dw_k - dH_ik/dw_j| by central differences.

    A field is the Hessian of some potential only if this vanishes; for a
    true Hessian field the returned value is O(fd_step^2) plus roundoff.
    """
    w = np.asarray(w, dtype=float).ravel()
    d = w.shape[0]
    if fd_step is None:
        fd_step = 1e-5 * (1.0 + float(np.linalg.norm(w)))
    partials = np.empty((d, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = fd_step
        hp = np.asarray(tensor_field(w + e), dtype=float)
        hm = np.asarray(tensor_field(w - e), dtype=float)
        if hp.shape != (d, d) or hm.shape != (d, d):
            raise ParameterError("tensor_field must return a d x d matrix")
        partials[k] = (hp - hm) / (2.0 * fd_step)
    # partials[k, i, j] = dH_ij / dw_k; compare against index swap (j <-> k)
    return float(np.max(np.abs(partials - partials.transpose(2, 1, 0))))


def g_hat(x, delta: float):
    """The scalar warp ghat(x) = sqrt(sqrt(x^2 + delta^2/4) + delta/2)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ParameterError("g_hat needs x > 0")
    if delta < 0:
        raise ParameterError("delta must be nonnegative")
    out = np.sqrt(np.sqrt(np.square(x) + 0.25 * delta * delta) + 0.5 * delta)
    return float(out) if out.ndim == 0 else out


def warp_integral(traj: Trajectory, delta: float) -> dict:
    """Trapezoid estimates of the two integrals behind the time warp.

    * ``tau_estimate``: integral of ghat(||w(t)||) over the recorded window.
      ``tau_diverging=True`` (the healthy case: the warped clock must reach
      infinity) when the per-unit-time increments do not decay.
    * ``nu_integral_estimate``: integral of ghat * ||r(t)|| with the residual
      read back from the predictor snapshots; its tail must be summable for
      the dual variable to exist.  ``nu_tail_ratio`` compares the last two
      quarters of the window; geometric decay shows up as a ratio well below
      one.  Non-converged trajectories are reported as inconclusive.
    """
    t = traj.times
    if t.shape[0] < 2:
        raise ParameterError("need at least two snapshots")
    norms = np.linalg.norm(traj.predictors, axis=1)
    ghat_vals = g_hat(np.maximum(norms, 1e-300), delta)

    tau_estimate = float(trapezoid(ghat_vals, t))
    # compare mean increments per unit time over the last two halves
    mid = t[0] + 0.5 * (t[-1] - t[0])
    second_half = t >= mid
    rate_late = float(trapezoid(ghat_vals[second_half], t[second_half])) / max(
        t[-1] - mid, 1e-300
    )
    rate_early = float(trapezoid(ghat_vals[~second_half], t[~second_half])) / max(
        mid - t[0], 1e-300
    )
    tau_diverging = bool(rate_late >= 0.1 * rate_early and ghat_vals[-1] > 0)

    # residual norms recovered from the snapshots: r = (y - X^T w) / N is not
    # stored, but feas_residuals carries ||y - X^T w|| / max(1, ||y||)
    resid = traj.feas_residuals
    integrand = ghat_vals * resid
    nu_integral = float(trapezoid(integrand, t))

    q3 = t[0] + 0.75 * (t[-1] - t[0])
    seg_mid = (t >= mid) & (t < q3)
    seg_last = t >= q3
    tail_prev = float(trapezoid(integrand[seg_mid], t[seg_mid]))
    tail_last = float(trapezoid(integrand[seg_last], t[seg_last]))
    if traj.converged and tail_prev > 0:
        nu_tail_ratio = tail_last / tail_prev
        finiteness = "converged" if nu_tail_ratio < 0.9 else "inconclusive"
    else:
        nu_tail_ratio = float("nan")
        finiteness = "inconclusive"

    return {
        "tau_estimate": tau_estimate,
        "tau_diverging": tau_diverging,
        "nu_integral_estimate": nu_integral,
        "nu_tail_ratio": nu_tail_ratio,
        "finiteness": finiteness,
    }
