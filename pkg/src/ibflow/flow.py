"""Adaptive integration of the gradient flow d(theta)/dt = -grad L(theta).

The stepper is an embedded Dormand-Prince 5(4) pair with a
proportional-integral step-size controller and a 5x growth cap per step (small
initializations produce a long dormant phase, so wall clock grows like
log(1/alpha) while the step size ramps up).  Integration stops when the
relative feasibility residual of the effective predictor drops below
``stop_feasibility`` (so the constrained-minimization comparison target is
well defined), or at ``t_max`` with ``converged=False``.

Snapshots store the effective predictor rather than the full parameter
record; conservation drift is evaluated on the fly against the t=0 values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .data import Dataset
from .exceptions import FlowBlowupError, ParameterError
from .models import (
    ConservedDiag,
    ConservedFc,
    DiagonalParams,
    FcParams,
    LeakyParams,
    conserved,
)

__all__ = ["FlowOptions", "Trajectory", "integrate", "drift_report", "export_trajectory_csv"]


@dataclass(frozen=True)
class FlowOptions:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    stop_feasibility: float = 1e-8
    t_max: float = 1e9
    record_stride: int = 10
    max_steps: int = 2_000_000

    def __post_init__(self):
        if min(self.rel_tol, self.abs_tol, self.stop_feasibility) <= 0:
            raise ParameterError("tolerances must be positive")
        if self.t_max <= 0:
            raise ParameterError("t_max must be positive")
        if self.record_stride < 1:
            raise ParameterError("record_stride must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    predictors: np.ndarray
    losses: np.ndarray
    feas_residuals: np.ndarray
    drift_abs: dict[str, np.ndarray]
    drift_norm: dict[str, np.ndarray]
    terminal_params: object
    converged: bool
    n_accepted: int = 0
    n_rejected: int = 0
    stop_feasibility: float = field(default=1e-8, compare=False)

    @property
    def conserved_drift(self) -> np.ndarray:
        """Per-snapshot max absolute drift over all conserved quantities."""
        return np.max(np.stack(list(self.drift_abs.values())), axis=0)

    @property
    def terminal_predictor(self) -> np.ndarray:
        return self.predictors[-1]


# ---------------------------------------------------------------------------
# per-family fast state adapters (flat vector <-> parameter record)


class _Adapter:
    def __init__(self, params0, dataset: Dataset):
        self.dataset = dataset
        self.X = dataset.X
        self.y = dataset.y
        self.n = dataset.n

    def loss_feas(self, x: np.ndarray) -> tuple[float, float]:
        with np.errstate(over="ignore", invalid="ignore"):
            f = self.targets(x)
            diff = self.y - f
            loss = float(diff @ diff / (2 * self.n))
            feas = float(np.linalg.norm(diff) / max(1.0, np.linalg.norm(self.y)))
        if not np.isfinite(loss):
            loss, feas = np.inf, np.inf
        return loss, feas


class _DiagonalAdapter(_Adapter):
    def __init__(self, params0: DiagonalParams, dataset: Dataset):
        super().__init__(params0, dataset)
        self.d = params0.d
        self.x0 = np.concatenate(
            [params0.u_plus, params0.u_minus, params0.v_plus, params0.v_minus]
        )

    def _split(self, x):
        d = self.d
        return x[:d], x[d : 2 * d], x[2 * d : 3 * d], x[3 * d :]

    def predictor(self, x):
        up, um, vp, vm = self._split(x)
        return up * vp - um * vm

    def targets(self, x):
        return self.X.T @ self.predictor(x)

    def rhs(self, x):
        up, um, vp, vm = self._split(x)
        r = (self.y - self.X.T @ (up * vp - um * vm)) / self.n
        s = self.X @ r
        return np.concatenate([vp * s, -vm * s, up * s, -um * s])

    def to_params(self, x):
        up, um, vp, vm = self._split(x)
        return DiagonalParams(up.copy(), um.copy(), vp.copy(), vm.copy())


class _FcAdapter(_Adapter):
    def __init__(self, params0: FcParams, dataset: Dataset):
        super().__init__(params0, dataset)
        self.d, self.m = params0.d, params0.m
        self.x0 = np.concatenate([params0.a, params0.W.ravel(order="F")])

    def _split(self, x):
        return x[: self.m], x[self.m :].reshape(self.d, self.m, order="F")

    def predictor(self, x):
        a, W = self._split(x)
        return W @ a

    def targets(self, x):
        return self.X.T @ self.predictor(x)

    def rhs(self, x):
        a, W = self._split(x)
        r = (self.y - self.X.T @ (W @ a)) / self.n
        s = self.X @ r
        return np.concatenate([W.T @ s, np.outer(s, a).ravel(order="F")])

    def to_params(self, x):
        a, W = self._split(x)
        return FcParams(a.copy(), W.copy())


class _LeakyAdapter(_Adapter):
    """Leaky-neuron state adapter.

    The activation's slope set at a kink is the whole interval [rho, 1]; when
    a sample sits on its kink with both one-sided fields pointing inward, the
    flow slides along the kink surface and the effective slope is the interior
    value that keeps the sample pinned (the convexified, differential-inclusion
    field).  Without this the stepper chatters at machine-scale steps and
    cannot traverse the sliding phase.
    """

    _BAND = 1e-9  # relative half-width of the kink neighborhood

    def __init__(self, params0: LeakyParams, dataset: Dataset):
        super().__init__(params0, dataset)
        self.d = params0.d
        self.rho = params0.rho
        self.x0 = np.concatenate([[params0.a], params0.w])
        self.G = self.X.T @ self.X
        self.xnorms = np.sqrt(np.diag(self.G))

    def predictor(self, x):
        return x[0] * x[1:]

    def targets(self, x):
        z = self.X.T @ x[1:]
        return x[0] * np.maximum(z, self.rho * z)

    def _sliding_slopes(self, z, c, r, on_kink):
        c = c.copy()
        idx = np.nonzero(on_kink)[0]
        for _ in range(8):
            changed = False
            for n in idx:
                if abs(r[n]) * self.G[n, n] <= 1e-300:
                    continue
                s_off = float(self.G[n] @ (c * r)) - self.G[n, n] * c[n] * r[n]
                desired = -s_off / (self.G[n, n] * r[n])
                new = min(1.0, max(self.rho, desired))
                if new != c[n]:
                    c[n] = new
                    changed = True
            if not changed:
                break
        return c

    def rhs(self, x):
        a, w = x[0], x[1:]
        z = self.X.T @ w
        c = np.where(z >= 0, 1.0, self.rho)
        r = (self.y - a * c * z) / self.n
        if self.rho != 1.0 and a != 0.0:
            band = self._BAND * self.xnorms * max(float(np.linalg.norm(w)), 1e-300)
            on_kink = np.abs(z) <= band
            if np.any(on_kink):
                c = self._sliding_slopes(z, c, r, on_kink)
                r = (self.y - a * c * z) / self.n
        s = self.X @ (c * r)
        return np.concatenate([[w @ s], a * s])

    def to_params(self, x):
        return LeakyParams(a=float(x[0]), w=x[1:].copy(), rho=self.rho)


def _make_adapter(params0, dataset: Dataset) -> _Adapter:
    if isinstance(params0, DiagonalParams):
        return _DiagonalAdapter(params0, dataset)
    if isinstance(params0, FcParams):
        return _FcAdapter(params0, dataset)
    if isinstance(params0, LeakyParams):
        return _LeakyAdapter(params0, dataset)
    raise ParameterError(f"unsupported parameter record {type(params0).__name__}")


def _conserved_groups(params) -> dict[str, np.ndarray]:
    rec = conserved(params)
    assert isinstance(rec, (ConservedDiag, ConservedFc))
    return rec.as_groups()


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) tableau

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4

_SAFETY = 0.9
_MAX_FACTOR = 5.0  # growth cap per accepted step
_MIN_FACTOR = 0.2
_BETA = 0.04  # integral-feedback exponent of the PI controller
_EXPO = 0.2 - 0.75 * _BETA


def _error_norm(err_vec, x_old, x_new, rel_tol, abs_tol):
    with np.errstate(over="ignore", invalid="ignore"):
        scale = abs_tol + rel_tol * np.maximum(np.abs(x_old), np.abs(x_new))
        out = float(np.sqrt(np.mean(np.square(err_vec / scale))))
    return out if np.isfinite(out) else np.inf


def _initial_step(rhs, x0, f0, rel_tol, abs_tol, t_max):
    scale = abs_tol + rel_tol * np.abs(x0)
    d0 = np.sqrt(np.mean(np.square(x0 / scale)))
    d1 = np.sqrt(np.mean(np.square(f0 / scale)))
    h0 = 1e-6 if d1 <= 1e-10 or d0 <= 1e-10 else 0.01 * d0 / d1
    f1 = rhs(x0 + h0 * f0)
    d2 = np.sqrt(np.mean(np.square((f1 - f0) / scale))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_max)


def integrate(
    params0,
    dataset: Dataset,
    opts: FlowOptions = FlowOptions(),
    warp: Callable[[np.ndarray], float] | None = None,
) -> Trajectory:
    """Integrate the flow from ``params0`` until (near-)interpolation.

    ``warp``, if given, multiplies the whole vector field by a positive
    scalar function of the current effective predictor; this reparameterizes
    time and must not change the visited set or the limit.
    """
    adapter = _make_adapter(params0, dataset)

    if warp is None:
        rhs = adapter.rhs
    else:
        def rhs(x):
            return warp(adapter.predictor(x)) * adapter.rhs(x)

    x = adapter.x0.copy()
    loss0, feas0 = adapter.loss_feas(x)
    if not np.isfinite(loss0):
        raise ParameterError("loss is not finite at the initial parameters")

    groups0 = _conserved_groups(adapter.to_params(x))
    group_scale = {k: 1.0 + np.abs(v) for k, v in groups0.items()}

    times = [0.0]
    predictors = [adapter.predictor(x).copy()]
    losses = [loss0]
    feas_residuals = [feas0]
    drift_abs = {k: [0.0] for k in groups0}
    drift_norm = {k: [0.0] for k in groups0}

    def drift_now(xv):
        cur = _conserved_groups(adapter.to_params(xv))
        out_abs, out_norm = {}, {}
        for k, v0 in groups0.items():
            dev = np.abs(cur[k] - v0)
            out_abs[k] = float(np.max(dev))
            out_norm[k] = float(np.max(dev / group_scale[k]))
        return out_abs, out_norm

    def record(t, xv):
        times.append(t)
        predictors.append(adapter.predictor(xv).copy())
        loss, feas = adapter.loss_feas(xv)
        losses.append(loss)
        feas_residuals.append(feas)
        d_abs, d_norm = drift_now(xv)
        for k in groups0:
            drift_abs[k].append(d_abs[k])
            drift_norm[k].append(d_norm[k])

    t = 0.0
    f = rhs(x)
    if not np.all(np.isfinite(f)):
        raise FlowBlowupError(t)
    # the per-step error floor must sit well below the stopping threshold or
    # the feasibility residual plateaus just above it
    rel_tol = min(opts.rel_tol, opts.stop_feasibility / 50.0)
    abs_tol = min(opts.abs_tol, rel_tol * 1e-2)
    h = _initial_step(rhs, x, f, rel_tol, abs_tol, opts.t_max)

    converged = feas0 <= opts.stop_feasibility
    n_accepted = n_rejected = 0
    facold = 1e-4
    k_stages = np.empty((7, x.shape[0]))
    last_recorded = True

    # plateau rescue: the feasibility residual bottoms out at a noise floor
    # proportional to the local tolerance; when progress stalls above the
    # stopping threshold, tighten and keep going
    check_every = 200
    next_check = check_every
    feas_at_check = feas0

    while not converged and t < opts.t_max and n_accepted < opts.max_steps:
        h = min(h, opts.t_max - t)
        k_stages[0] = f
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(1, 6):
                xi = x + h * (k_stages[:i].T @ _A[i])
                k_stages[i] = rhs(xi)
            x_new = x + h * (k_stages[:6].T @ _A[6])
            k_stages[6] = rhs(x_new)
            err_vec = h * (k_stages.T @ _E)

        bad = not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(err_vec)))
        err = np.inf if bad else _error_norm(err_vec, x, x_new, rel_tol, abs_tol)

        if err <= 1.0:
            t += h
            x = x_new
            f = k_stages[6].copy()  # first-same-as-last; row 6 is rewritten next step
            n_accepted += 1
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = min(
                    _MAX_FACTOR,
                    max(_MIN_FACTOR, _SAFETY * facold**_BETA * err**-_EXPO),
                )
            facold = max(err, 1e-4)
            h *= factor

            _, feas = adapter.loss_feas(x)
            converged = feas <= opts.stop_feasibility
            if not converged and n_accepted >= next_check:
                next_check = n_accepted + check_every
                if feas > 0.3 * feas_at_check and rel_tol > 1e-14:
                    rel_tol = max(0.1 * rel_tol, 1e-14)
                    abs_tol = max(0.1 * abs_tol, 1e-16)
                feas_at_check = feas
            last_recorded = False
            if converged or n_accepted % opts.record_stride == 0:
                record(t, x)
                last_recorded = True
        else:
            n_rejected += 1
            if np.isinf(err):
                h *= 0.1
            else:
                h *= max(0.1, _SAFETY * err**-0.2)
            if h <= 1e-14 * max(1.0, abs(t)):
                raise FlowBlowupError(t)

    if not last_recorded:
        record(t, x)

    return Trajectory(
        times=np.asarray(times),
        predictors=np.asarray(predictors),
        losses=np.asarray(losses),
        feas_residuals=np.asarray(feas_residuals),
        drift_abs={k: np.asarray(v) for k, v in drift_abs.items()},
        drift_norm={k: np.asarray(v) for k, v in drift_norm.items()},
        terminal_params=adapter.to_params(x),
        converged=bool(converged),
        n_accepted=n_accepted,
        n_rejected=n_rejected,
        stop_feasibility=opts.stop_feasibility,
    )


def drift_report(traj: Trajectory) -> dict[str, float]:
    """Max |Q(t) - Q(0)| per conserved quantity over the recorded snapshots."""
    if traj.times.shape[0] < 2:
        raise ParameterError("trajectory needs at least two snapshots")
    return {k: float(np.max(v)) for k, v in traj.drift_abs.items()}


def drift_report_normalized(traj: Trajectory) -> dict[str, float]:
    """Like :func:`drift_report` but each deviation is divided by
    1 + |initial value| coordinatewise before taking maxima."""
    if traj.times.shape[0] < 2:
        raise ParameterError("trajectory needs at least two snapshots")
    return {k: float(np.max(v)) for k, v in traj.drift_norm.items()}


def export_trajectory_csv(traj: Trajectory, path: str, include_predictor: bool = True):
    """Write `t,loss,feas_residual,drift_max[,wtilde_*]` rows under a
    versioned header comment."""
    drift_max = traj.conserved_drift
    cols = ["t", "loss", "feas_residual", "drift_max"]
    if include_predictor:
        cols += [f"wtilde_{i}" for i in range(traj.predictors.shape[1])]
    with open(path, "w") as fh:
        fh.write("# ibflow-csv v1\n")
        fh.write(",".join(cols) + "\n")
        for i in range(traj.times.shape[0]):
            row = [traj.times[i], traj.losses[i], traj.feas_residuals[i], drift_max[i]]
            if include_predictor:
                row += list(traj.predictors[i])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def tighten(opts: FlowOptions, factor: float = 10.0) -> FlowOptions:
    """Tolerances scaled down by ``factor`` (for convergence-order checks)."""
    return replace(
        opts,
        rel_tol=opts.rel_tol / factor,
        abs_tol=opts.abs_tol / factor,
        stop_feasibility=opts.stop_feasibility / factor,
    )
