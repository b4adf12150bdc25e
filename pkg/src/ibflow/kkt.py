"""Constrained minimization of the closed-form regularizers over the
interpolation set, via Newton's method on the dual stationarity map, plus
independent minimum-l2 / basis-pursuit oracles and KKT residual reports.

The stationarity condition is ``grad Q(w) = X nu``.  Both implemented
families have an invertible gradient, so ``w(nu)`` is explicit and Newton
runs on the N-dimensional feasibility map ``F(nu) = X^T w(nu) - y``:

* diagonal: ``w_i = (sqrt(k_i)/2) sinh(2 (X nu)_i)``, with the analytic
  Jacobian ``X^T diag(sqrt(k_i) cosh(2 (X nu)_i)) X`` (symmetric positive
  definite for full-row-rank constraints);
* radial:   ``w = (2/3) sqrt(delta + (4/9) m^2) (p - z)`` with ``p = X nu``
  and ``m = ||p - z||`` (the smooth closed form of inverting
  ``1.5 phi(||w||) w/||w|| + z = p``), with a finite-difference Jacobian.

``nu = 0`` starts both solvers at the natural base point: the zero predictor
for the diagonal family and the initial predictor for the radial family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .data import Dataset
from .exceptions import (
    DuplicateSamplesError,
    OverflowGuardError,
    ParameterError,
    SingularSystemError,
)
from .models import LeakyParams
from .regularizers import (
    DiagonalQ,
    RadialQ,
    RegularizerSpec,
    q_eval,
    radial_linear_anchor,
)

__all__ = [
    "KKTReport",
    "solve_diagonal",
    "solve_radial",
    "min_l2",
    "min_weighted_l2",
    "l1_oracle",
    "kkt_residuals",
    "leaky_kkt_check",
]

_MAX_NEWTON = 200
_SINH_ARG_GUARD = 690.0  # on 2*(X nu); stay below binary64 sinh overflow


@dataclass(frozen=True)
class KKTReport:
    w: np.ndarray
    nu: np.ndarray
    stationarity_residual: float
    feasibility_residual: float
    iterations: int
    converged: bool
    message: str = ""
    kink_samples: tuple[int, ...] = field(default=())

    def to_json_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "nu": self.nu.tolist(),
            "stationarity_residual": self.stationarity_residual,
            "feasibility_residual": self.feasibility_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "kink_samples": list(self.kink_samples),
        }


# ---------------------------------------------------------------------------
# rank checks


def _check_full_column_rank(dataset: Dataset):
    """The constraint matrix X^T (N x d) must have rank N."""
    X = dataset.X
    d, n = X.shape
    if n > d:
        raise SingularSystemError(f"more samples ({n}) than dimensions ({d})")
    if n > 1:
        _, idx = np.unique(X.T, axis=0, return_index=True)
        if idx.shape[0] < n:
            raise DuplicateSamplesError("dataset contains duplicate samples")
    R = scipy.linalg.qr(X, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    norm = diag[0] if diag.size else 0.0
    if norm == 0.0 or np.min(diag) <= 1e-10 * norm:
        raise SingularSystemError("sample matrix is rank deficient")


def _feasibility(w: np.ndarray, dataset: Dataset) -> float:
    return float(
        np.linalg.norm(dataset.X.T @ w - dataset.y) / max(1.0, np.linalg.norm(dataset.y))
    )


def _least_squares_nu(X: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, float]:
    nu, *_ = np.linalg.lstsq(X, grad, rcond=None)
    return nu, float(np.linalg.norm(X @ nu - grad))


# ---------------------------------------------------------------------------
# dual Newton drivers


def _newton_on_dual(w_of_nu, jac_of_nu, dataset: Dataset, tol: float):
    """Damped Newton on F(nu) = X^T w(nu) - y with an Armijo backtracking
    line search on ||F||^2.  Returns (nu, w, iterations, converged, message)."""
    X, y = dataset.X, dataset.y
    yscale = max(1.0, np.linalg.norm(y))
    nu = np.zeros(dataset.n)

    def merit(nu_try):
        try:
            w_try = w_of_nu(nu_try)
        except OverflowGuardError:
            return None, np.inf
        F_try = X.T @ w_try - y
        with np.errstate(over="ignore"):
            phi_try = float(F_try @ F_try)
        if not np.isfinite(phi_try):
            return None, np.inf
        return w_try, phi_try

    w, phi = merit(nu)
    assert w is not None
    for it in range(1, _MAX_NEWTON + 1):
        F = X.T @ w - y
        if np.linalg.norm(F) / yscale <= tol:
            return nu, w, it - 1, True, ""
        J = jac_of_nu(nu, w)
        J = 0.5 * (J + J.T)
        try:
            step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(J), -F)
        except scipy.linalg.LinAlgError:
            # fall back to a regularized solve near-singular Jacobians
            lam = 1e-12 * max(1.0, float(np.trace(J)) / J.shape[0])
            for _ in range(40):
                try:
                    step = scipy.linalg.cho_solve(
                        scipy.linalg.cho_factor(J + lam * np.eye(J.shape[0])), -F
                    )
                    break
                except scipy.linalg.LinAlgError:
                    lam *= 10.0
            else:
                return nu, w, it, False, "jacobian factorization failed"

        t = 1.0
        accepted = False
        for _ in range(60):
            w_try, phi_try = merit(nu + t * step)
            if phi_try <= phi * (1.0 - 1e-4 * t):
                nu = nu + t * step
                w, phi = w_try, phi_try
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if np.linalg.norm(step) < 1e-14:
                return nu, w, it, False, "newton stalled: step below 1e-14"
            return nu, w, it, False, "line search failed to reduce the residual"

    return nu, w, _MAX_NEWTON, False, "iteration limit reached"


def solve_diagonal(dataset: Dataset, k: np.ndarray, tol: float = 1e-10) -> KKTReport:
    """argmin of the diagonal regularizer with per-coordinate parameters k
    subject to interpolation.

    Small k makes the inverse map violently nonlinear (the near-l1 regime),
    so the solve warm-starts through a geometric continuation on k when
    min(k) is small.
    """
    _check_full_column_rank(dataset)
    k = np.asarray(k, dtype=float).ravel()
    if k.shape[0] != dataset.d:
        raise ParameterError(f"k has length {k.shape[0]}, expected {dataset.d}")
    if np.any(k <= 0):
        raise ParameterError("all k entries must be positive")

    X = dataset.X

    def solve_once(k_cur, nu_start):
        rk = np.sqrt(k_cur)

        def w_of_nu(nu):
            g = 2.0 * (X @ nu)
            if np.any(np.abs(g) > _SINH_ARG_GUARD):
                raise OverflowGuardError(
                    f"dual point sends coordinate {int(np.argmax(np.abs(g)))} "
                    "past the sinh overflow guard"
                )
            return 0.5 * rk * np.sinh(g)

        def jac_of_nu(nu, w):
            g = 2.0 * (X @ nu)
            inner = rk * np.cosh(g)
            return (X.T * inner) @ X

        # shift the Newton start so continuation stages can warm start
        def w_shifted(nu):
            return w_of_nu(nu_start + nu)

        def jac_shifted(nu, w):
            return jac_of_nu(nu_start + nu, w)

        nu_rel, w, its, ok, msg = _newton_on_dual(w_shifted, jac_shifted, dataset, tol)
        return nu_start + nu_rel, w, its, ok, msg

    total_its = 0
    nu = np.zeros(dataset.n)
    kmin = float(np.min(k))
    if kmin < 1e-4:
        # geometric continuation: interpolate log(k) from a well-conditioned
        # start down to the target
        n_stages = int(np.ceil(np.log10(1e-4 / kmin) / 2.0)) + 1
        for stage in range(1, n_stages):
            frac = stage / n_stages
            k_cur = np.exp((1 - frac) * np.log(np.maximum(k, 1e-4)) + frac * np.log(k))
            nu, _, its, ok, _ = solve_once(k_cur, nu)
            total_its += its
            if not ok:
                nu = np.zeros(dataset.n)
                break

    nu, w, its, ok, msg = solve_once(k, nu)
    total_its += its
    grad = q_eval(DiagonalQ(k=k), w).gradient
    nu_ls, stat = _least_squares_nu(X, grad)
    return KKTReport(
        w=w,
        nu=nu_ls if ok else nu,
        stationarity_residual=stat,
        feasibility_residual=_feasibility(w, dataset),
        iterations=total_its,
        converged=bool(ok and _feasibility(w, dataset) <= tol),
        message=msg,
    )


def solve_radial(
    dataset: Dataset, delta: float, wtilde0: np.ndarray, tol: float = 1e-10
) -> KKTReport:
    """argmin of the single-neuron radial regularizer (imbalance delta,
    anchored at the initial predictor wtilde0) subject to interpolation."""
    _check_full_column_rank(dataset)
    wtilde0 = np.asarray(wtilde0, dtype=float).ravel()
    if wtilde0.shape[0] != dataset.d:
        raise ParameterError(f"wtilde0 has length {wtilde0.shape[0]}, expected {dataset.d}")
    if delta < 0:
        raise ParameterError("delta must be nonnegative")
    z = radial_linear_anchor(delta, wtilde0)
    X = dataset.X

    def w_of_nu(nu):
        v = X @ nu - z
        m = np.linalg.norm(v)
        return (2.0 / 3.0) * np.sqrt(delta + (4.0 / 9.0) * m * m) * v

    def jac_of_nu(nu, w):
        # finite differences on the dual variable, symmetrized by the caller
        n = nu.shape[0]
        J = np.empty((n, n))
        base = X.T @ w
        for j in range(n):
            h = 1e-7 * (1.0 + abs(nu[j]))
            e = np.zeros(n)
            e[j] = h
            J[:, j] = (X.T @ w_of_nu(nu + e) - base) / h
        return J

    nu, w, its, ok, msg = _newton_on_dual(w_of_nu, jac_of_nu, dataset, tol)
    grad = q_eval(RadialQ(delta=delta, wtilde0=wtilde0), w).gradient
    nu_ls, stat = _least_squares_nu(X, grad)
    return KKTReport(
        w=w,
        nu=nu_ls if ok else nu,
        stationarity_residual=stat,
        feasibility_residual=_feasibility(w, dataset),
        iterations=its,
        converged=bool(ok and _feasibility(w, dataset) <= tol),
        message=msg,
    )


# ---------------------------------------------------------------------------
# oracles


def min_l2(dataset: Dataset) -> np.ndarray:
    """Minimum-Euclidean-norm interpolant X (X^T X)^{-1} y, via least squares."""
    _check_full_column_rank(dataset)
    w, *_ = np.linalg.lstsq(dataset.X.T, dataset.y, rcond=None)
    return w


def min_weighted_l2(dataset: Dataset, weights: np.ndarray) -> np.ndarray:
    """Closed-form argmin of sum_i weights_i w_i^2 subject to interpolation."""
    _check_full_column_rank(dataset)
    weights = np.asarray(weights, dtype=float).ravel()
    if np.any(weights <= 0):
        raise ParameterError("weights must be positive")
    A = dataset.X.T  # N x d
    Dinv_At = A.T / weights[:, None]
    nu = scipy.linalg.solve(A @ Dinv_At, dataset.y, assume_a="pos")
    return Dinv_At @ nu


def l1_oracle(
    dataset: Dataset, gap_tol: float = 1e-9, max_iter: int = 200_000
) -> np.ndarray:
    """Basis pursuit (min ||w||_1 s.t. X^T w = y) by alternating splitting.

    Iterates alternate an exact projection onto the constraint set with a
    soft-threshold step; termination is certified by the duality gap of the
    scaled dual candidate, run down to ``gap_tol``.
    """
    _check_full_column_rank(dataset)
    A = dataset.X.T
    b = dataset.y
    n, d = A.shape
    gram = scipy.linalg.cho_factor(A @ A.T)

    def project(v):
        return v - A.T @ scipy.linalg.cho_solve(gram, A @ v - b)

    if not np.any(b):
        return np.zeros(d)

    rho = 1.0
    z = np.zeros(d)
    u = np.zeros(d)
    w = project(np.zeros(d))
    for it in range(max_iter):
        w = project(z - u)
        z = np.sign(w + u) * np.maximum(np.abs(w + u) - 1.0 / rho, 0.0)
        u = u + w - z
        if it % 25 == 24 or it == max_iter - 1:
            # dual candidate: project the scaled multiplier into range(A^T),
            # then scale into the dual-feasible ball
            nu = scipy.linalg.cho_solve(gram, A @ (rho * u))
            atnu = A.T @ nu
            scale = max(1.0, float(np.max(np.abs(atnu))))
            gap = float(np.sum(np.abs(w)) - (b @ nu) / scale)
            if abs(gap) <= gap_tol and float(np.max(np.abs(w - z))) <= 1e-10:
                return w
    raise RuntimeError(
        f"basis pursuit did not certify a duality gap <= {gap_tol:g} "
        f"within {max_iter} iterations"
    )


# ---------------------------------------------------------------------------
# residual reports


def kkt_residuals(
    spec: RegularizerSpec,
    w: np.ndarray,
    dataset: Dataset,
    stationarity_tol: float = 1e-8,
    feasibility_tol: float = 1e-8,
) -> KKTReport:
    """Stationarity and feasibility residuals of an arbitrary candidate w:
    the least-squares distance of grad Q(w) to the span of the samples, and
    the scaled constraint violation."""
    w = np.asarray(w, dtype=float).ravel()
    grad = q_eval(spec, w).gradient
    nu, stat = _least_squares_nu(dataset.X, grad)
    feas = _feasibility(w, dataset)
    return KKTReport(
        w=w,
        nu=nu,
        stationarity_residual=stat,
        feasibility_residual=feas,
        iterations=0,
        converged=bool(stat <= stationarity_tol and feas <= feasibility_tol),
    )


def leaky_kkt_check(
    params: LeakyParams,
    dataset: Dataset,
    wtilde0: np.ndarray,
    stationarity_tol: float = 1e-4,
    feasibility_tol: float = 1e-8,
) -> KKTReport:
    """First-order (KKT) verification for the leaky-ReLU neuron.

    The activation's slope pattern c_n is read off the terminal w (slope 1 on
    the kink itself, which is flagged); stationarity is checked against the
    slope-warped features c_n x_n with the radial regularizer built from the
    conserved imbalance and the initial predictor.  This asserts first-order
    optimality only; the underlying problem is non-convex.
    """
    w = params.w
    a = params.a
    zx = dataset.X.T @ w
    kinks = tuple(int(i) for i in np.nonzero(zx == 0.0)[0])
    c = np.where(zx >= 0, 1.0, params.rho)
    X_warp = dataset.X * c  # column n scaled by c_n

    delta = float(a * a - w @ w)
    scale = float(a * a + w @ w)
    if delta < -1e-9 * scale:
        raise ParameterError(
            f"imbalance delta={delta:.3g} is negative: outside the guarantee scope"
        )
    delta = max(delta, 0.0)  # integrator drift can leave a balanced run at -1e-16
    wtilde = a * w
    spec = RadialQ(delta=delta, wtilde0=np.asarray(wtilde0, dtype=float).ravel())
    grad = q_eval(spec, wtilde).gradient
    nu, stat = _least_squares_nu(X_warp, grad)

    pred = a * np.maximum(zx, params.rho * zx)
    feas = float(np.linalg.norm(pred - dataset.y) / max(1.0, np.linalg.norm(dataset.y)))
    return KKTReport(
        w=wtilde,
        nu=nu,
        stationarity_residual=stat,
        feasibility_residual=feas,
        iterations=0,
        converged=bool(stat <= stationarity_tol and feas <= feasibility_tol),
        kink_samples=kinks,
    )
