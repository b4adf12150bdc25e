import numpy as np
import pytest
from scipy.integrate import trapezoid

from ibflow import (
    FlowOptions,
    InitShapeScale,
    ParameterError,
    RadialQ,
    gen_sparse_regression,
    g_hat,
    hessian_map_defect,
    init_from_shape_scale,
    integrate,
    metric_tensor_fc,
    q_eval,
    shape_scale_algebra,
    warp_integral,
)

SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# metric tensor


def test_metric_tensor_axis_point():
    H = metric_tensor_fc(np.array([1.0, 0.0]), 0.0)
    assert np.allclose(H, np.diag([0.5, 1.0]), atol=1e-15)


def test_metric_tensor_large_imbalance_isotropic():
    w = np.array([0.3, -0.7, 0.2])
    delta = 1e8
    H = metric_tensor_fc(w, delta)
    assert np.allclose(H, np.eye(3) / delta, rtol=1e-6)


def test_metric_tensor_positive_definite():
    rng = np.random.default_rng(0)
    for _ in range(50):
        d = int(rng.integers(2, 6))
        w = rng.standard_normal(d) * 10 ** rng.uniform(-2, 2)
        delta = float(rng.choice([0.0, 0.01, 1.0, 50.0]))
        if np.linalg.norm(w) == 0 and delta == 0:
            continue
        H = metric_tensor_fc(w, delta)
        assert np.allclose(H, H.T)
        assert np.min(np.linalg.eigvalsh(H)) > 0


def test_metric_tensor_radial_direction_damped():
    rng = np.random.default_rng(1)
    w = rng.standard_normal(4)
    H = metric_tensor_fc(w, 0.3)
    nw = np.linalg.norm(w)
    lam_radial = float(w @ H @ w) / nw**2
    eigs = np.linalg.eigvalsh(H)
    assert lam_radial == pytest.approx(eigs[0], rel=1e-10)


def test_metric_tensor_singularity():
    with pytest.raises(ParameterError):
        metric_tensor_fc(np.zeros(3), 0.0)
    # positive imbalance regularizes the origin
    H = metric_tensor_fc(np.zeros(3), 2.0)
    assert np.allclose(H, np.eye(3) / 2.0)


# ---------------------------------------------------------------------------
# Hessian-symmetry defect


def test_defect_vanishes_for_constant_hessian():
    defect = hessian_map_defect(lambda w: 2.0 * np.eye(3), np.array([0.3, -0.2, 0.9]))
    assert defect <= 1e-10


def test_defect_vanishes_for_genuine_hessian_field():
    # Hessian of w -> ||w||^4: 4||w||^2 I + 8 w w^T
    def field(w):
        return 4 * float(w @ w) * np.eye(len(w)) + 8 * np.outer(w, w)

    defect = hessian_map_defect(field, np.array([0.7, 1.1]), fd_step=1e-5)
    assert defect <= 1e-7


def test_unwarped_metric_defect_reference_value():
    defect = hessian_map_defect(lambda w: metric_tensor_fc(w, 0.0), np.array([1.0, 1.0]))
    assert defect == pytest.approx(1.0 / (4.0 * SQRT2), abs=1e-4)


def test_dichotomy_unwarped_fails_warped_passes():
    rng = np.random.default_rng(2)
    for delta in (0.0, 1.0):
        for _ in range(20):
            d = int(rng.integers(2, 5))
            w = rng.standard_normal(d)
            w *= (0.5 + 1.5 * rng.random()) / np.linalg.norm(w)
            bare = hessian_map_defect(lambda v: metric_tensor_fc(v, delta), w)
            assert bare > 1e-3
            warped = hessian_map_defect(
                lambda v: g_hat(np.linalg.norm(v), delta) * metric_tensor_fc(v, delta), w
            )
            assert warped <= 1e-6


def test_warped_metric_matches_radial_hessian():
    # 1.5 * ghat * H equals the Hessian of the assembled radial regularizer
    # (the 1.5 reflects the closed-form value's normalization)
    rng = np.random.default_rng(3)
    for _ in range(10):
        d = int(rng.integers(2, 5))
        delta = float(rng.choice([0.0, 0.8, 3.0]))
        w0 = rng.standard_normal(d)
        spec = RadialQ(delta=delta, wtilde0=w0)
        w = rng.standard_normal(d)
        w *= (0.5 + rng.random()) / np.linalg.norm(w)
        num = np.empty((d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = 1e-6
            num[:, j] = (q_eval(spec, w + e).gradient - q_eval(spec, w - e).gradient) / 2e-6
        target = 1.5 * g_hat(np.linalg.norm(w), delta) * metric_tensor_fc(w, delta)
        assert np.max(np.abs(num - target)) <= 1e-6


# ---------------------------------------------------------------------------
# warp function


def test_ghat_zero_imbalance_is_sqrt():
    assert g_hat(4.0, 0.0) == pytest.approx(2.0, rel=1e-14)
    xs = np.logspace(-3, 3, 30)
    assert np.allclose(g_hat(xs, 0.0), np.sqrt(xs), rtol=1e-14)


def test_ghat_limit_at_zero_is_sqrt_imbalance():
    assert g_hat(1e-8, 1.0) == pytest.approx(1.0, abs=1e-4)
    assert g_hat(1e-10, 4.0) == pytest.approx(2.0, abs=1e-6)


def test_ghat_monotone_increasing():
    xs = np.logspace(-4, 4, 100)
    for delta in (0.0, 0.1, 10.0):
        vals = g_hat(xs, delta)
        assert np.all(np.diff(vals) > 0)


def test_ghat_matches_quotient_form():
    rng = np.random.default_rng(4)
    for _ in range(40):
        delta = float(rng.choice([0.0, 0.2, 5.0]))
        x = float(10 ** rng.uniform(-3, 3))
        R = np.sqrt(x * x + delta * delta / 4)
        quotient = np.sqrt(R - delta / 2) / x * (delta / 2 + R)
        assert g_hat(x, delta) == pytest.approx(quotient, rel=1e-7)


def test_ghat_rejects_nonpositive():
    with pytest.raises(ParameterError):
        g_hat(0.0, 1.0)
    with pytest.raises(ParameterError):
        g_hat(-1.0, 0.0)
    with pytest.raises(ParameterError):
        g_hat(1.0, -1.0)


# ---------------------------------------------------------------------------
# warp integrals


def _single_neuron_run(seed=0, alpha=0.3, s=0.4, stop=1e-8, t_max=1e9):
    rng = np.random.default_rng(seed)
    ds = gen_sparse_regression(3, 7, 2, 0.05, seed)
    u = rng.standard_normal(7)
    u /= np.linalg.norm(u)
    p = init_from_shape_scale(InitShapeScale(alpha, s, u), "fc_single")
    opts = FlowOptions(record_stride=1, stop_feasibility=stop, t_max=t_max)
    return integrate(p, ds, opts), shape_scale_algebra(alpha, s).delta


def test_warp_integral_converged_run():
    traj, delta = _single_neuron_run()
    assert traj.converged
    out = warp_integral(traj, delta)
    assert out["finiteness"] == "converged"
    assert out["nu_tail_ratio"] < 0.9
    assert out["tau_diverging"]
    assert out["tau_estimate"] > 0


def test_warp_integral_tau_grows_with_window():
    traj, delta = _single_neuron_run()
    norms = np.linalg.norm(traj.predictors, axis=1)
    ghat_vals = g_hat(np.maximum(norms, 1e-300), delta)
    partial = [
        trapezoid(ghat_vals[: i + 1], traj.times[: i + 1])
        for i in range(4, len(traj.times), max(1, len(traj.times) // 8))
    ]
    assert all(b > a for a, b in zip(partial, partial[1:]))


def test_warp_integral_inconclusive_when_stalled():
    traj, delta = _single_neuron_run(stop=1e-14, t_max=0.05)
    assert not traj.converged
    out = warp_integral(traj, delta)
    assert out["finiteness"] == "inconclusive"


def test_warp_integral_needs_snapshots():
    traj, delta = _single_neuron_run()
    from dataclasses import replace

    short = replace(
        traj,
        times=traj.times[:1],
        predictors=traj.predictors[:1],
        feas_residuals=traj.feas_residuals[:1],
    )
    with pytest.raises(ParameterError):
        warp_integral(short, delta)
