import json
import subprocess
import sys

import numpy as np
import pytest

from ibflow import ScopeError
from ibflow.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    run_compare,
    run_contour,
    run_sweep,
    run_verify,
    write_sweep_csv,
)

DESK = dict(d=50, n=10, r_star=3, noise_std=0.1)


def test_single_cell_csv_shape(tmp_path):
    cfg = ExperimentConfig(
        kind="sweep", seeds=(0,), alpha_grid=(0.1,), s_grid=(0.0,), **DESK
    )
    cells = run_sweep(cfg)
    assert len(cells) == 1
    path = tmp_path / "sweep.csv"
    write_sweep_csv(cells, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == "alpha,s,seed,pop_error,train_residual,converged"
    assert len(lines) == 3


def test_sweep_deterministic_and_pop_error_bounded(tmp_path):
    cfg = ExperimentConfig(
        kind="sweep", seeds=(0, 1), alpha_grid=(1e-3, 1e-1), s_grid=(0.0, 0.5), **DESK
    )
    cells_a = run_sweep(cfg)
    cells_b = run_sweep(cfg)
    assert cells_a == cells_b
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    write_sweep_csv(cells_a, str(p1))
    write_sweep_csv(cells_b, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    for c in cells_a:
        assert c.pop_error >= cfg.noise_std**2 - 1e-12
        assert c.converged


def test_sweep_flow_vs_solver_agree():
    base = dict(kind="sweep", seeds=(0,), alpha_grid=(1e-3, 1e-1, 1.0), s_grid=(0.0, 0.5, 0.9))
    cfg_flow = ExperimentConfig(via="flow", **base, **DESK)
    cfg_solver = ExperimentConfig(via="solver", **base, **DESK)
    flow_cells = run_sweep(cfg_flow)
    solver_cells = run_sweep(cfg_solver)
    for cf, cs in zip(flow_cells, solver_cells):
        assert (cf.alpha, cf.s, cf.seed) == (cs.alpha, cs.s, cs.seed)
        # population errors computed from two independent routes
        assert cf.pop_error == pytest.approx(cs.pop_error, rel=2e-2, abs=1e-4)


def test_sweep_parallel_jobs_identical():
    cfg = ExperimentConfig(
        kind="sweep", seeds=(0,), alpha_grid=(1e-2, 1.0), s_grid=(0.0, 0.5),
        d=20, n=5, r_star=2, noise_std=0.1,
    )
    serial = run_sweep(cfg)
    from dataclasses import replace

    parallel = run_sweep(replace(cfg, jobs=2))
    assert serial == parallel


def test_contour_default_panels(tmp_path):
    cfg = ExperimentConfig(kind="contour", grid_n=101)
    panels = run_contour(cfg, str(tmp_path))
    assert len(panels) == 6
    for meta in panels:
        assert meta["min_at_wtilde0"], meta
        lines = (tmp_path / meta["csv"]).read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[1] == "alpha,s,w1,w2,q_value"
        assert len(lines) == 2 + 101 * 101
    manifest = json.loads((tmp_path / "contour_manifest.json").read_text())
    assert len(manifest["panels"]) == 6


def test_contour_small_scale_panel_nearly_isotropic(tmp_path):
    # levels near the origin of the small-scale panel are nearly circular:
    # interpolate the sampled grid onto the exact unit circle, remove the
    # linear tilt, and bound the angular variation
    cfg = ExperimentConfig(kind="contour", panels=((0.01, 0.1),), grid_n=161)
    meta = run_contour(cfg, str(tmp_path))[0]
    rows = np.loadtxt(
        tmp_path / meta["csv"], delimiter=",", skiprows=2, usecols=(2, 3, 4)
    )
    n = cfg.grid_n
    grid = np.unique(rows[:, 0])
    q = rows[:, 2].reshape(n, n)
    z = -1.5 * np.sqrt(
        np.sqrt(0.01**2 + meta["delta"] ** 2 / 4) - meta["delta"] / 2
    ) * np.asarray(meta["wtilde0"]) / 0.01

    def bilinear(p):
        i = np.searchsorted(grid, p[0]) - 1
        j = np.searchsorted(grid, p[1]) - 1
        h = grid[1] - grid[0]
        tx = (p[0] - grid[i]) / h
        ty = (p[1] - grid[j]) / h
        return (
            q[i, j] * (1 - tx) * (1 - ty)
            + q[i + 1, j] * tx * (1 - ty)
            + q[i, j + 1] * (1 - tx) * ty
            + q[i + 1, j + 1] * tx * ty
        )

    angles = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    vals = []
    for th in angles:
        p = np.array([np.cos(th), np.sin(th)])
        vals.append(bilinear(p) - z @ p)
    vals = np.asarray(vals)
    assert np.max(vals) / np.min(vals) <= 1.05


def test_contour_values_finite_with_min(tmp_path):
    cfg = ExperimentConfig(kind="contour", grid_n=61)
    panels = run_contour(cfg, str(tmp_path))
    for meta in panels:
        q = np.loadtxt(tmp_path / meta["csv"], delimiter=",", skiprows=2, usecols=4)
        assert np.all(np.isfinite(q))


def test_compare_diagonal():
    cfg = ExperimentConfig(
        kind="compare", family="diagonal", alpha=0.01, s=0.0, seed=3,
        d=40, n=10, r_star=5, noise_std=0.1,
    )
    report = run_compare(cfg)
    assert report["pass"]
    assert report["rel_distance"] <= 1e-2
    assert report["solver"]["stationarity_residual"] <= 1e-8
    assert report["flow"]["converged"]
    json.dumps(report)  # must be serializable


def test_compare_rejects_negative_shape_for_single_neuron():
    cfg = ExperimentConfig(
        kind="compare", family="fc_single", alpha=0.1, s=-0.5, seed=0, d=10, n=3,
        r_star=2, noise_std=0.1,
    )
    with pytest.raises(ScopeError, match="delta >= 0"):
        run_compare(cfg)


def test_compare_leaky_slope_one_matches_linear():
    common = dict(alpha=0.05, s=0.2, seed=5, d=8, n=3, r_star=2, noise_std=0.1)
    rep_lin = run_compare(ExperimentConfig(kind="compare", family="fc_single", **common))
    rep_leaky = run_compare(
        ExperimentConfig(kind="compare", family="leaky", rho=1.0, **common)
    )
    w_lin = np.asarray(rep_lin["flow_predictor"])
    w_leaky = np.asarray(rep_leaky["flow_predictor"])
    assert np.linalg.norm(w_lin - w_leaky) <= 1e-10
    assert abs(rep_lin["rel_distance"] - rep_leaky["rel_distance"]) <= 1e-10


def test_compare_balanced_multi():
    cfg = ExperimentConfig(
        kind="compare", family="fc_balanced", m=3, alpha=0.05, seed=2,
        d=10, n=3, r_star=2, noise_std=0.1,
    )
    report = run_compare(cfg)
    assert report["pass"]
    assert report["rel_distance"] <= 1e-2


def test_verify_report():
    report = run_verify(ExperimentConfig(kind="verify"))
    assert report["pass"]
    assert report["defect_unwarped"] > 1e-3
    assert report["defect_warped"] <= 1e-6
    assert report["ghat_monotone"]
    assert report["nu_integral_tail_ratio"] < 0.9


def test_config_json_round_trip():
    cfg = ExperimentConfig(kind="sweep", seeds=(0, 1, 2), alpha_grid=(0.1, 1.0))
    back = ExperimentConfig.from_json_dict(json.loads(json.dumps(cfg.to_json_dict())))
    assert back == cfg


def test_cli_end_to_end(tmp_path):
    cfg = {
        "n": 5, "d": 20, "r_star": 2, "noise_std": 0.1, "seeds": [0],
        "alpha_grid": [0.01, 1.0], "s_grid": [0.0, 0.5],
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out_csv = tmp_path / "sweep.csv"
    res = subprocess.run(
        [sys.executable, "-m", "ibflow.cli", "sweep", "--config", str(cfg_path),
         "--out", str(out_csv)],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert out_csv.read_text().splitlines()[0] == CSV_HEADER

    res = subprocess.run(
        [sys.executable, "-m", "ibflow.cli", "verify", "--out", str(tmp_path / "verify.json")],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["pass"]

    cmp_cfg = tmp_path / "cmp.json"
    cmp_cfg.write_text(json.dumps({
        "family": "diagonal", "alpha": 0.1, "s": 0.0, "n": 5, "d": 20,
        "r_star": 2, "noise_std": 0.1, "seed": 1,
    }))
    res = subprocess.run(
        [sys.executable, "-m", "ibflow.cli", "compare", "--config", str(cmp_cfg),
         "--out", str(tmp_path / "compare.json")],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    report = json.loads((tmp_path / "compare.json").read_text())
    assert report["pass"]

    (tmp_path / "ccfg.json").write_text(json.dumps({"grid_n": 41}))
    res = subprocess.run(
        [sys.executable, "-m", "ibflow.cli", "contour", "--out", str(tmp_path / "panels"),
         "--config", str(tmp_path / "ccfg.json")],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "panels" / "contour_manifest.json").exists()


def test_cli_byte_reproducible(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "n": 4, "d": 12, "r_star": 2, "noise_std": 0.1, "seeds": [0],
        "alpha_grid": [0.1], "s_grid": [0.0, 0.3],
    }))
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        res = subprocess.run(
            [sys.executable, "-m", "ibflow.cli", "sweep", "--config", str(cfg),
             "--out", str(out)],
            capture_output=True, text=True,
        )
        assert res.returncode == 0, res.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
