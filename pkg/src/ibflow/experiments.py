"""Experiment orchestration: regime sweeps over (scale, shape) grids, contour
grids of the radial regularizer, flow-vs-solver comparisons, and the warp
verification suite.  All outputs are deterministic functions of the config
(CSV floats are written with shortest round-trip repr) and carry the
versioned header ``# ibflow-csv v1``.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import Dataset, gen_sparse_regression, population_error
from .exceptions import ParameterError, ScopeError
from .flow import FlowOptions, Trajectory, drift_report_normalized, integrate
from .kkt import (
    KKTReport,
    kkt_residuals,
    leaky_kkt_check,
    solve_diagonal,
    solve_radial,
)
from .models import (
    InitShapeScale,
    balanced_multi_init,
    init_from_shape_scale,
    predictor,
)
from .regularizers import (
    DiagonalQ,
    RadialQ,
    k_from_init,
    qhat_radial,
    radial_linear_anchor,
    shape_scale_algebra,
)
from .warp import g_hat, hessian_map_defect, metric_tensor_fc, warp_integral

__all__ = [
    "CSV_HEADER",
    "ExperimentConfig",
    "SweepCell",
    "run_sweep",
    "write_sweep_csv",
    "run_contour",
    "run_compare",
    "run_verify",
    "run_simulate",
    "run_solve",
]

CSV_HEADER = "# ibflow-csv v1"


def _fmt(v) -> str:
    # shortest round-trip decimal; plain-float repr regardless of numpy scalar types
    return repr(float(v))

_DEFAULT_PANELS = (
    (2.0, 0.0),
    (2.0, 0.2),
    (2.0, 0.8),
    (0.01, 0.1),
    (1.0, 0.1),
    (2.5, 0.1),
)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "sweep"
    # dataset
    n: int = 40
    d: int = 200
    r_star: int = 5
    noise_std: float = 0.1
    seed: int = 0
    seeds: tuple[int, ...] = (0,)
    # model selection
    family: str = "diagonal"
    alpha: float = 0.01
    s: float = 0.0
    rho: float = 1.0
    m: int = 1
    # grids
    alpha_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    s_grid: tuple[float, ...] = (0.0, 0.5, 0.9, 0.99)
    via: str = "flow"
    # flow options
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    stop_feasibility: float = 1e-8
    t_max: float = 1e9
    record_stride: int = 10
    # solver
    solver_tol: float = 1e-10
    max_rel_distance: float = 1e-2
    # contour grid
    window: tuple[float, float] = (-3.0, 3.0)
    grid_n: int = 201
    panels: tuple[tuple[float, float], ...] = _DEFAULT_PANELS
    contour_orientation: tuple[float, float] = (0.6, 0.8)
    # execution
    out: str | None = None
    paper_scale: bool = False
    jobs: int = 1

    def __post_init__(self):
        if len(self.alpha_grid) == 0 or len(self.s_grid) == 0:
            raise ParameterError("grids must be nonempty")
        if any(a <= 0 for a in self.alpha_grid):
            raise ParameterError("alpha grid entries must be positive")
        if any(not abs(s) < 1 for s in self.s_grid):
            raise ParameterError("|s| grid entries must be < 1")
        if self.via not in ("flow", "solver"):
            raise ParameterError(f"via must be 'flow' or 'solver', got {self.via!r}")

    def flow_options(self) -> FlowOptions:
        return FlowOptions(
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
            stop_feasibility=self.stop_feasibility,
            t_max=self.t_max,
            record_stride=self.record_stride,
        )

    def dims(self) -> tuple[int, int]:
        if self.paper_scale:
            return 100, 1000
        return self.n, self.d

    def to_json_dict(self) -> dict:
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        out["alpha_grid"] = list(self.alpha_grid)
        out["s_grid"] = list(self.s_grid)
        out["window"] = list(self.window)
        out["panels"] = [list(p) for p in self.panels]
        out["contour_orientation"] = list(self.contour_orientation)
        return out

    @classmethod
    def from_json_dict(cls, payload: dict) -> "ExperimentConfig":
        kwargs = dict(payload)
        for key in ("seeds", "alpha_grid", "s_grid", "window", "contour_orientation"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "panels" in kwargs:
            kwargs["panels"] = tuple(tuple(p) for p in kwargs["panels"])
        return cls(**kwargs)


@dataclass(frozen=True)
class SweepCell:
    alpha: float
    s: float
    seed: int
    pop_error: float
    train_residual: float
    converged: bool

    def __post_init__(self):
        if self.alpha <= 0 or not abs(self.s) < 1:
            raise ParameterError("invalid cell coordinates")
        if self.pop_error < 0 or self.train_residual < 0:
            raise ParameterError("errors must be nonnegative")


# ---------------------------------------------------------------------------
# sweep


def _cell_rng(seed: int, ai: int, si: int) -> np.random.Generator:
    # stable per-cell stream: cell randomness must not depend on execution order
    return np.random.default_rng(np.random.SeedSequence([seed, ai, si]))


def _random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _sweep_cell(config: ExperimentConfig, dataset: Dataset, seed: int, ai: int, si: int):
    alpha = config.alpha_grid[ai]
    s = config.s_grid[si]
    n, d = dataset.n, dataset.d
    rng = _cell_rng(seed, ai, si)

    if config.family == "diagonal":
        params0 = init_from_shape_scale(InitShapeScale(alpha, s), "diagonal", d=d)
    elif config.family == "fc_single":
        orientation = _random_unit(rng, d)
        params0 = init_from_shape_scale(
            InitShapeScale(alpha, s, orientation), "fc_single"
        )
    else:
        raise ParameterError(f"sweep supports diagonal or fc_single, got {config.family!r}")

    if config.via == "flow":
        traj = integrate(params0, dataset, config.flow_options())
        w = traj.terminal_predictor
        converged = traj.converged
        train_residual = float(traj.feas_residuals[-1])
    else:
        if config.family == "diagonal":
            report = solve_diagonal(dataset, k_from_init(params0), config.solver_tol)
        else:
            algebra = shape_scale_algebra(alpha, s)
            report = solve_radial(
                dataset, algebra.delta, alpha * params0.W[:, 0] / np.linalg.norm(params0.W[:, 0]),
                config.solver_tol,
            )
        w = report.w
        converged = report.converged
        train_residual = report.feasibility_residual

    return SweepCell(
        alpha=alpha,
        s=s,
        seed=seed,
        pop_error=population_error(w, dataset),
        train_residual=train_residual,
        converged=converged,
    )


def _sweep_cell_job(args):
    config_payload, seed, ai, si = args
    config = ExperimentConfig.from_json_dict(config_payload)
    n, d = config.dims()
    dataset = gen_sparse_regression(n, d, config.r_star, config.noise_std, seed)
    return _sweep_cell(config, dataset, seed, ai, si)


def run_sweep(config: ExperimentConfig) -> list[SweepCell]:
    """One cell per (alpha, s, seed), row-major over the grid per seed.

    The dataset is a function of the seed alone (so cells within a seed see
    the same problem and differ only in initialization); per-cell randomness,
    where the family has any, comes from a (seed, alpha-index, s-index)
    stream.  Non-converged cells are recorded, never dropped.
    """
    n, d = config.dims()
    jobs = [
        (seed, ai, si)
        for seed in config.seeds
        for ai in range(len(config.alpha_grid))
        for si in range(len(config.s_grid))
    ]
    if config.jobs > 1:
        payload = config.to_json_dict()
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            cells = list(pool.map(_sweep_cell_job, [(payload, *j) for j in jobs]))
        return cells

    cells = []
    datasets: dict[int, Dataset] = {}
    for seed, ai, si in jobs:
        if seed not in datasets:
            datasets[seed] = gen_sparse_regression(n, d, config.r_star, config.noise_std, seed)
        cells.append(_sweep_cell(config, datasets[seed], seed, ai, si))
    return cells


def write_sweep_csv(cells: list[SweepCell], path: str):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.write("alpha,s,seed,pop_error,train_residual,converged\n")
        for c in cells:
            fh.write(
                f"{_fmt(c.alpha)},{_fmt(c.s)},{c.seed},{_fmt(c.pop_error)},"
                f"{_fmt(c.train_residual)},{str(c.converged).lower()}\n"
            )


# ---------------------------------------------------------------------------
# contour


def _radial_grid_values(delta: float, wtilde0: np.ndarray, grid: np.ndarray):
    W1, W2 = np.meshgrid(grid, grid, indexing="ij")
    norm = np.sqrt(W1 * W1 + W2 * W2)
    R = np.sqrt(norm * norm + 0.25 * delta * delta)
    z = radial_linear_anchor(delta, wtilde0)
    return (R - delta) * np.sqrt(R + 0.5 * delta) + z[0] * W1 + z[1] * W2


def run_contour(config: ExperimentConfig, out_dir: str | None = None) -> list[dict]:
    """Evaluate the radial regularizer of each (alpha, s) panel on a square
    grid; one CSV (and metadata JSON) per panel."""
    out_dir = out_dir or config.out or "."
    os.makedirs(out_dir, exist_ok=True)
    lo, hi = config.window
    grid = np.linspace(lo, hi, config.grid_n)
    orientation = np.asarray(config.contour_orientation, dtype=float)
    orientation = orientation / np.linalg.norm(orientation)

    panels = []
    for idx, (alpha, s) in enumerate(config.panels):
        delta = shape_scale_algebra(alpha, s).delta
        wtilde0 = alpha * orientation
        values = _radial_grid_values(delta, wtilde0, grid)

        imin = np.unravel_index(int(np.argmin(values)), values.shape)
        min_point = (float(grid[imin[0]]), float(grid[imin[1]]))
        nearest = (
            float(grid[int(np.argmin(np.abs(grid - wtilde0[0])))]),
            float(grid[int(np.argmin(np.abs(grid - wtilde0[1])))]),
        )

        csv_name = f"contour_panel_{idx:02d}.csv"
        meta_name = f"contour_panel_{idx:02d}.json"
        with open(os.path.join(out_dir, csv_name), "w") as fh:
            fh.write(CSV_HEADER + "\n")
            fh.write("alpha,s,w1,w2,q_value\n")
            for i, w1 in enumerate(grid):
                for j, w2 in enumerate(grid):
                    fh.write(
                        f"{_fmt(alpha)},{_fmt(s)},{_fmt(w1)},{_fmt(w2)},{_fmt(values[i, j])}\n"
                    )
        meta = {
            "alpha": alpha,
            "s": s,
            "delta": delta,
            "wtilde0": wtilde0.tolist(),
            "window": [lo, hi],
            "grid_n": config.grid_n,
            "csv": csv_name,
            "min_point": list(min_point),
            "nearest_grid_point_to_wtilde0": list(nearest),
            "min_at_wtilde0": min_point == nearest,
        }
        with open(os.path.join(out_dir, meta_name), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        panels.append(meta)

    with open(os.path.join(out_dir, "contour_manifest.json"), "w") as fh:
        json.dump({"panels": [p["csv"] for p in panels]}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return panels


# ---------------------------------------------------------------------------
# compare


def _trajectory_summary(traj: Trajectory) -> dict:
    return {
        "converged": traj.converged,
        "feasibility_residual": float(traj.feas_residuals[-1]),
        "loss": float(traj.losses[-1]),
        "t_final": float(traj.times[-1]),
        "drift_normalized": drift_report_normalized(traj),
        "n_accepted": traj.n_accepted,
    }


def _report_summary(report: KKTReport) -> dict:
    return {
        "stationarity_residual": report.stationarity_residual,
        "feasibility_residual": report.feasibility_residual,
        "iterations": report.iterations,
        "converged": report.converged,
    }


def run_compare(config: ExperimentConfig) -> dict:
    """Run the flow and the constrained solver on one configuration and
    report the relative distance between the two predictors along with both
    KKT residual pairs and the conservation drift."""
    n, d = config.dims()
    dataset = gen_sparse_regression(n, d, config.r_star, config.noise_std, config.seed)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    opts = config.flow_options()
    alpha, s = config.alpha, config.s

    if config.family == "diagonal":
        params0 = init_from_shape_scale(InitShapeScale(alpha, s), "diagonal", d=d)
        traj = integrate(params0, dataset, opts)
        spec = DiagonalQ(k=k_from_init(params0))
        solver = solve_diagonal(dataset, spec.k, config.solver_tol)
    elif config.family == "fc_single":
        if s < 0:
            raise ScopeError(
                "single-neuron guarantee needs nonnegative imbalance "
                f"(delta >= 0, i.e. s >= 0): got s={s}"
            )
        orientation = _random_unit(rng, d)
        params0 = init_from_shape_scale(InitShapeScale(alpha, s, orientation), "fc_single")
        traj = integrate(params0, dataset, opts)
        delta = shape_scale_algebra(alpha, s).delta
        spec = RadialQ(delta=delta, wtilde0=alpha * orientation)
        solver = solve_radial(dataset, delta, spec.wtilde0, config.solver_tol)
    elif config.family == "fc_balanced":
        if config.m < 2:
            raise ScopeError("fc_balanced needs m >= 2 neurons")
        a = rng.standard_normal(config.m)
        a *= np.sqrt(alpha) / np.linalg.norm(a)
        c = _random_unit(rng, d)
        params0 = balanced_multi_init(a, c)
        traj = integrate(params0, dataset, opts)
        wtilde0 = float(a @ a) * c
        spec = RadialQ(delta=0.0, wtilde0=wtilde0)
        solver = solve_radial(dataset, 0.0, wtilde0, config.solver_tol)
    elif config.family == "leaky":
        if config.rho <= 0:
            raise ScopeError(f"leaky guarantee needs rho > 0: got rho={config.rho}")
        if s < 0:
            raise ScopeError(
                "single-neuron guarantee needs nonnegative imbalance "
                f"(delta >= 0, i.e. s >= 0): got s={s}"
            )
        orientation = _random_unit(rng, d)
        params0 = init_from_shape_scale(
            InitShapeScale(alpha, s, orientation), "leaky", rho=config.rho
        )
        traj = integrate(params0, dataset, opts)
        delta = shape_scale_algebra(alpha, s).delta
        wtilde0 = alpha * orientation
        terminal = traj.terminal_params
        leaky_report = leaky_kkt_check(terminal, dataset, wtilde0)
        # solver route: the slope pattern of the terminal neuron turns the
        # constraint into a linear system over slope-warped samples
        zx = dataset.X.T @ terminal.w
        cpat = np.where(zx >= 0, 1.0, config.rho)
        warped = Dataset(X=dataset.X * cpat, y=dataset.y)
        spec = RadialQ(delta=delta, wtilde0=wtilde0)
        solver = solve_radial(warped, delta, wtilde0, config.solver_tol)
        w_flow = traj.terminal_predictor
        rel = float(
            np.linalg.norm(w_flow - solver.w) / max(np.linalg.norm(solver.w), 1e-300)
        )
        return {
            "family": config.family,
            "alpha": alpha,
            "s": s,
            "rho": config.rho,
            "seed": config.seed,
            "flow": _trajectory_summary(traj),
            "flow_predictor": w_flow.tolist(),
            "solver_predictor": solver.w.tolist(),
            "solver": _report_summary(solver),
            "flow_kkt": _report_summary(leaky_report),
            "rel_distance": rel,
            "pass": bool(rel <= config.max_rel_distance and traj.converged),
        }
    else:
        raise ParameterError(f"unknown family {config.family!r}")

    w_flow = traj.terminal_predictor
    rel = float(np.linalg.norm(w_flow - solver.w) / max(np.linalg.norm(solver.w), 1e-300))
    flow_kkt = kkt_residuals(spec, w_flow, dataset)
    return {
        "family": config.family,
        "alpha": alpha,
        "s": s,
        "seed": config.seed,
        "flow": _trajectory_summary(traj),
        "flow_predictor": w_flow.tolist(),
        "solver_predictor": solver.w.tolist(),
        "solver": _report_summary(solver),
        "flow_kkt": _report_summary(flow_kkt),
        "rel_distance": rel,
        "pass": bool(rel <= config.max_rel_distance and traj.converged),
    }


# ---------------------------------------------------------------------------
# verify


def run_verify(config: ExperimentConfig) -> dict:
    """Warp verification: the unwarped metric fails the Hessian symmetry
    condition at generic points while the warped field passes; the warp is
    monotone; and the dual-variable integral of a converged run is summable."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 99]))

    defect_unwarped_ref = hessian_map_defect(
        lambda v: metric_tensor_fc(v, 0.0), np.array([1.0, 1.0])
    )
    unwarped = [defect_unwarped_ref]
    warped = []
    for delta in (0.0, 1.0):
        for _ in range(10):
            w = rng.standard_normal(3)
            w *= (0.3 + 2.0 * rng.random()) / np.linalg.norm(w)
            unwarped.append(hessian_map_defect(lambda v: metric_tensor_fc(v, delta), w))
            warped.append(
                hessian_map_defect(
                    lambda v: g_hat(np.linalg.norm(v), delta) * metric_tensor_fc(v, delta),
                    w,
                )
            )

    xs = np.logspace(-3, 3, 61)
    ghat_monotone = all(
        bool(np.all(np.diff(g_hat(xs, delta)) > 0)) for delta in (0.0, 0.1, 10.0)
    )

    # dual-integral monitor on a small converged single-neuron run
    dataset = gen_sparse_regression(3, 6, 2, 0.0, config.seed)
    orientation = _random_unit(rng, 6)
    params0 = init_from_shape_scale(InitShapeScale(0.1, 0.3, orientation), "fc_single")
    traj = integrate(params0, dataset, replace(config.flow_options(), record_stride=1))
    delta = shape_scale_algebra(0.1, 0.3).delta
    integrals = warp_integral(traj, delta)

    report = {
        "defect_unwarped": float(min(unwarped)),
        "defect_unwarped_reference_point": float(defect_unwarped_ref),
        "defect_warped": float(max(warped)),
        "ghat_monotone": ghat_monotone,
        "nu_integral_tail_ratio": integrals["nu_tail_ratio"],
        "tau_diverging": integrals["tau_diverging"],
        "flow_converged": traj.converged,
    }
    report["pass"] = bool(
        report["defect_unwarped"] > 1e-3
        and report["defect_warped"] <= 1e-6
        and ghat_monotone
        and traj.converged
        and integrals["nu_tail_ratio"] < 0.9
        and integrals["tau_diverging"]
    )
    return report


# ---------------------------------------------------------------------------
# single runs


def _single_init(config: ExperimentConfig, d: int, rng: np.random.Generator):
    if config.family == "diagonal":
        return init_from_shape_scale(InitShapeScale(config.alpha, config.s), "diagonal", d=d)
    if config.family == "fc_single":
        return init_from_shape_scale(
            InitShapeScale(config.alpha, config.s, _random_unit(rng, d)), "fc_single"
        )
    if config.family == "leaky":
        return init_from_shape_scale(
            InitShapeScale(config.alpha, config.s, _random_unit(rng, d)),
            "leaky",
            rho=config.rho,
        )
    raise ParameterError(f"unknown family {config.family!r}")


def run_simulate(config: ExperimentConfig) -> tuple[Trajectory, dict]:
    n, d = config.dims()
    dataset = gen_sparse_regression(n, d, config.r_star, config.noise_std, config.seed)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    params0 = _single_init(config, d, rng)
    traj = integrate(params0, dataset, config.flow_options())
    summary = _trajectory_summary(traj)
    summary["pop_error"] = population_error(traj.terminal_predictor, dataset)
    summary["pass"] = traj.converged
    return traj, summary


def run_solve(config: ExperimentConfig) -> KKTReport:
    n, d = config.dims()
    dataset = gen_sparse_regression(n, d, config.r_star, config.noise_std, config.seed)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    if config.family == "diagonal":
        params0 = init_from_shape_scale(
            InitShapeScale(config.alpha, config.s), "diagonal", d=d
        )
        return solve_diagonal(dataset, k_from_init(params0), config.solver_tol)
    if config.family == "fc_single":
        orientation = _random_unit(rng, d)
        delta = shape_scale_algebra(config.alpha, config.s).delta
        return solve_radial(dataset, delta, config.alpha * orientation, config.solver_tol)
    raise ParameterError(f"solve supports diagonal or fc_single, got {config.family!r}")
