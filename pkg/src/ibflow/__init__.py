"""Numerical laboratory for the implicit bias of gradient flow in
overparameterized linear models.

The package integrates the flow for three parametric families (diagonal nets
with untied layers, two-layer fully connected linear nets, and a single
leaky-ReLU neuron), evaluates the closed-form implicit regularizers those
flows minimize over the interpolation set, solves the constrained problems
directly through their dual stationarity maps, and verifies that the two
routes land on the same predictor, alongside conservation-law and
metric-tensor (Hessian-map / time-warp) checks and initialization
shape/scale regime experiments.
"""

from .data import Dataset, gen_sparse_regression, load_dataset, population_error, save_dataset
from .exceptions import (
    DuplicateSamplesError,
    FlowBlowupError,
    OverflowGuardError,
    ParameterError,
    ScopeError,
    SingularSystemError,
)
from .flow import (
    FlowOptions,
    Trajectory,
    drift_report,
    drift_report_normalized,
    export_trajectory_csv,
    integrate,
)
from .kkt import (
    KKTReport,
    kkt_residuals,
    l1_oracle,
    leaky_kkt_check,
    min_l2,
    min_weighted_l2,
    solve_diagonal,
    solve_radial,
)
from .models import (
    ConservedDiag,
    ConservedFc,
    DiagonalParams,
    FcParams,
    InitShapeScale,
    LeakyParams,
    balanced_multi_init,
    conserved,
    gradient,
    init_from_shape_scale,
    loss_and_residual,
    params_from_json,
    params_to_json,
    predictor,
    uv_to_shape_scale,
)
from .regularizers import (
    DiagonalQ,
    L1,
    L2,
    MahalanobisAboutInit,
    RadialQ,
    RegularizerSpec,
    WeightedL2,
    k_from_init,
    mahalanobis_B,
    q_eval,
    qhat_radial,
    qhat_radial_inverse,
    qk,
    qk_grad_inverse,
    radial_linear_anchor,
    rkhs_norm,
    shape_scale_algebra,
    spec_from_json,
    spec_to_json,
    weighted_l2_from_init,
)
from .warp import g_hat, hessian_map_defect, metric_tensor_fc, warp_integral

__version__ = "0.1.0"
