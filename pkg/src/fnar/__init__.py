"""Factor network autoregression on multilayer networks."""

from .bootstrap import BootstrapResult, run_bootstrap
from .estimation import (
    FnarFit,
    PanelSeries,
    RankDeficiencyError,
    fit_heterogeneous,
    fit_ols,
    fit_sur,
    forecast_one_step,
    rescale_to_layers,
    simulate_y,
)
from .forecastlab import ForecastReport, WindowPlan, diebold_mariano, run_comparison
from .montecarlo import SyntheticSpec, generate
from .netfactors import (
    FactorModel,
    estimate_factor_model,
    factor_row_sums,
    select_rank,
    variance_explained,
    variance_explained_link,
)
from .netweights import (
    FlowRecord,
    WeightPanel,
    build_symmetric_share_weights,
    cosine_similarity_matrix,
    fill_missing,
    moving_average_smooth,
)
from .tensor3 import Tensor3, frobenius_norm, mat, mode_mul, unmat

__version__ = "0.1.0"
