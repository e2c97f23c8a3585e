"""Sequential piecewise expanding interval dynamics and their verification suite."""

__version__ = "0.1.0"

from .errors import (ConfigError, MinorationError, ResourceLimitError,
                     SeqdynError, UnsupportedRepresentationError)
from .maps import (Branch, IntervalMap, LyConstants, MapSequence, Partition,
                   beta_map, composition_partition, covering_horizon,
                   distortion_bound, eval_map, inverse_derivative_sums,
                   lasota_yorke_constants, orbit, preimages)
from .transfer import (DecayEstimate, GridFn, MartingaleDecomp, MinorationReport,
                       PiecewiseFn, apply_transfer, apply_transfer_ulam, bv_norm,
                       conditional_expectation_kp, correlation, decay_rate,
                       ergodic_sum_variance, martingale_decomposition,
                       minoration_check, pushforward_density)
from .stochastic import (AscltReport, Cdf, ConcentrationReport,
                         EmpiricalMeasureReport, Observable, OrbitEnsemble,
                         TailReport, asclt_report, concentration_mgf,
                         conditional_expectation_mc, empirical_measure_tail,
                         kantorovich, ld_tail, sample_orbits, shadowing_stat)

__all__ = [name for name in dir() if not name.startswith("_")]
