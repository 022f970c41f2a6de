"""Online inference for mixed membership stochastic blockmodels.

Batch and incremental collapsed Gibbs sampling, particle filtering with
ESS-gated resampling, and time-dependent variants that forget stale history
when the structure of a streaming directed network changes.
"""

from .drift import DriftTracker, discard_history
from .evaluation import (ClampCounter, EvalReport, emit_report,
                         enumerate_predictive, exact_posterior_oracle,
                         improvement_metric, load_report, testset_loglik)
from .experiments import (Algorithm, GridResult, RunConfig, RunResult,
                          baseline_config, run_experiment, run_grid, run_stream)
from .gibbs import (GibbsConfig, RejuvenationPolicy, incremental_observe,
                    rejuvenate, rejuvenation_pass, run_batch)
from .model import (Assignment, Dyad, DyadRecord, Hyperparams, ModelState,
                    PosteriorEstimate, init_state)
from .smc import (Particle, ParticleSet, derive_rng, ess, pf_init,
                  pf_predictive, pf_step, resample)
from .streams import (GroundTruth, ObservationStream, Role, SplitMask,
                      StreamFormatError, SyntheticConfig, cv_split,
                      generate_synthetic, load_edge_list, load_ground_truth,
                      load_mask, save_edge_list, save_ground_truth, save_mask)

__version__ = "0.1.0"
