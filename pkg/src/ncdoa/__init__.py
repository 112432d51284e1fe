"""DOA estimation with non-coherent subarrays of unknown relative phase."""
from .config import ConfigError, ScenarioConfig, load_config, load_preset
from .crb import (CrbResult, NotIdentifiableError, crb_correlated, crb_high_snr_correlated,
                  crb_high_snr_uncorrelated, crb_uncorrelated)
from .geometry import ArrayGeometry, SubarrayGeometry, benchmark_array
from .identifiability import corollary_bound, lag_union, max_identifiable, numeric_kruskal_rank
from .signals import (CovarianceSet, NoiseModel, SourceModel, generate_snapshots,
                      sample_covariances, true_covariances)

__version__ = "0.1.0"
