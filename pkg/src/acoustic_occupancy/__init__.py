"""Audio-based room occupancy estimation.

MFCC + delta features feed one diagonal GMM per occupancy bin (bins are the
integer square root of the head count). Window predictions aggregate
per-frame bin posteriors or majority-vote the frame decisions, optionally
after HMM decoding across frames. A Poisson GLM on summary statistics
serves as the baseline, and a leave-two-out bootstrap picks the window
size and strategy.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    IngestError,
    InsufficientAudioError,
    NumericError,
    OccupancyError,
)
from .features import AudioClip, FeatureConfig, FeatureMatrix, SummaryFeatures, extract_features
from .gmm import DEFAULT_CANDIDATES, DiagonalGmm, EmConfig, fit_em, select_by_bic
from .hmm import HmmSpec, StatePath, forward_log_prob, heuristic_transitions, state_posteriors, viterbi
from .occupancy import (
    BinModelSet,
    bin_to_occupancy,
    occupancy_to_bin,
    predict_mv,
    predict_ppa,
    predict_window,
    score_grid,
    train_bin_models,
)
from .baseline import GlmModel, fit_poisson, predict_poisson
