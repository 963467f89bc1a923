"""multivox: resampling and ensemble strategies for speaker-imbalanced acoustic modeling.

Library layout:

- :mod:`multivox.corpus` - corpus data model and training-set builders
- :mod:`multivox.corpus_files` - on-disk corpus / feature-record format
- :mod:`multivox.synthgen` - deterministic synthetic-speaker corpus generator
- :mod:`multivox.features` - spectral frames and mel-scale F0 quantization
- :mod:`multivox.model` - from-scratch trainable networks (spectral regressor
  and autoregressive F0 classifier)
- :mod:`multivox.ensemble` - non-parametric output combination
- :mod:`multivox.evaluation` - MCD, F0 correlation, V/UV error, exact binomial test
- :mod:`multivox.harness` - experiment plans, orchestration and the AB-test stand-in
- :mod:`multivox.cli` - command-line interface
"""

from .errors import (
    CoverageError,
    MultivoxError,
    TrainingDivergedError,
    UndefinedMetricError,
    ValidationError,
)
from .features import (
    AcousticFrame,
    AcousticSequence,
    FeatureConfig,
    UNVOICED_CLASS,
    dequantize_f0,
    dequantize_track,
    hz_to_mel,
    mel_to_hz,
    quantize_f0,
    quantize_track,
)
from .corpus import (
    Corpus,
    SpeakerId,
    TrainingSet,
    TrainingSetRecipe,
    Utterance,
    build_bootstrap,
    build_from_recipe,
    build_oversampled,
    build_pooled,
    build_sd,
    build_undersampled,
    expected_unique_count,
    union_unique,
)
from .ensemble import combine_f0, combine_mgc, combine_sequences
from .evaluation import (
    BinomialResult,
    MetricReport,
    MetricRow,
    PreferenceTally,
    build_reports,
    exact_binomial_test,
    f0_correlation,
    mcd,
    vuv_error_rate,
)
from .harness import ExperimentPlan, derive_seed, run, simulate_preference
from .model import (
    AcousticNetwork,
    NetworkTopology,
    TrainedModel,
    TrainingConfig,
    gradient_check,
    load_model,
    save_model,
    train,
)
from .synthgen import GeneratorConfig, SpeakerProfile, generate_corpus

__version__ = "0.1.0"
