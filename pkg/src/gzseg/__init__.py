"""Generalized zero-shot recognition via domain segmentation.

The pipeline trains a temperature-calibrated seen-class classifier, fits a
Weibull model to each class's largest centroid distances, routes test
instances into seen / unseen / uncertain domains, and classifies with a
learned semantic-to-visual embedding, inflating seen-class distances on
the uncertain domain.
"""

from .data import (
    Dataset,
    SplitSpec,
    class_centroid,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .classifier import (
    ClassifierTrainConfig,
    SoftmaxClassifier,
    confidence_score,
    softmax_probs,
    top_classes,
    train_classifier,
)
from .errors import (
    ConfigError,
    FormatError,
    GzsegError,
    NumericalError,
    ValidationError,
)
from .evt import (
    ClassEvtModel,
    EvtThresholds,
    fit_all_classes,
    fit_weibull_tail,
    in_class,
    out_of_class,
    weibull_cdf,
)
from .segmentation import DomainLabel, DomainThresholds, segment, segment_all
from .embedding import (
    CalibrationConfig,
    EmbeddingNet,
    EmbeddingTrainConfig,
    PrototypeSet,
    embed,
    init_prototypes,
    predict,
    train_alternating,
    train_embedding,
    train_embedding_simple,
    train_prototypes,
)
from .evaluation import (
    GzslReport,
    MODES,
    emit_histograms,
    harmonic_mean,
    per_class_top1,
    roc_curve,
    run_ablation,
    run_pipeline,
)

__version__ = "0.1.0"
