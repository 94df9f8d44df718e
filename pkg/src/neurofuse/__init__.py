"""neurofuse: bimodal fMRI-EEG inner-speech decoding at desk scale.

Submodules
----------
dataio    container format, label vocabulary, stratified fold planning
synthgen  synthetic subjects with controllable class structure
eegprep   EEG cleaning chain (reference, filters, ICA, epoching)
fmriprep  single-trial GLM betas, smoothing, mask flattening
features  ANOVA-F scoring, percentile selection, standardization
classify  linear SVM / random forest with simplex probabilities
fusion    late (probability stacking) and early (joint features) fusion
manifold  2-D embeddings and class-structure scoring
harness   cross-validated experiments and Table-style reports
"""

from . import (  # noqa: F401
    classify,
    dataio,
    eegprep,
    features,
    fmriprep,
    fusion,
    harness,
    manifold,
    pipelines,
    synthgen,
)
from .dataio import (  # noqa: F401
    BimodalSubject,
    EEGTrialSet,
    FMRIBetaSet,
    FoldPlan,
    LabelVocab,
    plan_folds,
    read_dataset,
    write_dataset,
)
from .synthgen import SubjectProfile, generate_subject, preset, regime_presets  # noqa: F401

__version__ = "0.1.0"
