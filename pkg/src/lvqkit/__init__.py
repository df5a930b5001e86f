"""lvqkit: prototype classifiers with adaptive angle and Euclidean
dissimilarities, native missing-value handling, geodesic oversampling,
cross-validation, and interpretability exports."""

from . import backends, errors, geometry
from .data import (
    CsvSchema,
    LabeledDataset,
    ZScoreParams,
    generate_football,
    load_cleveland,
    load_csv,
    make_dataset,
    parse_cleveland,
    parse_csv,
    relabel,
    save_csv,
    zscore_apply,
    zscore_fit,
    zscore_invert,
)
from .model import (
    MarginTerms,
    PrototypeModel,
    TrainingConfig,
    TrainTrace,
    Variant,
    cost,
    deserialize,
    dissimilarity_matrix,
    gamma_weights,
    init_model,
    load_model,
    margin_terms,
    predict,
    save_model,
    serialize,
    sgd_step,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "CsvSchema",
    "LabeledDataset",
    "MarginTerms",
    "PrototypeModel",
    "TrainTrace",
    "TrainingConfig",
    "Variant",
    "ZScoreParams",
    "backends",
    "cost",
    "deserialize",
    "dissimilarity_matrix",
    "errors",
    "gamma_weights",
    "generate_football",
    "geometry",
    "init_model",
    "load_cleveland",
    "load_csv",
    "load_model",
    "make_dataset",
    "margin_terms",
    "parse_cleveland",
    "parse_csv",
    "predict",
    "relabel",
    "save_csv",
    "save_model",
    "serialize",
    "sgd_step",
    "train",
    "zscore_apply",
    "zscore_fit",
    "zscore_invert",
]
