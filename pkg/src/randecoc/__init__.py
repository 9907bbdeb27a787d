"""Random error-correcting output code ensembles over precomputed features."""
from .codec import (
    CodeMatrix,
    class_scores,
    decode,
    generate_random_matrix,
    load_matrix,
    matrix_stats,
    save_matrix,
    validate,
)
from .kernels import BACKEND
from .models import build_embedding, build_independent, build_mtl, predict_bits, predict_class
from .trainer import HyperParams, average_ensembles, evaluate, train_embedding, train_independent, train_mtl

__version__ = "0.1.0"
