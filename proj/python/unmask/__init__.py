"""Feature-alignment detection and defense against adversarial images."""

import os as _os

_data = _os.path.join(_os.path.dirname(__file__), "data")
if _os.path.isdir(_data):
    _os.environ.setdefault("UNMASK_DATA_DIR", _data)

from ._unmask import (
    ClassFeatureMatrix,
    ClassSet,
    TinyNet,
    UnmaskError,
    bundled_matrix,
    class_set,
    detect,
    generate,
    jaccard,
    load_checkpoint,
    load_matrix,
    pgd_linf,
    rectify,
    roc,
    run_cli,
    wilcoxon_auc,
)

__all__ = [
    "ClassFeatureMatrix",
    "ClassSet",
    "TinyNet",
    "UnmaskError",
    "bundled_matrix",
    "class_set",
    "detect",
    "generate",
    "jaccard",
    "load_checkpoint",
    "load_matrix",
    "pgd_linf",
    "rectify",
    "roc",
    "run_cli",
    "wilcoxon_auc",
]
