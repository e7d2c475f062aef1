"""Cross-modal feature attribution toolkit for multi-lead cardiac-style
time-series.

Pipeline: synthesize or load paired 12-lead / 3D-trajectory cases, train a
small differentiable 1D residual classifier, compute per-class feature
attributions (integrated gradients, gradient SHAP, kernel SHAP, LIME),
standardize them into a bipolar profile, project the 12-lead profile onto
the trajectory time axis, and score agreement against expert-annotated
segments with threshold-optimized Dice/IoU and Spearman plus BCa
bootstrap intervals.
"""

from . import (
    agreement,
    attribution,
    autodiff,
    bootstrap,
    crossmodal,
    errors,
    harness,
    model,
    signals,
)

__version__ = "0.1.0"

__all__ = [
    "agreement",
    "attribution",
    "autodiff",
    "bootstrap",
    "crossmodal",
    "errors",
    "harness",
    "model",
    "signals",
    "__version__",
]
