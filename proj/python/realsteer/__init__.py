"""Python bindings for the realsteer core."""

import json

from ._realsteer import (
    RealsteerError,
    apply_step,
    calibrate_threshold,
    compute_direction,
    dft2d_centered_logmag,
    hsic_linear,
    interpolate_spatial,
    lambda_at,
    topk_eigh,
)
from ._realsteer import run_toy_experiment as _run_toy_experiment


def run_toy_experiment(**kwargs):
    """Toy end-to-end run; returns the RunRecord as a dict."""
    return json.loads(_run_toy_experiment(**kwargs))


__all__ = [
    "RealsteerError",
    "apply_step",
    "calibrate_threshold",
    "compute_direction",
    "dft2d_centered_logmag",
    "hsic_linear",
    "interpolate_spatial",
    "lambda_at",
    "run_toy_experiment",
    "topk_eigh",
]
