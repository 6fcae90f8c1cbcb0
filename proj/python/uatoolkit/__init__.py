"""Uncertainty-aware image classification toolkit.

Thin python surface over the C++ core: MC-dropout prediction, Deep Taylor
attribution, percentile threshold calibration, and the synthetic dataset
generator.
"""

try:
    # installed layout: the extension lives inside the package
    from ._uat import (
        Model,
        calibrate,
        generate_dataset,
        load_model,
        read_pgm,
        removal_curve,
        summarize,
        train_reference,
        write_pgm,
    )
except ImportError:  # development layout: extension on sys.path
    from _uat import (
        Model,
        calibrate,
        generate_dataset,
        load_model,
        read_pgm,
        removal_curve,
        summarize,
        train_reference,
        write_pgm,
    )

__all__ = [
    "Model",
    "calibrate",
    "generate_dataset",
    "load_model",
    "read_pgm",
    "removal_curve",
    "summarize",
    "train_reference",
    "write_pgm",
]
