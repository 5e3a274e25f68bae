"""EINN solver for McKean-Vlasov equations (C++ core)."""

from ._einn import (
    SchemaError,
    __version__,
    compare_reports,
    conv_estimate,
    convolution_field,
    density,
    gradcheck,
    parse_config,
    run_experiment,
    score,
)

__all__ = [
    "SchemaError",
    "__version__",
    "compare_reports",
    "conv_estimate",
    "convolution_field",
    "density",
    "gradcheck",
    "parse_config",
    "run_experiment",
    "score",
]
