"""SHP selection, CGG coherence estimation and phase linking for InSAR stacks.

Thin wrapper over the C++ library. Samples are (N, L) complex arrays,
stacks (N, rows, cols) complex64, rasters (bands, rows, cols) float64.
Configs are JSON text in the same format as the `s2s` command line tool.
"""

import json as _json
import sys as _sys

if _sys.platform.startswith("linux"):
    # Ceres pulls in libunwind, which would otherwise shadow libgcc_s for the
    # extension's _Unwind_Resume while libstdc++ throws through libgcc_s. The
    # mismatch crashes on the first exception. Put libgcc_s in the global scope.
    import ctypes as _ctypes

    try:
        _ctypes.CDLL("libgcc_s.so.1", mode=_ctypes.RTLD_GLOBAL)
    except OSError:
        pass

from ._s2s import (  # noqa: F401
    Error,
    FormatError,
    InvalidArgument,
    cfpl,
    cgg_log_pdf,
    cgg_mle,
    coherence,
    estimate_cgg,
    pta,
    read_raster,
    read_stack,
    rmse,
    select_sshp,
    tyler,
    write_raster,
    write_stack,
)
from . import _s2s

__all__ = [
    "Error", "FormatError", "InvalidArgument", "cfpl", "cgg_log_pdf", "cgg_mle", "coherence",
    "default_config", "estimate_cgg", "power_experiment", "pta", "read_raster", "read_stack",
    "rmse", "run_pipeline", "select_sshp", "simulate", "tyler", "write_raster", "write_stack",
]


def _text(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else _json.dumps(config)


def default_config(paper_scale=False):
    """Every default setting, as a dict."""
    return _json.loads(_s2s.default_config(paper_scale))


def simulate(config=None, paper_scale=False):
    """(stack, true_phases, labels) for the scene section of `config`."""
    return _s2s.simulate(_text(config), paper_scale)


def run_pipeline(stack, config=None):
    """Selection, estimation and phase linking over a stack."""
    return _s2s.run_pipeline(stack, _text(config))


def power_experiment(config=None):
    """One dict per grid point of the power section of `config`."""
    return _s2s.power_experiment(_text(config))
