"""Fidelity decay and correlation functions of the kicked Ising spin chain."""

import os

# the bundled TBB is too old for numba and only produces a warning
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .state import KickedIsingParams, StateVector, configure_threads  # noqa: E402

__version__ = "0.1.0"

__all__ = ["KickedIsingParams", "StateVector", "configure_threads", "__version__"]
