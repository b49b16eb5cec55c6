"""Kernel backend selection.

The compiled (numba) backend is used unless ``GMOCP_DISABLE_NUMBA`` is set to
a truthy value or numba cannot be imported.
"""
import importlib
import os
from contextlib import contextmanager

ENV_FLAG = "GMOCP_DISABLE_NUMBA"
BACKENDS = ("numba", "numpy")


def _numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _initial_backend():
    if os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}:
        return "numpy"
    return "numba" if _numba_available() else "numpy"


_active = _initial_backend()


def active_backend():
    return _active


def get_kernels(name=None):
    name = name or _active
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    return importlib.import_module(f"gmocp._kernels_{name}")


@contextmanager
def use_backend(name):
    """Temporarily switch the kernel backend (used by tests and benchmarks)."""
    global _active
    get_kernels(name)
    previous, _active = _active, name
    try:
        yield get_kernels(name)
    finally:
        _active = previous
