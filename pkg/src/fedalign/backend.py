"""Kernel backend selection.

The compiled Cython extension is used when importable, otherwise the pure
numpy fallback. Both expose the same functions; :func:`use` switches at
runtime (the benchmark and the parity tests rely on that). Selection is
purely import-based, no environment variables are consulted.
"""

from __future__ import annotations

from fedalign import _pure
from fedalign.errors import ConfigError

ACT_IDENTITY = _pure.ACT_IDENTITY
ACT_RELU = _pure.ACT_RELU
ACT_TANH = _pure.ACT_TANH

ACTIVATION_CODES = {"identity": ACT_IDENTITY, "relu": ACT_RELU, "tanh": ACT_TANH}

try:
    from fedalign import _kernels as _compiled
except ImportError:
    _compiled = None

_active = _compiled if _compiled is not None else _pure


def available() -> tuple[str, ...]:
    return ("pure",) if _compiled is None else ("compiled", "pure")


def active_name() -> str:
    return _active.NAME


def use(name: str) -> None:
    """Select the kernel implementation by name ("compiled" or "pure")."""
    global _active
    if name == "pure":
        _active = _pure
    elif name == "compiled":
        if _compiled is None:
            raise ConfigError("compiled kernels are not available in this install")
        _active = _compiled
    elif name == "auto":
        _active = _compiled if _compiled is not None else _pure
    else:
        raise ConfigError(f"unknown backend {name!r}")


def kernels():
    """The currently selected kernel module."""
    return _active
