"""Global numeric tolerance scale.

Every invariant check multiplies its base tolerance by a single scale factor,
so CI and exploratory runs can tighten or relax all checks at once.
"""
from contextlib import contextmanager

_scale = 1.0


def get_scale() -> float:
    return _scale


def set_scale(scale: float) -> None:
    global _scale
    if not scale > 0:
        raise ValueError(f"tolerance scale must be positive, got {scale!r}")
    _scale = float(scale)


@contextmanager
def scaled(scale: float):
    """Temporarily replace the tolerance scale."""
    old = _scale
    set_scale(scale)
    try:
        yield
    finally:
        set_scale(old)


def tol(base: float) -> float:
    return base * _scale
