"""Pointwise finite differences on a uniform grid.

Spatial operators act on one time level ``values[j]``; temporal operators act
on the history of one node, ``hist[n]`` (any indexable, e.g. a dict holding
only the levels needed).
"""
from __future__ import annotations


class StencilError(IndexError):
    """Stencil reaches outside the available data."""


def _get(seq, i):
    if i < 0:
        raise StencilError(f"level/index {i} is negative")
    try:
        return seq[i]
    except (IndexError, KeyError):
        raise StencilError(f"level/index {i} is not available") from None


def spatial_diff(kind: str, values, dx: float, j: int) -> float:
    n_nodes = len(values)
    if n_nodes < 2:
        raise StencilError("a spatial slice needs at least two nodes")
    last = n_nodes - 1
    if kind == "forward":
        if not 0 <= j <= last - 1:
            raise StencilError(f"forward difference undefined at j={j}")
        return (values[j + 1] - values[j]) / dx
    if kind == "backward":
        if not 1 <= j <= last:
            raise StencilError(f"backward difference undefined at j={j}")
        return (values[j] - values[j - 1]) / dx
    if kind == "centered":
        if not 1 <= j <= last - 1:
            raise StencilError(f"centered difference undefined at j={j}")
        return (values[j + 1] - values[j - 1]) / (2 * dx)
    raise ValueError(f"unknown spatial difference {kind!r}")


def second_diff(values, dx: float, j: int) -> float:
    """``d_x^+ d_x^-`` at interior node j."""
    if not 1 <= j <= len(values) - 2:
        raise StencilError(f"second difference undefined at j={j}")
    return (values[j + 1] - 2 * values[j] + values[j - 1]) / (dx * dx)


def temporal_diff(kind: str, hist, dt: float, n: int) -> float:
    if kind == "forward":
        return (_get(hist, n + 1) - _get(hist, n)) / dt
    if kind == "backward":
        return (_get(hist, n) - _get(hist, n - 1)) / dt
    if kind == "centered":
        return (_get(hist, n + 1) - _get(hist, n - 1)) / (2 * dt)
    if kind == "bdf2":
        if n < 2:
            raise StencilError("bdf2 needs n >= 2")
        return (3 * _get(hist, n) - 4 * _get(hist, n - 1) + _get(hist, n - 2)) / (2 * dt)
    if kind == "switched":
        if n < 1:
            raise StencilError("switched difference needs n >= 1")
        return temporal_diff("bdf2" if n >= 2 else "backward", hist, dt, n)
    raise ValueError(f"unknown temporal difference {kind!r}")


def second_temporal_diff(hist, dt: float, n: int) -> float:
    """``d_t^+ d_t^-`` at level n."""
    return (_get(hist, n + 1) - 2 * _get(hist, n) + _get(hist, n - 1)) / (dt * dt)
