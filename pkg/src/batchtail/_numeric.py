"""Shared numeric helpers."""

from __future__ import annotations

import math

__all__ = ["snap_floor"]


def snap_floor(x: float, rel_tol: float = 1e-9) -> int:
    """Floor, except values within float noise of an integer snap to it.

    Expressions like ``(10**6) ** (2/3)`` evaluate to
    ``9999.999999999998`` although the underlying real value is exactly
    ``10**4``; a plain floor would lose a whole unit to representation
    error.  Values within ``rel_tol`` (relative) of an integer are
    treated as that integer before flooring.
    """
    nearest = round(x)
    if abs(x - nearest) <= rel_tol * max(1.0, abs(nearest)):
        return int(nearest)
    return int(math.floor(x))
