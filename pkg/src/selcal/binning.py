"""Equal-mass grouping shared by the ECE metric and histogram binning."""

from __future__ import annotations

import numpy as np


def equal_mass_group_sizes(n: int, m: int) -> np.ndarray:
    """Sizes of m contiguous groups covering n sorted items.

    Sizes differ by at most one; the larger groups come first, i.e. they are
    assigned to the lower-confidence end once the data is sorted ascending.
    """
    if m < 1:
        raise ValueError(f"group count must be >= 1, got {m}")
    if m > n:
        raise ValueError(f"cannot split {n} items into {m} equal-mass groups")
    base, rem = divmod(n, m)
    sizes = np.full(m, base, dtype=np.int64)
    sizes[:rem] += 1
    return sizes


def group_slices(n: int, m: int) -> list[slice]:
    """Slices of the sorted array for each equal-mass group."""
    sizes = equal_mass_group_sizes(n, m)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
