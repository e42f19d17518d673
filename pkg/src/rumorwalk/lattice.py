"""Geometry of the integer lattice Z^d: norms, closed cubes and neighbour offsets."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

MAX_DIM = 3
COORD_LIMIT = 1 << 62

Site = tuple[int, ...]


def as_site(x: Sequence[int]) -> Site:
    site = tuple(int(c) for c in x)
    if any(abs(c) >= COORD_LIMIT for c in site):
        raise OverflowError(f"coordinate out of range in {site}")
    return site


def norm_inf(x: Sequence[int]) -> int:
    return max((abs(int(c)) for c in x), default=0)


def norm_l2(x: Sequence[float]) -> float:
    return math.sqrt(sum(float(c) * float(c) for c in x))


def cube_contains(radius: float, x: Sequence[int]) -> bool:
    """Membership in the closed cube [-radius, radius]^d."""
    return all(-radius <= c <= radius for c in x)


def neighbor_offsets(d: int) -> np.ndarray:
    """The 2d unit offsets ordered e_1..e_d, -e_1..-e_d, as a (2d, d) int64 array."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if d > MAX_DIM:
        raise ValueError(f"dimension {d} exceeds the supported maximum {MAX_DIM}")
    eye = np.eye(d, dtype=np.int64)
    return np.concatenate([eye, -eye])


def check_dimension(d: int) -> int:
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"dimension must lie in [1, {MAX_DIM}], got {d}")
    return d


def format_site(x: Sequence[int]) -> str:
    """Comma-separated form used in CSV columns."""
    return ",".join(str(int(c)) for c in x)


def parse_site(text: str) -> Site:
    text = text.strip().strip("()")
    if not text:
        raise ValueError("empty site")
    return as_site(int(tok) for tok in text.split(","))
