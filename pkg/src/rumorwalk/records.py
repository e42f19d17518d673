"""Per-replica time series of observables."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

OBSERVABLES = ("n_infected_sites", "n_B_particles", "R", "L", "max_norm_B", "n_A_in_half_region")


@dataclass
class Snapshot:
    """Particle configuration at one epoch, sorted by id."""

    time: float
    ids: np.ndarray
    pos: np.ndarray
    types: np.ndarray


@dataclass
class ExperimentRecord:
    fingerprint: str
    d: int
    replica: int = 0
    epochs: list = field(default_factory=list)
    columns: dict = field(default_factory=lambda: {name: [] for name in OBSERVABLES})
    extra: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)

    def add(self, t: float, values: dict, snapshot: Optional[Snapshot] = None, extra: Optional[dict] = None):
        if self.epochs and t < self.epochs[-1]:
            raise ValueError("epochs must be non-decreasing")
        self.epochs.append(float(t))
        for name in OBSERVABLES:
            self.columns[name].append(values.get(name))
        for name, value in (extra or {}).items():
            self.extra.setdefault(name, []).append(value)
        if snapshot is not None:
            self.snapshots.append(snapshot)

    def column(self, name: str) -> np.ndarray:
        values = self.columns[name] if name in self.columns else self.extra[name]
        return np.array([np.nan if v is None else v for v in values], dtype=float)

    def times(self) -> np.ndarray:
        return np.asarray(self.epochs, dtype=float)

    def value_at(self, name: str, t: float):
        try:
            j = self.epochs.index(float(t))
        except ValueError:
            raise KeyError(f"no epoch at t={t}") from None
        values = self.columns[name] if name in self.columns else self.extra[name]
        return values[j]

    def __len__(self):
        return len(self.epochs)


def fingerprint(settings: dict) -> str:
    """Short stable hash of a flat settings mapping."""
    text = json.dumps(settings, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
