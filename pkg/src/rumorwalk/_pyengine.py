"""Pure-Python event engine.

Used when the compiled extension is unavailable, and as the reference the
compiled engine is checked against.  The two share their public surface and
consume randomness identically, so their outputs agree exactly.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .rng import direction, holding_time

TYPE_A = 0
TYPE_B = 1

KIND_START = 0
KIND_MOVED = 1
KIND_HANDOFF = 2
KIND_OCCUPANCY = 3
KIND_TARGET = 4


def _dist2(a, b) -> int:
    return sum((x - y) * (x - y) for x, y in zip(a, b))


class Engine:
    backend = "python"

    def __init__(self, d, rate_a, rate_b, key, ids, pos, ptype, now=0.0):
        self.d = int(d)
        self.rate_a = float(rate_a)
        self.rate_b = float(rate_b)
        self.key = int(key)
        self.now = float(now)
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.asarray(pos, dtype=np.int64).reshape(len(ids), self.d)
        ptype = np.asarray(ptype, dtype=np.int8)
        self.n = len(ids)
        self._ids = [int(i) for i in ids]
        if len(set(self._ids)) != self.n:
            raise ValueError("particle ids must be unique")
        self._slot = {pid: s for s, pid in enumerate(self._ids)}
        self._pos = [tuple(int(c) for c in row) for row in pos]
        self._type = [int(t) for t in ptype]
        self._switch = [self.now if t == TYPE_B else math.nan for t in self._type]
        self._counter = [0] * self.n
        self._next = [0.0] * self.n
        self._version = [0] * self.n
        self._mark = [False] * self.n
        self._sites: dict[tuple, set[int]] = {}
        self._count_a: dict[tuple, int] = {}
        self._count_b: dict[tuple, int] = {}
        self._first: dict[tuple, float] = {}
        self.n_b = 0
        self.n_events = 0
        self._heap: list = []
        for s in range(self.n):
            self._add(s, self._pos[s])
            if self._type[s] == TYPE_B:
                self.n_b += 1
        for site, cb in self._count_b.items():
            if cb > 0:
                self._first[site] = self.now
        for s in range(self.n):
            self._schedule(s)
        self._offsets = [tuple(int(c) for c in row) for row in
                         np.concatenate([np.eye(self.d, dtype=np.int64), -np.eye(self.d, dtype=np.int64)])]
        self._tracking = False
        self._log: list = []

    # -- bookkeeping -----------------------------------------------------

    def _rate(self, s):
        return self.rate_b if self._type[s] == TYPE_B else self.rate_a

    def _schedule(self, s):
        pid = self._ids[s]
        self._next[s] = self.now + holding_time(self.key, pid, self._counter[s], self._rate(s))
        self._version[s] += 1
        if self._next[s] != math.inf:
            heapq.heappush(self._heap, (self._next[s], pid, s, self._version[s]))

    def _add(self, s, site):
        self._sites.setdefault(site, set()).add(s)
        if self._type[s] == TYPE_B:
            self._count_b[site] = self._count_b.get(site, 0) + 1
        else:
            self._count_a[site] = self._count_a.get(site, 0) + 1

    def _remove(self, s, site):
        members = self._sites[site]
        members.discard(s)
        if not members:
            del self._sites[site]
        table = self._count_b if self._type[s] == TYPE_B else self._count_a
        table[site] -= 1
        if table[site] == 0:
            del table[site]

    def _count(self, site):
        return self._count_a.get(site, 0) + self._count_b.get(site, 0)

    def _top(self):
        heap = self._heap
        while heap:
            t, pid, s, ver = heap[0]
            if ver == self._version[s]:
                return heap[0]
            heapq.heappop(heap)
        return None

    # -- dynamics --------------------------------------------------------

    def peek_time(self) -> float:
        top = self._top()
        return math.inf if top is None else top[0]

    def _process(self, record):
        t, pid, s, _ = heapq.heappop(self._heap)
        self.now = t
        self.n_events += 1
        old = self._pos[s]
        off = self._offsets[direction(self.key, pid, self._counter[s], 2 * self.d)]
        new = tuple(a + b for a, b in zip(old, off))
        tracker_rho = self._tracking and s == self._rho
        count_before = self._count(old) if tracker_rho else 0

        self._remove(s, old)
        self._pos[s] = new
        self._add(s, new)
        converted = []
        if self._count_a.get(new, 0) > 0 and self._count_b.get(new, 0) > 0:
            for q in sorted(self._sites[new], key=lambda q: self._ids[q]):
                if self._type[q] == TYPE_A:
                    self._count_a[new] -= 1
                    self._count_b[new] = self._count_b.get(new, 0) + 1
                    self._type[q] = TYPE_B
                    self._switch[q] = t
                    self.n_b += 1
                    converted.append(self._ids[q])
                    if q != s and self.rate_a != self.rate_b:
                        self._counter[q] += 1
                        self._schedule(q)
            if self._count_a[new] == 0:
                del self._count_a[new]
        if self._count_b.get(new, 0) > 0 and new not in self._first:
            self._first[new] = t
        self._counter[s] += 1
        self._schedule(s)

        if self._tracking:
            self._track(s, old, new, t, tracker_rho, count_before)
        if record:
            return (t, pid, old, new, tuple(converted))
        return None

    def step(self):
        """Process the earliest pending jump and return ``(t, id, from, to, converted_ids)``."""
        if self._top() is None:
            return None
        return self._process(True)

    def advance(self, t_stop: float) -> int:
        count = 0
        while True:
            top = self._top()
            if top is None or top[0] > t_stop:
                break
            self._process(False)
            count += 1
        if t_stop > self.now:
            self.now = float(t_stop)
        return count

    # -- distinguished path ---------------------------------------------

    def start_tracker(self, rho_id, target=None, phi_id=None):
        """Follow a distinguished B-particle under the fixed-target or tracking rule."""
        s = self._slot[int(rho_id)]
        if self._type[s] != TYPE_B:
            raise ValueError("the distinguished particle must be of type B")
        self._tracking = True
        self._rho = s
        self._lam = self._pos[s]
        if phi_id is None:
            if target is None:
                raise ValueError("need a target site or a tracked particle")
            self._phi = -1
            self._target = tuple(int(c) for c in target)
        else:
            self._phi = self._slot[int(phi_id)]
            self._target = self._pos[self._phi]
        self._log = [(self.now, KIND_START, self._lam, self._ids[s], self._count(self._lam), self._target)]

    def _track(self, s, old, new, t, moved_rho, count_before):
        lam = self._lam
        if s == self._phi:
            self._target = new
        if moved_rho:
            if count_before == 1:
                self._lam = new
                kind = KIND_MOVED
            elif _dist2(new, self._target) < _dist2(old, self._target):
                self._lam = new
                kind = KIND_MOVED
            else:
                kind = KIND_HANDOFF
                self._rho = min(self._sites[old], key=lambda q: self._ids[q])
            self._log.append((t, kind, self._lam, self._ids[self._rho], self._count(self._lam), self._target))
        elif s == self._phi:
            self._log.append((t, KIND_TARGET, lam, self._ids[self._rho], self._count(lam), self._target))
        elif old == lam or new == lam:
            self._log.append((t, KIND_OCCUPANCY, lam, self._ids[self._rho], self._count(lam), self._target))

    def tracker_log(self):
        return list(self._log)

    # -- inspection ------------------------------------------------------

    @property
    def ids(self):
        return np.asarray(self._ids, dtype=np.int64)

    def positions(self):
        return np.asarray(self._pos, dtype=np.int64).reshape(self.n, self.d)

    def types(self):
        return np.asarray(self._type, dtype=np.int8)

    def switch_times(self):
        return np.asarray(self._switch, dtype=np.float64)

    def next_jumps(self):
        return np.asarray(self._next, dtype=np.float64)

    def counters(self):
        return np.asarray(self._counter, dtype=np.int64)

    @property
    def n_infected(self):
        return len(self._first)

    def first_visits(self):
        sites = sorted(self._first)
        arr = np.asarray(sites, dtype=np.int64).reshape(len(sites), self.d)
        return arr, np.asarray([self._first[x] for x in sites], dtype=np.float64)

    def site_counts(self, site):
        site = tuple(int(c) for c in site)
        return self._count_a.get(site, 0), self._count_b.get(site, 0)

    def site_ids(self, site):
        site = tuple(int(c) for c in site)
        return sorted(self._ids[q] for q in self._sites.get(site, ()))

    def set_marks(self, mask):
        self._mark = [bool(m) for m in mask]

    def occupancy(self, lo, shape, marked=False):
        """Particle counts on the box ``[lo, lo + shape)``."""
        lo = np.asarray(lo, dtype=np.int64)
        shape = tuple(int(s) for s in shape)
        out = np.zeros(shape, dtype=np.int32)
        pos = self.positions() - lo
        keep = np.all((pos >= 0) & (pos < np.asarray(shape)), axis=1)
        if marked:
            keep &= np.asarray(self._mark, dtype=bool)
        np.add.at(out, tuple(pos[keep].T), 1)
        return out
