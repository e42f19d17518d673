# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event engine.

Same surface and same random draws as ``_pyengine.Engine``; the occupancy index
is a dense grid that grows when a walker leaves it.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log1p, sqrt, INFINITY, NAN
from libc.stdint cimport uint64_t, int64_t, int32_t, int8_t, uint8_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t PARTICLE_MULT = 0xD1B54A32D192ED03ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0

cdef enum:
    MAXD = 3

cdef int KIND_START = 0
cdef int KIND_MOVED = 1
cdef int KIND_HANDOFF = 2
cdef int KIND_OCCUPANCY = 3
cdef int KIND_TARGET = 4


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t draw_bits(uint64_t key, int64_t pid, int64_t n, int lane) nogil:
    cdef uint64_t base = mix64(key + <uint64_t>(pid + 1) * PARTICLE_MULT)
    return mix64(base + <uint64_t>(2 * n + lane + 1) * GOLDEN)


cdef inline double holding(uint64_t key, int64_t pid, int64_t n, double rate) nogil:
    if rate <= 0.0:
        return INFINITY
    cdef double u = <double>(draw_bits(key, pid, n, 0) >> 11) * INV_2_53
    return -log1p(-u) / rate


cdef inline int draw_dir(uint64_t key, int64_t pid, int64_t n, int n_dirs) nogil:
    cdef uint64_t h = draw_bits(key, pid, n, 1)
    return <int>(((h >> 32) * <uint64_t>n_dirs) >> 32)


cdef class Engine:
    cdef public int d
    cdef public int n
    cdef public double rate_a, rate_b, now
    cdef public uint64_t key
    cdef public long n_b, n_events, n_infected

    cdef int64_t[::1] _ids
    cdef int64_t[::1] _pos
    cdef int8_t[::1] _type
    cdef double[::1] _switch
    cdef double[::1] _next
    cdef int64_t[::1] _counter
    cdef uint8_t[::1] _mark
    cdef int32_t[::1] _heap
    cdef int32_t[::1] _hpos
    cdef int _hsize
    cdef dict _slot

    # occupancy grid
    cdef int64_t lo[MAXD]
    cdef int64_t shape[MAXD]
    cdef int64_t stride[MAXD]
    cdef int64_t size
    cdef int32_t[::1] _cnt_a
    cdef int32_t[::1] _cnt_b
    cdef int32_t[::1] _cnt_m
    cdef int32_t[::1] _head
    cdef double[::1] _first
    cdef int32_t[::1] _lnext
    cdef int32_t[::1] _lprev
    cdef int64_t[::1] _cell

    # distinguished path
    cdef bint _tracking
    cdef int _rho, _phi
    cdef int64_t lam[MAXD]
    cdef int64_t target[MAXD]
    cdef list _log

    def __init__(self, d, rate_a, rate_b, key, ids, pos, ptype, now=0.0):
        cdef int s
        cdef int64_t k
        self.d = int(d)
        if self.d < 1 or self.d > MAXD:
            raise ValueError("unsupported dimension")
        self.rate_a = float(rate_a)
        self.rate_b = float(rate_b)
        self.key = int(key)
        self.now = float(now)
        ids_arr = np.ascontiguousarray(ids, dtype=np.int64)
        self.n = ids_arr.shape[0]
        self._ids = ids_arr.copy()
        self._slot = {int(p): s for s, p in enumerate(ids_arr)}
        if len(self._slot) != self.n:
            raise ValueError("particle ids must be unique")
        self._pos = np.ascontiguousarray(pos, dtype=np.int64).reshape(self.n * self.d).copy()
        self._type = np.ascontiguousarray(ptype, dtype=np.int8).copy()
        sw = np.full(self.n, np.nan)
        sw[np.asarray(self._type) == 1] = self.now
        self._switch = sw
        self._next = np.zeros(self.n)
        self._counter = np.zeros(self.n, dtype=np.int64)
        self._mark = np.zeros(self.n, dtype=np.uint8)
        self._heap = np.zeros(max(self.n, 1), dtype=np.int32)
        self._hpos = np.full(max(self.n, 1), -1, dtype=np.int32)
        self._hsize = 0
        self._lnext = np.full(max(self.n, 1), -1, dtype=np.int32)
        self._lprev = np.full(max(self.n, 1), -1, dtype=np.int32)
        self._cell = np.zeros(max(self.n, 1), dtype=np.int64)
        self.n_b = 0
        self.n_events = 0
        self.n_infected = 0
        self._tracking = False
        self._log = []

        posmat = np.asarray(self._pos).reshape(self.n, self.d)
        if self.n > 0:
            lo = posmat.min(axis=0)
            hi = posmat.max(axis=0) + 1
        else:
            lo = np.zeros(self.d, dtype=np.int64)
            hi = np.ones(self.d, dtype=np.int64)
        pad = 8 + (hi - lo) // 4
        self._build_grid(lo - pad, hi + pad, None)
        for s in range(self.n):
            if self._type[s] == 1:
                self.n_b += 1
        for s in range(self.n):
            k = self._cell[s]
            if self._cnt_b[k] > 0 and self._first[k] == INFINITY:
                self._first[k] = self.now
                self.n_infected += 1
        for s in range(self.n):
            self._next[s] = self.now + holding(self.key, self._ids[s], 0, self._rate(s))
            self._heap_insert(s)

    # -- grid ------------------------------------------------------------

    def _build_grid(self, lo, hi, old):
        """(Re)allocate the grid over [lo, hi) and rebuild site lists from positions."""
        cdef int k, s
        cdef int64_t idx, c
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        shape = hi - lo
        cdef int64_t total = 1
        for k in range(self.d):
            self.lo[k] = lo[k]
            self.shape[k] = shape[k]
        for k in range(self.d - 1, -1, -1):
            self.stride[k] = total
            total *= self.shape[k]
        self.size = total
        self._cnt_a = np.zeros(total, dtype=np.int32)
        self._cnt_b = np.zeros(total, dtype=np.int32)
        self._cnt_m = np.zeros(total, dtype=np.int32)
        self._head = np.full(total, -1, dtype=np.int32)
        first = np.full(tuple(int(x) for x in shape), np.inf)
        if old is not None:
            old_lo, old_first = old
            sl = tuple(slice(int(a - b), int(a - b) + int(m)) for a, b, m in zip(old_lo, lo, old_first.shape))
            first[sl] = old_first
        self._first = first.reshape(total)
        for s in range(self.n):
            idx = 0
            for k in range(self.d):
                c = self._pos[s * self.d + k] - self.lo[k]
                idx += c * self.stride[k]
            self._cell[s] = idx
            self._link(s, idx)
            if self._type[s] == 1:
                self._cnt_b[idx] += 1
            else:
                self._cnt_a[idx] += 1
            if self._mark[s]:
                self._cnt_m[idx] += 1

    def _grow(self, site):
        cur_lo = np.array([self.lo[k] for k in range(self.d)], dtype=np.int64)
        cur_shape = np.array([self.shape[k] for k in range(self.d)], dtype=np.int64)
        cur_hi = cur_lo + cur_shape
        site = np.asarray(site, dtype=np.int64)
        new_lo = np.minimum(cur_lo, site) - cur_shape // 2 - 8
        new_hi = np.maximum(cur_hi, site + 1) + cur_shape // 2 + 8
        old_first = np.asarray(self._first).reshape(tuple(int(x) for x in cur_shape)).copy()
        self._build_grid(new_lo, new_hi, (cur_lo, old_first))

    cdef inline void _link(self, int s, int64_t idx):
        cdef int h = self._head[idx]
        self._lprev[s] = -1
        self._lnext[s] = h
        if h >= 0:
            self._lprev[h] = s
        self._head[idx] = s

    cdef inline void _unlink(self, int s, int64_t idx):
        cdef int p = self._lprev[s]
        cdef int q = self._lnext[s]
        if p >= 0:
            self._lnext[p] = q
        else:
            self._head[idx] = q
        if q >= 0:
            self._lprev[q] = p

    cdef inline double _rate(self, int s):
        return self.rate_b if self._type[s] == 1 else self.rate_a

    # -- heap keyed by (next jump time, id) ------------------------------

    cdef inline bint _less(self, int a, int b):
        if self._next[a] < self._next[b]:
            return True
        if self._next[a] > self._next[b]:
            return False
        return self._ids[a] < self._ids[b]

    cdef void _sift_up(self, int i):
        cdef int s = self._heap[i]
        cdef int parent
        while i > 0:
            parent = (i - 1) >> 1
            if self._less(s, self._heap[parent]):
                self._heap[i] = self._heap[parent]
                self._hpos[self._heap[i]] = i
                i = parent
            else:
                break
        self._heap[i] = s
        self._hpos[s] = i

    cdef void _sift_down(self, int i):
        cdef int s = self._heap[i]
        cdef int child
        while True:
            child = 2 * i + 1
            if child >= self._hsize:
                break
            if child + 1 < self._hsize and self._less(self._heap[child + 1], self._heap[child]):
                child += 1
            if self._less(self._heap[child], s):
                self._heap[i] = self._heap[child]
                self._hpos[self._heap[i]] = i
                i = child
            else:
                break
        self._heap[i] = s
        self._hpos[s] = i

    cdef void _heap_insert(self, int s):
        if self._next[s] == INFINITY:
            self._hpos[s] = -1
            return
        self._heap[self._hsize] = s
        self._hpos[s] = self._hsize
        self._hsize += 1
        self._sift_up(self._hsize - 1)

    cdef void _heap_remove(self, int s):
        cdef int i = self._hpos[s]
        cdef int last
        if i < 0:
            return
        self._hsize -= 1
        self._hpos[s] = -1
        if i == self._hsize:
            return
        last = self._heap[self._hsize]
        self._heap[i] = last
        self._hpos[last] = i
        self._sift_up(i)
        self._sift_down(self._hpos[last])

    cdef void _reschedule(self, int s):
        self._heap_remove(s)
        self._next[s] = self.now + holding(self.key, self._ids[s], self._counter[s], self._rate(s))
        self._heap_insert(s)

    # -- dynamics --------------------------------------------------------

    def peek_time(self):
        if self._hsize == 0:
            return float("inf")
        return self._next[self._heap[0]]

    cdef inline int64_t _count_at(self, int64_t idx):
        return self._cnt_a[idx] + self._cnt_b[idx]

    cdef int64_t _index_of(self, int64_t* site):
        cdef int k
        cdef int64_t c, idx = 0
        for k in range(self.d):
            c = site[k] - self.lo[k]
            if c < 0 or c >= self.shape[k]:
                return -1
            idx += c * self.stride[k]
        return idx

    cdef double _dist2(self, int64_t* a, int64_t* b):
        cdef int k
        cdef double acc = 0.0, diff
        for k in range(self.d):
            diff = <double>(a[k] - b[k])
            acc += diff * diff
        return acc

    cdef object _process(self, bint record):
        cdef int s = self._heap[0]
        cdef int k, q, dirn, best
        cdef int64_t pid = self._ids[s]
        cdef int64_t old_idx, new_idx, lam_idx
        cdef int64_t old[MAXD]
        cdef int64_t new[MAXD]
        cdef double t = self._next[s]
        cdef bint tracker_rho = self._tracking and s == self._rho
        cdef long count_before = 0
        cdef bint converted_any = False
        cdef list converted = None
        self.now = t
        self.n_events += 1
        self._heap_remove(s)

        dirn = draw_dir(self.key, pid, self._counter[s], 2 * self.d)
        for k in range(self.d):
            old[k] = self._pos[s * self.d + k]
            new[k] = old[k]
        if dirn < self.d:
            new[dirn] += 1
        else:
            new[dirn - self.d] -= 1

        new_idx = self._index_of(new)
        if new_idx < 0:
            self._grow([new[k] for k in range(self.d)])
            new_idx = self._index_of(new)
        old_idx = self._cell[s]
        if tracker_rho:
            count_before = self._count_at(old_idx)

        self._unlink(s, old_idx)
        if self._type[s] == 1:
            self._cnt_b[old_idx] -= 1
        else:
            self._cnt_a[old_idx] -= 1
        if self._mark[s]:
            self._cnt_m[old_idx] -= 1
        for k in range(self.d):
            self._pos[s * self.d + k] = new[k]
        self._cell[s] = new_idx
        self._link(s, new_idx)
        if self._type[s] == 1:
            self._cnt_b[new_idx] += 1
        else:
            self._cnt_a[new_idx] += 1
        if self._mark[s]:
            self._cnt_m[new_idx] += 1

        if record:
            converted = []
        if self._cnt_a[new_idx] > 0 and self._cnt_b[new_idx] > 0:
            q = self._head[new_idx]
            while q >= 0:
                if self._type[q] == 0:
                    self._type[q] = 1
                    self._switch[q] = t
                    self._cnt_a[new_idx] -= 1
                    self._cnt_b[new_idx] += 1
                    self.n_b += 1
                    if record:
                        converted.append(self._ids[q])
                    if q != s and self.rate_a != self.rate_b:
                        self._counter[q] += 1
                        self._reschedule(q)
                q = self._lnext[q]
        if self._cnt_b[new_idx] > 0 and self._first[new_idx] == INFINITY:
            self._first[new_idx] = t
            self.n_infected += 1
        self._counter[s] += 1
        self._next[s] = t + holding(self.key, pid, self._counter[s], self._rate(s))
        self._heap_insert(s)

        if self._tracking:
            self._track(s, old, new, old_idx, new_idx, t, tracker_rho, count_before)
        if record:
            return (t, pid, tuple(old[k] for k in range(self.d)),
                    tuple(new[k] for k in range(self.d)), tuple(sorted(converted)))
        return None

    def step(self):
        """Process the earliest pending jump and return ``(t, id, from, to, converted_ids)``."""
        if self._hsize == 0:
            return None
        return self._process(True)

    def advance(self, double t_stop):
        cdef long count = 0
        while self._hsize > 0 and self._next[self._heap[0]] <= t_stop:
            self._process(False)
            count += 1
        if t_stop > self.now:
            self.now = t_stop
        return count

    # -- distinguished path ---------------------------------------------

    def start_tracker(self, rho_id, target=None, phi_id=None):
        cdef int k
        cdef int s = self._slot[int(rho_id)]
        if self._type[s] != 1:
            raise ValueError("the distinguished particle must be of type B")
        self._tracking = True
        self._rho = s
        for k in range(self.d):
            self.lam[k] = self._pos[s * self.d + k]
        if phi_id is None:
            if target is None:
                raise ValueError("need a target site or a tracked particle")
            self._phi = -1
            for k in range(self.d):
                self.target[k] = int(target[k])
        else:
            self._phi = self._slot[int(phi_id)]
            for k in range(self.d):
                self.target[k] = self._pos[self._phi * self.d + k]
        self._log = [(self.now, KIND_START, self._lam_tuple(), self._ids[s],
                      self._count_at(self._index_of(self.lam)), self._target_tuple())]

    cdef tuple _lam_tuple(self):
        return tuple(self.lam[k] for k in range(self.d))

    cdef tuple _target_tuple(self):
        return tuple(self.target[k] for k in range(self.d))

    cdef void _track(self, int s, int64_t* old, int64_t* new, int64_t old_idx, int64_t new_idx,
                     double t, bint moved_rho, long count_before):
        cdef int k, q, best
        cdef int kind
        cdef int64_t lam_idx = self._index_of(self.lam)
        if s == self._phi:
            for k in range(self.d):
                self.target[k] = new[k]
        if moved_rho:
            if count_before == 1 or self._dist2(new, self.target) < self._dist2(old, self.target):
                for k in range(self.d):
                    self.lam[k] = new[k]
                kind = KIND_MOVED
            else:
                kind = KIND_HANDOFF
                best = -1
                q = self._head[old_idx]
                while q >= 0:
                    if best < 0 or self._ids[q] < self._ids[best]:
                        best = q
                    q = self._lnext[q]
                self._rho = best
            lam_idx = self._index_of(self.lam)
            self._log.append((t, kind, self._lam_tuple(), self._ids[self._rho],
                              self._count_at(lam_idx), self._target_tuple()))
        elif s == self._phi:
            self._log.append((t, KIND_TARGET, self._lam_tuple(), self._ids[self._rho],
                              self._count_at(lam_idx), self._target_tuple()))
        elif old_idx == lam_idx or new_idx == lam_idx:
            self._log.append((t, KIND_OCCUPANCY, self._lam_tuple(), self._ids[self._rho],
                              self._count_at(lam_idx), self._target_tuple()))

    def tracker_log(self):
        return list(self._log)

    # -- inspection ------------------------------------------------------

    @property
    def ids(self):
        return np.asarray(self._ids).copy()

    def positions(self):
        return np.asarray(self._pos).reshape(self.n, self.d).copy()

    def types(self):
        return np.asarray(self._type).copy()

    def switch_times(self):
        return np.asarray(self._switch).copy()

    def next_jumps(self):
        return np.asarray(self._next).copy()

    def counters(self):
        return np.asarray(self._counter).copy()

    def _grid_shape(self):
        return tuple(int(self.shape[k]) for k in range(self.d))

    def _grid_lo(self):
        return np.array([self.lo[k] for k in range(self.d)], dtype=np.int64)

    def first_visits(self):
        first = np.asarray(self._first).reshape(self._grid_shape())
        idx = np.nonzero(np.isfinite(first))
        sites = np.stack(idx, axis=1).astype(np.int64) + self._grid_lo()
        times = first[idx]
        order = np.lexsort(sites.T[::-1]) if len(times) else np.arange(0)
        return sites[order], times[order]

    def site_counts(self, site):
        cdef int64_t buf[MAXD]
        cdef int k
        for k in range(self.d):
            buf[k] = int(site[k])
        cdef int64_t idx = self._index_of(buf)
        if idx < 0:
            return 0, 0
        return int(self._cnt_a[idx]), int(self._cnt_b[idx])

    def site_ids(self, site):
        cdef int64_t buf[MAXD]
        cdef int k, q
        for k in range(self.d):
            buf[k] = int(site[k])
        cdef int64_t idx = self._index_of(buf)
        out = []
        if idx < 0:
            return out
        q = self._head[idx]
        while q >= 0:
            out.append(int(self._ids[q]))
            q = self._lnext[q]
        return sorted(out)

    def set_marks(self, mask):
        cdef int s
        mask = np.ascontiguousarray(mask, dtype=np.uint8)
        for s in range(self.n):
            if self._mark[s]:
                self._cnt_m[self._cell[s]] -= 1
            self._mark[s] = mask[s]
            if self._mark[s]:
                self._cnt_m[self._cell[s]] += 1

    def occupancy(self, lo, shape, marked=False):
        """Particle counts on the box ``[lo, lo + shape)``."""
        lo = np.asarray(lo, dtype=np.int64)
        shape = tuple(int(s) for s in shape)
        out = np.zeros(shape, dtype=np.int32)
        glo = self._grid_lo()
        gshape = np.array(self._grid_shape(), dtype=np.int64)
        a = np.maximum(lo, glo)
        b = np.minimum(lo + np.asarray(shape), glo + gshape)
        if np.any(b <= a):
            return out
        if marked:
            grid = np.asarray(self._cnt_m).reshape(self._grid_shape())
            src = grid[tuple(slice(int(x - g), int(y - g)) for x, y, g in zip(a, b, glo))]
        else:
            ga = np.asarray(self._cnt_a).reshape(self._grid_shape())
            gb = np.asarray(self._cnt_b).reshape(self._grid_shape())
            sl = tuple(slice(int(x - g), int(y - g)) for x, y, g in zip(a, b, glo))
            src = ga[sl] + gb[sl]
        out[tuple(slice(int(x - l), int(y - l)) for x, y, l in zip(a, b, lo))] = src
        return out
