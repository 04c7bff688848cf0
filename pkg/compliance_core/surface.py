"""
The (x, y, c) parametrization of cable space and the learned safe-tension surface.

x and y span the tip plane; c = q1 + q2 + q3 sets the overall tension. The
surface stores points (x, y, c) at which all three cables sat inside the
target tension range and is queried with LOESS: degree-1 weighted least
squares over the k nearest samples with tricube weights.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from constants import XYC_MATRIX, XYC_INVERSE

# New cells searched by brute force before the tree is rebuilt
TREE_REBUILD_EVERY = 256


@dataclass(frozen=True)
class XycPoint:
    x: float
    y: float
    c: float

    def as_array(self):
        return np.array([self.x, self.y, self.c])


@dataclass(frozen=True)
class LoessResult:
    """Fitted `c` and whether the weighted-mean fallback was used."""

    c: float
    fallback: bool = False


def q_to_xyc(q):
    """
    Map cable positions to (x, y, c).

    :param q: cable positions, shape (3,)
    :return: `XycPoint`
    """
    x, y, c = XYC_MATRIX @ np.asarray(q, dtype=float)
    return XycPoint(float(x), float(y), float(c))


def xyc_to_q(p):
    """
    Map (x, y, c) back to cable positions.

    :param p: `XycPoint` or 3-sequence
    :return: cable positions, shape (3,)
    """
    v = p.as_array() if isinstance(p, XycPoint) else np.asarray(p, dtype=float)
    return XYC_INVERSE @ v


def tricube(u):
    """Tricube kernel (1 - |u|^3)^3 on |u| < 1, zero elsewhere."""
    u = np.abs(np.asarray(u, dtype=float))
    return np.where(u < 1.0, (1.0 - u ** 3) ** 3, 0.0)


class TensionSurface:
    """
    Lookup table of safe (x, y, c) points with a working `c` bias.

    Samples falling into the same `grid_tolerance` cell in (x, y) are merged:
    the cell keeps its first position and the running mean of `c`.

    :param loess_neighbors: neighbourhood size k of `loess_query`
    :param loess_degree: 0 (weighted mean) or 1 (local plane)
    :param grid_tolerance: cell size for deduplication
    """

    def __init__(self, loess_neighbors=25, loess_degree=1, grid_tolerance=0.5):
        self.loess_neighbors = loess_neighbors
        self.loess_degree = loess_degree
        self.grid_tolerance = grid_tolerance
        self.c_bias = 0.0
        self._rows = {}
        self._xy = np.zeros((64, 2))
        self._c = np.zeros(64)
        self._count = np.zeros(64, dtype=int)
        self._tree = None
        self._indexed = 0

    @classmethod
    def from_config(cls, cfg):
        """Build an empty surface from an `ExplorerConfig`."""
        return cls(cfg.loess_neighbors, cfg.loess_degree, cfg.grid_tolerance)

    def __len__(self):
        return len(self._rows)

    @property
    def samples(self):
        """(m, 3) array of stored (x, y, c) samples."""
        m = len(self)
        return np.column_stack([self._xy[:m], self._c[:m]])

    @property
    def ready(self):
        """True once the surface holds enough samples for a full neighbourhood."""
        return len(self) >= self.loess_neighbors

    def add_sample(self, x, y, c):
        """
        Record a safe point, merging it into its grid cell.

        :param x: plane coordinate
        :param y: plane coordinate
        :param c: tension coordinate
        """
        key = (int(np.floor(x / self.grid_tolerance)), int(np.floor(y / self.grid_tolerance)))
        row = self._rows.get(key)
        if row is not None:
            self._count[row] += 1
            self._c[row] += (c - self._c[row]) / self._count[row]
            return

        row = len(self._rows)
        if row == len(self._c):
            self._xy = np.concatenate([self._xy, np.zeros_like(self._xy)])
            self._c = np.concatenate([self._c, np.zeros_like(self._c)])
            self._count = np.concatenate([self._count, np.zeros_like(self._count)])
        self._rows[key] = row
        self._xy[row] = (x, y)
        self._c[row] = c
        self._count[row] = 1

    def neighbours(self, x, y, k):
        """
        Distances and rows of the `k` samples nearest to (x, y), nearest first.

        The KD-tree covers the first `_indexed` rows and is rebuilt once more
        than `TREE_REBUILD_EVERY` cells were added after it; newer rows are
        compared directly.
        """
        m = len(self)
        if self._tree is None or m - self._indexed > TREE_REBUILD_EVERY:
            self._tree = cKDTree(self._xy[:m])
            self._indexed = m
        dists, idx = self._tree.query([x, y], k=min(k, self._indexed))
        dists, idx = np.atleast_1d(dists), np.atleast_1d(idx)
        if m > self._indexed:
            pending = np.arange(self._indexed, m)
            pending_d = np.hypot(self._xy[pending, 0] - x, self._xy[pending, 1] - y)
            dists = np.concatenate([dists, pending_d])
            idx = np.concatenate([idx, pending])
            order = np.argsort(dists, kind="stable")[:k]
            dists, idx = dists[order], idx[order]
        return dists, idx


def loess_query(s, x, y):
    """
    Fit `c` at (x, y) by locally weighted regression.

    Uses the k nearest samples (k = `loess_neighbors`, or all samples if fewer)
    with tricube weights on distance normalized by the k-th distance. When the
    local design is rank deficient, returns the weighted mean and flags it.

    :param s: `TensionSurface`
    :param x: query coordinate
    :param y: query coordinate
    :raises ValueError: with fewer than 3 samples
    :return: `LoessResult`
    """
    m = len(s)
    if m < 3:
        raise ValueError(f"surface needs at least 3 samples, has {m}")

    k = min(s.loess_neighbors, m)
    dists, idx = s.neighbours(x, y, k)
    local = s.samples[idx]

    bandwidth = dists.max()
    if bandwidth > 0:
        # Widen slightly so the k-th neighbour keeps a small positive weight
        w = tricube(dists / (bandwidth * 1.0001))
    else:
        w = np.ones(k)
    if w.sum() <= 0:
        w = np.ones(k)

    weighted_mean = float(np.dot(w, local[:, 2]) / w.sum())
    if s.loess_degree == 0:
        return LoessResult(weighted_mean)

    design = np.column_stack([np.ones(k), local[:, 0] - x, local[:, 1] - y])
    sw = np.sqrt(w)
    A = design * sw[:, None]
    if np.linalg.matrix_rank(A) < 3:
        logging.debug("Degenerate LOESS neighbourhood at (%.3f, %.3f); using weighted mean", x, y)
        return LoessResult(weighted_mean, fallback=True)
    beta, *_ = np.linalg.lstsq(A, local[:, 2] * sw, rcond=None)
    return LoessResult(float(beta[0]))


def surface_update(s, q, f_meas, target_range, c_step=0.2, decay=1.0):
    """
    Learn from one measurement.

    In range on all cables: record (x, y, c) of `q` and relax the bias toward
    zero by `decay`. Otherwise nudge the bias by `c_step`: down if any cable is
    above the range, else up for a slack cable. Nothing is recorded then.

    :param s: `TensionSurface` (updated in place)
    :param q: commanded cable positions (mm)
    :param f_meas: measured tensions (N)
    :param target_range: (low, high) in N
    :param c_step: bias adjustment per out-of-range measurement
    :param decay: bias multiplier per in-range measurement
    :return: the same surface
    """
    lo, hi = target_range
    f_meas = np.asarray(f_meas, dtype=float)
    if np.any(f_meas > hi):
        s.c_bias -= c_step
    elif np.any(f_meas < lo):
        s.c_bias += c_step
    else:
        p = q_to_xyc(q)
        s.add_sample(p.x, p.y, p.c)
        s.c_bias *= decay
    return s
