"""Online-growing KD-tree with bucketed leaves and exact k-NN search.

The tree stores whitened parameter points together with a log-scale value
record ``(log_value, count)``.  Leaves hold up to ``2b - 1`` entries; a leaf
that reaches ``2b`` entries splits at the sample median of its entries along
the leaf's splitting dimension and becomes a branch whose children cycle to
the next dimension.  New points that land within a merge radius ``epsilon``
of an existing entry are folded into that entry instead of growing the tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "TreeEntry",
    "TreeStats",
    "KdTree",
    "merge_pm",
    "merge_keep_existing",
    "median_split_error_prob",
    "save_entries",
    "load_entries",
]

_LEAF = 0
_BRANCH = 1


@dataclass
class TreeEntry:
    """A stored point: whitened position, log-scale value, merge count."""

    position: np.ndarray
    log_value: float
    count: int = 1

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(frozen=True)
class TreeStats:
    """Structural statistics from a full traversal (root depth = 0)."""

    entry_count: int
    leaf_count: int
    mean_leaf_depth: float
    min_leaf_depth: int
    max_leaf_depth: int
    depth_range_99: tuple[int, int]


def merge_pm(existing: tuple[float, int], incoming: tuple[float, int]) -> tuple[float, int]:
    """Merge rule for pseudo-marginal estimates: running mean on the
    likelihood scale, kept in log space.

    ``existing`` is ``(l, n)``, the log of the mean of ``n`` previous
    estimates; ``incoming`` is ``(l*, 1)``.  Returns
    ``(log((n e^l + e^{l*}) / (n + 1)), n + 1)`` evaluated stably.
    """
    l_old, n_old = existing
    l_new, _ = incoming
    if not (math.isfinite(l_old) and math.isfinite(l_new)):
        raise ValueError("merge_pm requires finite log values")
    if n_old < 1:
        raise ValueError("existing count must be >= 1")
    merged = np.logaddexp(math.log(n_old) + l_old, l_new) - math.log(n_old + 1)
    return float(merged), n_old + 1


def merge_keep_existing(existing: tuple[float, int], incoming: tuple[float, int]) -> tuple[float, int]:
    """Merge rule for exact posterior values: a nearby duplicate carries no
    new information, so the stored record is kept unchanged."""
    return existing


def _median(values: np.ndarray) -> float:
    """Sample median: middle order statistic, or the midpoint of the two
    central order statistics for even-sized samples."""
    v = np.sort(values)
    n = len(v)
    if n % 2 == 1:
        return float(v[n // 2])
    return float(0.5 * (v[n // 2 - 1] + v[n // 2]))


class KdTree:
    """Bucketed KD-tree over ``d``-dimensional points.

    Parameters
    ----------
    d : int
        Dimension of stored positions.
    b : int
        Half bucket size; a leaf splits when it reaches ``2b`` entries, so at
        rest every leaf holds at most ``2b - 1``.
    seed : int
        Seed for the tie-breaking coin flips (median ties go left or right
        with probability 1/2 each).

    Single-writer structure: concurrent reads are safe only in the absence
    of writes.
    """

    def __init__(self, d: int, b: int = 10, seed: int = 0):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if b < 2:
            raise ValueError("half bucket size b must be >= 2")
        self.d = d
        self.b = b
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        # entry arena
        cap = 64
        self._pos = np.empty((cap, d), dtype=float)
        self._logv = np.empty(cap, dtype=float)
        self._cnt = np.empty(cap, dtype=np.int64)
        self._n_entries = 0
        # node arena (parallel lists; index 0 is the root)
        self._kind: list[int] = []
        self._dim: list[int] = []
        self._split: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._leaf_ids: list[np.ndarray | None] = []
        self._leaf_pos: list[np.ndarray | None] = []
        self._leaf_n: list[int] = []
        self._new_leaf(split_dim=0)  # root defaults to the first dimension

    # ------------------------------------------------------------------
    # construction

    @classmethod
    def build_balanced(
        cls,
        points: Sequence[TreeEntry],
        d: int,
        b: int = 10,
        seed: int = 0,
    ) -> "KdTree":
        """Build a balanced tree by recursive median splitting.

        Splitting starts on dimension 1 at the root and cycles; subsets
        smaller than ``2b`` become leaves.  Points equal to a median are
        assigned to either side by independent fair coin flips.
        """
        tree = cls(d, b=b, seed=seed)
        n = len(points)
        if n == 0:
            return tree
        pos = np.empty((n, d), dtype=float)
        for i, p in enumerate(points):
            position = np.asarray(p.position, dtype=float)
            if position.shape != (d,):
                raise ValueError(
                    f"entry {i} has dimension {position.shape}, expected ({d},)"
                )
            pos[i] = position
        tree._ensure_capacity(n)
        tree._pos[:n] = pos
        tree._logv[:n] = [p.log_value for p in points]
        tree._cnt[:n] = [p.count for p in points]
        tree._n_entries = n
        # replace the root leaf with the recursive build
        tree._kind.clear()
        tree._dim.clear()
        tree._split.clear()
        tree._left.clear()
        tree._right.clear()
        tree._leaf_ids.clear()
        tree._leaf_pos.clear()
        tree._leaf_n.clear()
        tree._build_recursive(np.arange(n, dtype=np.int64), 0)
        return tree

    def _build_recursive(self, ids: np.ndarray, split_dim: int) -> int:
        if len(ids) < 2 * self.b:
            return self._new_leaf(split_dim, ids)
        vals = self._pos[ids, split_dim]
        split = _median(vals)
        below = vals < split
        above = vals > split
        ties = ~(below | above)
        if ties.any():
            go_left = self._rng.random(int(ties.sum())) < 0.5
            below[np.flatnonzero(ties)[go_left]] = True
            above[np.flatnonzero(ties)[~go_left]] = True
        left_ids = ids[below]
        right_ids = ids[above]
        if len(left_ids) == 0 or len(right_ids) == 0:
            # duplicate-saturated subset: halve deterministically to bound depth
            half = len(ids) // 2
            left_ids, right_ids = ids[:half], ids[half:]
        node = self._new_branch(split_dim, split)
        child_dim = (split_dim + 1) % self.d
        self._left[node] = self._build_recursive(left_ids, child_dim)
        self._right[node] = self._build_recursive(right_ids, child_dim)
        return node

    # ------------------------------------------------------------------
    # node/entry arena helpers

    def _new_leaf(self, split_dim: int, ids: np.ndarray | None = None) -> int:
        node = len(self._kind)
        cap = 2 * self.b
        id_buf = np.empty(cap, dtype=np.int64)
        pos_buf = np.empty((cap, self.d), dtype=float)
        n = 0
        if ids is not None:
            n = len(ids)
            id_buf[:n] = ids
            pos_buf[:n] = self._pos[ids]
        self._kind.append(_LEAF)
        self._dim.append(split_dim)
        self._split.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._leaf_ids.append(id_buf)
        self._leaf_pos.append(pos_buf)
        self._leaf_n.append(n)
        return node

    def _new_branch(self, split_dim: int, split: float) -> int:
        node = len(self._kind)
        self._kind.append(_BRANCH)
        self._dim.append(split_dim)
        self._split.append(split)
        self._left.append(-1)
        self._right.append(-1)
        self._leaf_ids.append(None)
        self._leaf_pos.append(None)
        self._leaf_n.append(0)
        return node

    def _ensure_capacity(self, n: int) -> None:
        cap = len(self._logv)
        if n <= cap:
            return
        while cap < n:
            cap *= 2
        for name in ("_pos", "_logv", "_cnt"):
            old = getattr(self, name)
            grown = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            grown[: len(old)] = old
            setattr(self, name, grown)

    def _add_entry(self, position: np.ndarray, log_value: float, count: int) -> int:
        eid = self._n_entries
        self._ensure_capacity(eid + 1)
        self._pos[eid] = position
        self._logv[eid] = log_value
        self._cnt[eid] = count
        self._n_entries += 1
        return eid

    # ------------------------------------------------------------------
    # basic queries

    @property
    def entry_count(self) -> int:
        return self._n_entries

    def __len__(self) -> int:
        return self._n_entries

    def count_total(self) -> int:
        """Sum of stored merge counts (= points seen when merging)."""
        return int(self._cnt[: self._n_entries].sum())

    def get_entry(self, eid: int) -> TreeEntry:
        if not 0 <= eid < self._n_entries:
            raise IndexError(eid)
        return TreeEntry(self._pos[eid].copy(), float(self._logv[eid]), int(self._cnt[eid]))

    def entries(self) -> Iterator[TreeEntry]:
        """All entries in left-to-right traversal order."""
        for eid in self._traversal_ids():
            yield self.get_entry(eid)

    def _traversal_ids(self) -> Iterator[int]:
        stack = [0]
        while stack:
            node = stack.pop()
            if self._kind[node] == _LEAF:
                n = self._leaf_n[node]
                ids = self._leaf_ids[node]
                for j in range(n):
                    yield int(ids[j])
            else:
                stack.append(self._right[node])
                stack.append(self._left[node])

    # ------------------------------------------------------------------
    # insertion

    def _descend_to_leaf(self, position: np.ndarray) -> int:
        node = 0
        kind = self._kind
        dim = self._dim
        split = self._split
        while kind[node] == _BRANCH:
            v = position[dim[node]]
            s = split[node]
            if v < s:
                node = self._left[node]
            elif v > s:
                node = self._right[node]
            else:
                node = self._left[node] if self._rng.random() < 0.5 else self._right[node]
        return node

    def insert(self, entry: TreeEntry) -> None:
        """Insert an entry, splitting the receiving leaf if it fills up."""
        position = np.asarray(entry.position, dtype=float)
        if position.shape != (self.d,):
            raise ValueError(f"entry has dimension {position.shape}, expected ({self.d},)")
        eid = self._add_entry(position, entry.log_value, entry.count)
        leaf = self._descend_to_leaf(position)
        n = self._leaf_n[leaf]
        self._leaf_ids[leaf][n] = eid
        self._leaf_pos[leaf][n] = position
        self._leaf_n[leaf] = n + 1
        if self._leaf_n[leaf] == 2 * self.b:
            self._split_leaf(leaf)

    def _split_leaf(self, leaf: int) -> None:
        ids = self._leaf_ids[leaf][: self._leaf_n[leaf]].copy()
        split_dim = self._dim[leaf]
        vals = self._pos[ids, split_dim]
        split = _median(vals)
        below = vals < split
        above = vals > split
        ties = ~(below | above)
        if ties.any():
            go_left = self._rng.random(int(ties.sum())) < 0.5
            below[np.flatnonzero(ties)[go_left]] = True
            above[np.flatnonzero(ties)[~go_left]] = True
        left_ids = ids[below]
        right_ids = ids[above]
        if len(left_ids) == 0 or len(right_ids) == 0:
            half = len(ids) // 2
            left_ids, right_ids = ids[:half], ids[half:]
        child_dim = (split_dim + 1) % self.d
        left = self._new_leaf(child_dim, left_ids)
        right = self._new_leaf(child_dim, right_ids)
        # the leaf becomes a branch in place
        self._kind[leaf] = _BRANCH
        self._split[leaf] = split
        self._left[leaf] = left
        self._right[leaf] = right
        self._leaf_ids[leaf] = None
        self._leaf_pos[leaf] = None
        self._leaf_n[leaf] = 0

    # ------------------------------------------------------------------
    # k-nearest-neighbour search

    def knn(self, query: np.ndarray, k: int) -> list[tuple[TreeEntry, float]]:
        """Exact k nearest entries by Euclidean distance, ascending.

        Requires ``1 <= k <= b`` and ``k <= entry_count``.  Ties in distance
        are resolved in favour of the entry met first in traversal order.
        """
        ids, dists = self.knn_ids(query, k)
        return [(self.get_entry(int(e)), float(r)) for e, r in zip(ids, dists)]

    def knn_ids(self, query: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """As :meth:`knn` but returning ``(entry_ids, distances)`` arrays."""
        query = np.asarray(query, dtype=float)
        if query.shape != (self.d,):
            raise ValueError(f"query has dimension {query.shape}, expected ({self.d},)")
        if k < 1:
            raise ValueError("k must be >= 1")
        if k > self.b:
            raise ValueError(f"k={k} exceeds the half bucket size b={self.b}")
        if k > self._n_entries:
            raise ValueError(f"k={k} exceeds the number of stored entries ({self._n_entries})")

        # candidate set as parallel Python lists: (dist^2, entry id, arrival
        # order); worst tracked incrementally.  Distance ties keep the
        # candidate met first in traversal order (strict < on replacement).
        state = [0.0, 0, []]  # worst d2 once full, arrival counter, candidates
        u = [0.0] * self.d
        self._knn_visit(0, query, k, u, 0.0, state)
        cand = sorted(state[2])
        ids = np.array([c[2] for c in cand], dtype=np.int64)
        dists = np.sqrt(np.array([c[0] for c in cand]))
        return ids, dists

    def _knn_visit(self, node, query, k, u, u_norm2, state):
        if self._kind[node] == _LEAF:
            n = self._leaf_n[node]
            if n == 0:
                return
            diff = self._leaf_pos[node][:n] - query
            d2 = np.einsum("ij,ij->i", diff, diff).tolist()
            ids = self._leaf_ids[node]
            worst, seq, cand = state
            full = len(cand) == k
            for j in range(n):
                v = d2[j]
                if not full:
                    cand.append((v, seq, int(ids[j])))
                    if len(cand) == k:
                        full = True
                        worst = max(cand)[0]
                elif v < worst:
                    w = 0
                    wv = cand[0]
                    for m in range(1, k):
                        if cand[m] > wv:
                            wv = cand[m]
                            w = m
                    cand[w] = (v, seq, int(ids[j]))
                    worst = max(cand)[0]
                seq += 1
            state[0], state[1] = worst, seq
            return
        dim = self._dim[node]
        split = self._split[node]
        qv = query[dim]
        if qv <= split:
            near, far = self._left[node], self._right[node]
        else:
            near, far = self._right[node], self._left[node]
        self._knn_visit(near, query, k, u, u_norm2, state)
        # lower bound on the squared distance to any point beyond the far
        # side of this hyperplane, accumulated over the splits crossed so far
        off = split - qv
        old = u[dim]
        far_norm2 = u_norm2 - old * old + off * off
        if len(state[2]) < k or far_norm2 < state[0]:
            u[dim] = off
            self._knn_visit(far, query, k, u, far_norm2, state)
            u[dim] = old

    def nearest(self, query: np.ndarray) -> tuple[int, float] | None:
        """Nearest entry id and distance, or ``None`` for an empty tree."""
        if self._n_entries == 0:
            return None
        ids, dists = self.knn_ids(query, 1)
        return int(ids[0]), float(dists[0])

    # ------------------------------------------------------------------
    # merge-or-insert

    def insert_or_merge(
        self,
        entry: TreeEntry,
        epsilon: float,
        merge: Callable[[tuple[float, int], tuple[float, int]], tuple[float, int]] = merge_pm,
    ) -> bool:
        """Fold ``entry`` into its nearest neighbour if that lies within
        ``epsilon``, otherwise insert it.  Returns True when merged."""
        if epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if epsilon > 0 and self._n_entries > 0:
            eid, dist = self.nearest(np.asarray(entry.position, dtype=float))
            if dist < epsilon:
                l, n = merge(
                    (float(self._logv[eid]), int(self._cnt[eid])),
                    (float(entry.log_value), int(entry.count)),
                )
                self._logv[eid] = l
                self._cnt[eid] = n
                return True
        self.insert(entry)
        return False

    # ------------------------------------------------------------------
    # structure statistics and audits

    def tree_stats(self) -> TreeStats:
        """Exact leaf-depth statistics from a full traversal."""
        depths = []
        stack = [(0, 0)]
        while stack:
            node, depth = stack.pop()
            if self._kind[node] == _LEAF:
                depths.append(depth)
            else:
                stack.append((self._left[node], depth + 1))
                stack.append((self._right[node], depth + 1))
        depths = np.array(depths)
        lo = int(np.percentile(depths, 0.5, method="nearest"))
        hi = int(np.percentile(depths, 99.5, method="nearest"))
        return TreeStats(
            entry_count=self._n_entries,
            leaf_count=len(depths),
            mean_leaf_depth=float(depths.mean()),
            min_leaf_depth=int(depths.min()),
            max_leaf_depth=int(depths.max()),
            depth_range_99=(lo, hi),
        )

    def validate(self) -> None:
        """Audit structural invariants by full traversal.

        Checks that every entry satisfies every ancestor branch constraint
        (ties may sit on either side), that leaf occupancies are within
        bounds, that split dimensions cycle, and that the entry count
        matches the reachable entries.
        """
        seen = 0
        stack = [(0, [(-np.inf, np.inf)] * self.d)]
        while stack:
            node, bounds = stack.pop()
            if self._kind[node] == _LEAF:
                n = self._leaf_n[node]
                if not (0 <= n <= 2 * self.b - 1):
                    raise AssertionError(f"leaf {node} holds {n} entries")
                for j in range(n):
                    eid = int(self._leaf_ids[node][j])
                    p = self._pos[eid]
                    if not np.allclose(p, self._leaf_pos[node][j]):
                        raise AssertionError("leaf buffer out of sync with arena")
                    for dim in range(self.d):
                        lo, hi = bounds[dim]
                        if not (lo <= p[dim] <= hi):
                            raise AssertionError(
                                f"entry {eid} violates ancestor constraint on dim {dim}"
                            )
                seen += n
            else:
                dim = self._dim[node]
                s = self._split[node]
                for child, side in ((self._left[node], "L"), (self._right[node], "R")):
                    if self._dim[child] != (dim + 1) % self.d:
                        raise AssertionError("child split_dim does not cycle")
                    cb = list(bounds)
                    lo, hi = cb[dim]
                    cb[dim] = (lo, min(hi, s)) if side == "L" else (max(lo, s), hi)
                    stack.append((child, cb))
        if seen != self._n_entries:
            raise AssertionError(f"reachable entries {seen} != entry_count {self._n_entries}")


# ----------------------------------------------------------------------
# snapshot serialization

def save_entries(tree: KdTree, path) -> None:
    """Write one CSV line per entry: position components, log_value, count."""
    with open(path, "w") as fh:
        for entry in tree.entries():
            coords = ",".join(repr(float(x)) for x in entry.position)
            fh.write(f"{coords},{entry.log_value!r},{entry.count}\n")


def load_entries(path) -> list[TreeEntry]:
    """Read a snapshot written by :func:`save_entries`."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            out.append(
                TreeEntry(
                    np.array([float(x) for x in parts[:-2]]),
                    float(parts[-2]),
                    int(parts[-1]),
                )
            )
    return out


# ----------------------------------------------------------------------
# split-quality analysis

def median_split_error_prob(b: int, lo: float, hi: float) -> float:
    """Probability that the sample median of ``2b`` uniform draws lands at a
    true quantile outside ``[lo, hi]``.

    The sample median of an even-sized draw is the midpoint of the two
    central order statistics ``(U_(b) + U_(b+1)) / 2``; its tail
    probabilities are obtained by integrating the Beta(b, b+1) law of
    ``U_(b)`` against the conditional tail of ``U_(b+1)``.
    """
    if b < 1:
        raise ValueError("b must be >= 1")
    if not (0.0 < lo < hi < 1.0):
        raise ValueError("need 0 < lo < hi < 1")
    # P(M > hi) = P(M < 1 - hi) by the symmetry U -> 1 - U
    return _median_cdf(lo, b) + _median_cdf(1.0 - hi, b)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(200)


def _median_cdf(t: float, b: int) -> float:
    """P((U_(b) + U_(b+1))/2 <= t) for 2b iid uniforms."""
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    # U_(b) ~ Beta(b, b+1); given U_(b) = u, U_(b+1) is the minimum of b
    # uniforms on (u, 1).  The median is below t only if u < t.
    upper = min(t, 1.0)
    u = 0.5 * upper * (_GL_NODES + 1.0)
    w = 0.5 * upper * _GL_WEIGHTS
    log_norm = math.lgamma(2 * b + 1) - math.lgamma(b) - math.lgamma(b + 1)
    pdf = np.exp(log_norm + (b - 1) * np.log(u) + b * np.log1p(-u))
    v = 2.0 * t - u
    inner = np.where(v >= 1.0, 1.0, 1.0 - ((1.0 - np.minimum(v, 1.0)) / (1.0 - u)) ** b)
    return float(np.sum(w * pdf * inner))
