"""Label vectors and the incrementally maintained block ledger.

Labels are 0-based. A fixed-K partition uses labels 0..K-1, and empty labels
stay addressable. An open-K partition keeps its labels contiguous: when a
cluster empties, the highest label is renamed into the gap.
"""

from __future__ import annotations

import numpy as np

from . import _engine as eng
from .errors import DomainError
from .families import BlockSuffStats, FamilySpec
from .netdata import DyadData


class Partition:
    """Label vector z plus cluster sizes; -1 marks a detached node."""

    def __init__(self, z, K=None, open_k=False, k_cap=None):
        z = np.array(z, dtype=np.int64).ravel()
        n = len(z)
        if open_k:
            assigned = z[z >= 0]
            k_active = int(assigned.max()) + 1 if len(assigned) else 0
            if len(np.unique(assigned)) != k_active:
                raise DomainError("open-K labels must be contiguous from 0")
            cap = n if k_cap is None else int(k_cap)
            if k_active > cap:
                raise DomainError("more clusters than the label capacity")
        else:
            if K is None or K < 1:
                raise DomainError("fixed-K partitions need K >= 1")
            if (z >= K).any():
                raise DomainError(f"labels must lie in 0..{K - 1}")
            k_active = cap = int(K)
        if (z < -1).any():
            raise DomainError("labels must be nonnegative (or -1 for detached)")
        self.z = z
        self.sizes = np.zeros(max(cap, 1), dtype=np.int64)
        np.add.at(self.sizes, z[z >= 0], 1)
        # layout shared with the kernels, see _engine
        self.meta = np.array([k_active, max(cap, 1), int(open_k), -1, 0, 1], dtype=np.int64)

    @classmethod
    def from_labels(cls, labels, K=None, open_k=False, k_cap=None):
        """Open-K: relabel arbitrary labels to 0.. by first appearance."""
        labels = np.asarray(labels)
        if open_k:
            _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
            rank = np.argsort(np.argsort(first))
            return cls(rank[inv], open_k=True, k_cap=k_cap)
        return cls(labels, K=K)

    @property
    def n(self):
        return len(self.z)

    @property
    def open_k(self):
        return bool(self.meta[eng.OPEN])

    @property
    def K(self):
        """Number of addressable labels (fixed K, or K_active when open)."""
        return int(self.meta[eng.K_ACTIVE])

    @property
    def K_active(self):
        return int((self.sizes[: self.K] > 0).sum())

    @property
    def cluster_sizes(self):
        return self.sizes[: self.K].copy()

    def copy(self):
        other = Partition.__new__(Partition)
        other.z = self.z.copy()
        other.sizes = self.sizes.copy()
        other.meta = self.meta.copy()
        return other

    def __repr__(self):
        mode = "open" if self.open_k else "fixed"
        return f"Partition(n={self.n}, K={self.K}, mode={mode}, sizes={self.cluster_sizes.tolist()})"


def _graph_tuple(data: DyadData, spec: FamilySpec, zip_indicators=None):
    inc = data.incidence
    L = data.n_layers
    if spec.zip:
        if data.modality != "count":
            raise DomainError("zero-inflated blocks need count data")
        Y = np.ascontiguousarray(data.dense_layers)
        if zip_indicators is None:
            Z = (Y > 0).astype(np.uint8)
        else:
            Z = np.ascontiguousarray(zip_indicators, dtype=np.uint8)
            if Z.shape != Y.shape:
                raise DomainError("indicator array must have shape (L, n, n)")
            if ((Y > 0) & (Z == 0)).any():
                raise DomainError("positive counts require an active indicator")
        dense = True
    else:
        Y = np.zeros((1, 1, 1))
        Z = np.zeros((1, 1, 1), dtype=np.uint8)
        dense = False
    return (inc.indptr, inc.nbr, inc.layer, inc.flag, inc.vals, Y, Z, dense,
            np.int64(data.mode), np.int64(L))


class BlockLedger:
    """Per-block sufficient statistics and cached log-marginals for one chain."""

    def __init__(self, data: DyadData, part: Partition, spec: FamilySpec, zip_indicators=None):
        spec.check_modality(data.modality)
        if part.n != data.n:
            raise DomainError("partition and data disagree on n")
        self.data = data
        self.part = part
        self.spec = spec
        self.graph = _graph_tuple(data, spec, zip_indicators)
        self.fam = spec.encode()
        kc = int(part.meta[eng.K_CAP])
        L = data.n_layers
        self.stats = np.zeros((L, kc, kc, 3))
        self.comp = np.zeros_like(self.stats)
        self.cache = np.zeros((kc, kc))
        self.ll = np.zeros(1)
        self.agg = np.zeros((L, kc + 1, 3))
        self.agg2 = np.zeros_like(self.agg)
        self.state = (part.z, part.sizes, self.stats, self.comp, self.cache, self.ll, part.meta)
        self.rebuild()

    @property
    def zip_indicators(self):
        return self.graph[6] if self.spec.zip else None

    @property
    def mode(self):
        return self.data.mode

    def rebuild(self) -> float:
        """Recompute everything from z; returns the fresh log-likelihood."""
        return eng.rebuild(self.graph, self.fam, self.state)

    def log_likelihood(self) -> float:
        """Incrementally maintained log p(Y | z) without the data constant."""
        return float(self.ll[0])

    def block_keys(self):
        K = self.part.K
        if self.mode == 1:
            return [(r, s) for r in range(K) for s in range(K)]
        return [(r, s) for r in range(K) for s in range(r, K)]

    def resolve(self, r, s):
        """Storage key of block (r, s); unordered for undirected and dyad-state data."""
        if self.mode == 1:
            return r, s
        return min(r, s), max(r, s)

    def n_dyads(self, r, s):
        r, s = self.resolve(r, s)
        return int(eng.n_dyads(self.mode, self.part.sizes[r], self.part.sizes[s], r == s))

    def stats_array(self, r, s):
        """(L, 3) compensated statistic sums for block (r, s)."""
        r, s = self.resolve(r, s)
        return self.stats[:, r, s, :] + self.comp[:, r, s, :]

    def block_stats(self, r, s, layer=0) -> BlockSuffStats:
        d = self.spec.stat_dim(self.data.modality)
        vals = self.stats_array(r, s)[layer, :d]
        return BlockSuffStats(self.n_dyads(r, s), tuple(float(v) for v in vals))

    def cached(self, r, s) -> float:
        r, s = self.resolve(r, s)
        return float(self.cache[r, s])

    def fresh_block_value(self, r, s) -> float:
        """Fresh family evaluation of block (r, s), summed over layers."""
        fam = self.spec.family_for(*self.resolve(r, s))
        return float(sum(fam.log_marginal(self.block_stats(r, s, l))
                         for l in range(self.data.n_layers)))

    def snapshot(self):
        """Copy of (sizes, stats, cache) for the active labels, for comparisons."""
        K = self.part.K
        return (self.part.sizes[:K].copy(), self.stats_array_all()[:, :K, :K].copy(),
                self.cache[:K, :K].copy())

    def stats_array_all(self):
        return self.stats + self.comp


def init_ledger(data, part, spec, zip_indicators=None) -> BlockLedger:
    return BlockLedger(data, part, spec, zip_indicators)


def _check(ledger, data, part):
    if data is not ledger.data or part is not ledger.part:
        raise DomainError("ledger was built for different data or partition objects")


def detach(ledger: BlockLedger, data, part, i):
    _check(ledger, data, part)
    if not (0 <= i < part.n) or part.z[i] < 0:
        raise DomainError(f"node {i} is not assigned")
    eng.detach(ledger.graph, ledger.fam, ledger.state, ledger.agg, ledger.agg2, int(i))


def attach(ledger: BlockLedger, data, part, i, k):
    _check(ledger, data, part)
    if not (0 <= i < part.n) or part.z[i] >= 0:
        raise DomainError(f"node {i} is not detached")
    limit = part.K + 1 if part.open_k else part.K
    if not (0 <= k < limit) or k >= part.meta[eng.K_CAP]:
        raise DomainError(f"label {k} out of range")
    eng.attach(ledger.graph, ledger.fam, ledger.state, ledger.agg, ledger.agg2, int(i), int(k))


def score_move(ledger: BlockLedger, data, part, spec, i, k) -> float:
    """Likelihood part of the Gibbs weight for placing detached node i in label k."""
    _check(ledger, data, part)
    if part.z[i] >= 0:
        raise DomainError(f"node {i} must be detached before scoring")
    limit = part.K + 1 if part.open_k else part.K
    if not (0 <= k < limit):
        raise DomainError(f"label {k} out of range")
    eng.aggregate(ledger.graph, part.z, int(i), ledger.agg, ledger.agg2, limit)
    return float(eng.score(ledger.graph, ledger.fam, ledger.state, ledger.agg, ledger.agg2,
                           int(k)))
