"""Observed dyad data: parsing, validation, and the incidence arrays the sampler reads.

Each layer is stored as a sorted array of canonical dyad keys plus values.
Undirected and dyad-state data use keys with i < j. Directed data uses
ordered keys (i, j) with i != j. Zero values are never stored, because an
absent key means value 0.

Dyad-state (``dyad4``) values encode the joint state of a pair i < j as
1 = "10" (i->j only), 2 = "01" (j->i only), 3 = "11" (mutual).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DomainError

KINDS = ("undirected", "directed")
MODALITIES = ("binary", "count", "real", "signed", "dyad4")
STATE_NAMES = {0: "00", 1: "10", 2: "01", 3: "11"}
STATE_CODES = {v: k for k, v in STATE_NAMES.items()}


@dataclass(frozen=True)
class Incidence:
    """Per-node CSR lists of incident dyads.

    Row i holds one entry per stored dyad touching i. ``vals`` is the
    sufficient-statistic vector T(y) seen from i. ``flag`` is 1 for out-arcs
    (directed) or for partners with a larger index (dyad4), else 0.
    """

    indptr: np.ndarray
    nbr: np.ndarray
    layer: np.ndarray
    flag: np.ndarray
    vals: np.ndarray


class DyadData:
    """Immutable observed network with one or more layers."""

    def __init__(self, n, kind, modality, layers, node_ids=None):
        if kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}")
        if modality not in MODALITIES:
            raise DomainError(f"modality must be one of {MODALITIES}")
        if modality == "dyad4" and kind != "directed":
            raise DomainError("dyad4 data is directed by construction")
        if n < 1:
            raise DomainError("need at least one node")
        if not layers:
            raise DomainError("need at least one layer")
        self._n = int(n)
        self._kind = kind
        self._modality = modality
        frozen = []
        for keys, vals in layers:
            keys = np.ascontiguousarray(keys, dtype=np.int64).reshape(-1, 2)
            vals = np.ascontiguousarray(vals, dtype=np.float64).ravel()
            keys.flags.writeable = False
            vals.flags.writeable = False
            frozen.append((keys, vals))
        self._layers = tuple(frozen)
        self._node_ids = None if node_ids is None else tuple(str(x) for x in node_ids)
        if self._node_ids is not None and len(self._node_ids) != self._n:
            raise DomainError("node_ids length must equal n")
        self._validate()

    # -- construction ----------------------------------------------------

    @classmethod
    def from_arrays(cls, n, kind, modality, layers, node_ids=None):
        """Build from raw ``(src, dst, value)`` arrays per layer, applying merge rules.

        For dyad4 the arrays are directed binary arcs that get paired.
        """
        merged = [_merge(n, kind, modality, *map(np.asarray, arcs)) for arcs in layers]
        return cls(n, kind, modality, merged, node_ids)

    @classmethod
    def from_dense(cls, mats, kind, modality, node_ids=None):
        """Build from dense n x n matrices (one per layer).

        For dyad4 the matrices are directed adjacency matrices.
        """
        mats = [np.asarray(m) for m in mats]
        n = mats[0].shape[0]
        layers = []
        for m in mats:
            if m.shape != (n, n):
                raise DomainError("every layer must be n x n")
            if kind == "undirected" and modality != "dyad4":
                src, dst = np.nonzero(np.triu(m, 1))
            else:
                mask = m != 0
                np.fill_diagonal(mask, False)
                src, dst = np.nonzero(mask)
            layers.append((src, dst, m[src, dst]))
        return cls.from_arrays(n, kind, modality, layers, node_ids)

    def _validate(self):
        n = self._n
        for keys, vals in self._layers:
            if len(keys) != len(vals):
                raise DomainError("keys and values differ in length")
            if len(keys) == 0:
                continue
            i, j = keys[:, 0], keys[:, 1]
            if (i < 0).any() or (j < 0).any() or (i >= n).any() or (j >= n).any():
                raise DomainError("node index out of range")
            if (i == j).any():
                raise DomainError("self-loops are not dyads")
            if self.canonical_pairs and (i > j).any():
                raise DomainError("undirected keys must satisfy i < j")
            code = i * n + j
            if (np.diff(code) <= 0).any():
                raise DomainError("keys must be sorted and unique")
            if (vals == 0).any():
                raise DomainError("zero values are implicit and must not be stored")
            _check_values(self._modality, vals)

    # -- accessors -------------------------------------------------------

    @property
    def n(self):
        return self._n

    @property
    def kind(self):
        return self._kind

    @property
    def modality(self):
        return self._modality

    @property
    def node_ids(self):
        return self._node_ids

    @property
    def n_layers(self):
        return len(self._layers)

    @property
    def layers(self):
        return self._layers

    @property
    def canonical_pairs(self):
        """True when keys are unordered pairs stored with i < j."""
        return self._kind == "undirected" or self._modality == "dyad4"

    @property
    def mode(self):
        """Engine bookkeeping mode: 0 undirected, 1 directed, 2 dyad-state."""
        if self._modality == "dyad4":
            return 2
        return 0 if self._kind == "undirected" else 1

    @property
    def n_dyads(self):
        n = self._n
        return n * (n - 1) // 2 if self.canonical_pairs else n * (n - 1)

    def layer_dict(self, layer=0):
        keys, vals = self._layers[layer]
        return {(int(i), int(j)): float(v) for (i, j), v in zip(keys, vals)}

    def to_dense(self, layer=0):
        """Dense matrix of one layer.

        Undirected data is symmetrized. dyad4 is returned as the directed adjacency.
        """
        keys, vals = self._layers[layer]
        out = np.zeros((self._n, self._n))
        if len(keys) == 0:
            return out
        i, j = keys[:, 0], keys[:, 1]
        if self._modality == "dyad4":
            fwd = (vals == 1) | (vals == 3)
            bwd = (vals == 2) | (vals == 3)
            out[i[fwd], j[fwd]] = 1
            out[j[bwd], i[bwd]] = 1
        else:
            out[i, j] = vals
            if self._kind == "undirected":
                out[j, i] = vals
        return out

    def total_mass(self, layer=None):
        layers = range(self.n_layers) if layer is None else [layer]
        return float(sum(self._layers[l][1].sum() for l in layers))

    def log_factorial_constant(self):
        """sum over dyads and layers of ln(y!); only meaningful for counts."""
        if self._modality != "count":
            return 0.0
        return float(sum(sum(math.lgamma(v + 1) for v in vals) for _, vals in self._layers))

    def __eq__(self, other):
        if not isinstance(other, DyadData):
            return NotImplemented
        if (self._n, self._kind, self._modality, self.n_layers) != (
                other.n, other.kind, other.modality, other.n_layers):
            return False
        return all(np.array_equal(ka, kb) and np.array_equal(va, vb)
                   for (ka, va), (kb, vb) in zip(self._layers, other.layers))

    __hash__ = None

    def __repr__(self):
        sizes = ",".join(str(len(k)) for k, _ in self._layers)
        return (f"DyadData(n={self._n}, kind={self._kind!r}, modality={self._modality!r}, "
                f"stored=[{sizes}])")

    # -- engine views ------------------------------------------------------

    @cached_property
    def incidence(self) -> Incidence:
        mod = self._modality
        rows, nbrs, lays, flags, vecs = [], [], [], [], []
        for l, (keys, vals) in enumerate(self._layers):
            if len(keys) == 0:
                continue
            i, j = keys[:, 0], keys[:, 1]
            fwd = _stat_vectors(mod, vals)
            bwd = fwd[:, [1, 0, 2]] if mod == "dyad4" else fwd
            lay = np.full(len(i), l)
            if self.mode == 1:
                # out-arc for the source, in-arc for the target
                f_src, f_dst = np.ones(len(i), int), np.zeros(len(i), int)
            else:
                # i < j here, so the source row sees a larger partner
                f_src = np.ones(len(i), int) if self.mode == 2 else np.zeros(len(i), int)
                f_dst = np.zeros(len(i), int)
            rows += [i, j]
            nbrs += [j, i]
            lays += [lay, lay]
            flags += [f_src, f_dst]
            vecs += [fwd, bwd]
        if not rows:
            e = np.zeros(0, dtype=np.int64)
            return Incidence(np.zeros(self._n + 1, dtype=np.int64), e, e, e, np.zeros((0, 3)))
        row = np.concatenate(rows)
        nbr = np.concatenate(nbrs)
        lay = np.concatenate(lays)
        flag = np.concatenate(flags)
        vec = np.concatenate(vecs)
        order = np.lexsort((flag, nbr, lay, row))
        counts = np.bincount(row, minlength=self._n)
        indptr = np.zeros(self._n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return Incidence(indptr, nbr[order].astype(np.int64), lay[order].astype(np.int64),
                         flag[order].astype(np.int64), np.ascontiguousarray(vec[order]))

    @cached_property
    def dense_layers(self) -> np.ndarray:
        """(L, n, n) array with y_ij at [l, i, j] (both orientations for undirected)."""
        return np.stack([self.to_dense(l) for l in range(self.n_layers)])


def _stat_vectors(modality, vals):
    out = np.zeros((len(vals), 3))
    if modality in ("binary", "count"):
        out[:, 0] = vals
    elif modality == "real":
        out[:, 0] = vals
        out[:, 1] = vals * vals
    elif modality == "signed":
        out[:, 0] = vals > 0
        out[:, 1] = vals < 0
    else:
        out[:, 0] = vals == 1
        out[:, 1] = vals == 2
        out[:, 2] = vals == 3
    return out


def _check_values(modality, vals):
    if not np.isfinite(vals).all():
        raise DomainError("values must be finite")
    if modality == "binary" and not np.isin(vals, (0, 1)).all():
        raise DomainError("binary values must be 0 or 1")
    if modality == "count" and ((vals < 0).any() or (vals != np.round(vals)).any()):
        raise DomainError("count values must be nonnegative integers")
    if modality == "signed" and not np.isin(vals, (-1, 0, 1)).all():
        raise DomainError("signed values must be -1, 0 or +1")
    if modality == "dyad4" and not np.isin(vals, (0, 1, 2, 3)).all():
        raise DomainError("dyad4 state codes must lie in 0..3")


def _merge(n, kind, modality, src, dst, val):
    src = src.astype(np.int64).ravel()
    dst = dst.astype(np.int64).ravel()
    val = np.broadcast_to(np.asarray(val, dtype=np.float64), src.shape).copy()
    if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
        raise DomainError("node index out of range")
    if (src == dst).any():
        raise DomainError("self-loops are not allowed")
    if modality == "dyad4":
        _check_values("binary", val)
        keep = val != 0
        src, dst = src[keep], dst[keep]
        arcs = np.unique(src * n + dst)
        s, d = arcs // n, arcs % n
        lo, hi = np.minimum(s, d), np.maximum(s, d)
        bit = np.where(s < d, 1, 2)
        key = lo * n + hi
        uniq, inv = np.unique(key, return_inverse=True)
        state = np.zeros(len(uniq))
        np.add.at(state, inv, bit)
        return np.stack([uniq // n, uniq % n], axis=1), state
    _check_values(modality, val)
    if kind == "undirected":
        src, dst = np.minimum(src, dst), np.maximum(src, dst)
    key = src * n + dst
    uniq, inv = np.unique(key, return_inverse=True)
    if modality == "binary":
        out = np.zeros(len(uniq))
        np.maximum.at(out, inv, val)
    elif modality == "signed":
        out = np.zeros(len(uniq))
        np.add.at(out, inv, val)
        cnt = np.bincount(inv, minlength=len(uniq))
        first = np.zeros(len(uniq))
        first[inv[::-1]] = val[::-1]
        if not np.allclose(out, first * cnt):
            raise DataFormatError("conflicting signs for a repeated dyad")
        out = first
    else:
        out = np.zeros(len(uniq))
        np.add.at(out, inv, val)
    keep = out != 0
    uniq, out = uniq[keep], out[keep]
    return np.stack([uniq // n, uniq % n], axis=1), out


def _parse_value(token, modality, path, lineno):
    try:
        if modality == "real":
            return float(token)
        v = float(token)
    except ValueError:
        raise DataFormatError(f"{path}:{lineno}: cannot parse value {token!r}") from None
    if modality in ("binary", "count", "signed", "dyad4") and v != int(v):
        raise DataFormatError(f"{path}:{lineno}: expected an integer value, got {token!r}")
    return v


def _read_arcs(path, modality):
    src, dst, val = [], [], []
    path = Path(path)
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise DataFormatError(f"{path}:{lineno}: expected 'src dst [value]'")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: node indices must be integers") from None
            if i < 0 or j < 0:
                raise DataFormatError(f"{path}:{lineno}: node indices must be nonnegative")
            if i == j:
                raise DataFormatError(f"{path}:{lineno}: self-loop {i} {j} rejected")
            v = _parse_value(parts[2], modality, path, lineno) if len(parts) == 3 else 1.0
            try:
                _check_values("binary" if modality == "dyad4" else modality, np.array([v]))
            except DomainError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            src.append(i)
            dst.append(j)
            val.append(v)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(val)


def load_edge_list(path, kind, modality, n_hint=None, node_ids=None):
    """Parse a ``src dst [value]`` edge list into a one-layer DyadData."""
    src, dst, val = _read_arcs(path, modality)
    n = _infer_n([src, dst], n_hint)
    return DyadData.from_arrays(n, kind, modality, [(src, dst, val)], node_ids)


def load_multiplex(paths, kind, modality, n_hint=None, node_ids=None):
    """One edge-list file per layer; n is shared across layers."""
    paths = list(paths)
    if not paths:
        raise DataFormatError("multiplex input needs at least one layer file")
    arcs = [_read_arcs(p, modality) for p in paths]
    n = _infer_n([a for s, d, _ in arcs for a in (s, d)], n_hint)
    return DyadData.from_arrays(n, kind, modality, arcs, node_ids)


def _infer_n(index_arrays, n_hint):
    top = max((int(a.max()) for a in index_arrays if len(a)), default=-1)
    if n_hint is None:
        if top < 0:
            raise DataFormatError("cannot infer n from an empty edge list; pass n_hint")
        return top + 1
    if top >= n_hint:
        raise DataFormatError(f"node index {top} exceeds n_hint={n_hint}")
    return int(n_hint)


def load_label_map(path):
    """Read ``index<TAB>name`` lines into a list ordered by index."""
    names = {}
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise DataFormatError(f"{path}:{lineno}: expected 'index<TAB>name'")
            try:
                idx = int(parts[0])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: bad index {parts[0]!r}") from None
            if idx in names:
                raise DataFormatError(f"{path}:{lineno}: duplicate index {idx}")
            names[idx] = parts[1]
    if sorted(names) != list(range(len(names))):
        raise DataFormatError(f"{path}: indices must cover 0..n-1 exactly")
    return [names[i] for i in range(len(names))]


def write_edge_list(data: DyadData, path, layer=0):
    """Write one layer in the format read by load_edge_list."""
    keys, vals = data.layers[layer]
    with Path(path).open("w") as fh:
        fh.write(f"# n={data.n} kind={data.kind} modality={data.modality}\n")
        if data.modality == "dyad4":
            for (i, j), v in zip(keys, vals):
                if v in (1, 3):
                    fh.write(f"{i} {j}\n")
                if v in (2, 3):
                    fh.write(f"{j} {i}\n")
            return
        for (i, j), v in zip(keys, vals):
            if data.modality == "binary":
                fh.write(f"{i} {j}\n")
            elif data.modality == "real":
                fh.write(f"{i} {j} {float(v)!r}\n")
            else:
                fh.write(f"{i} {j} {int(v)}\n")


def write_labels(labels, path):
    with Path(path).open("w") as fh:
        for i, k in enumerate(labels):
            fh.write(f"{i}\t{int(k)}\n")


def read_labels(path):
    labels = load_label_map(path)
    try:
        return np.array([int(x) for x in labels], dtype=np.int64)
    except ValueError:
        raise DataFormatError(f"{path}: labels must be integers") from None


@dataclass(frozen=True)
class DegreePropensity:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if (theta < 0).any():
            raise DomainError("propensities must be nonnegative")
        if len(theta) and abs(theta.sum() - len(theta)) > 1e-9 * max(1, len(theta)):
            raise DomainError("propensities must average to one")
        object.__setattr__(self, "theta", theta)


def estimate_propensities(data: DyadData, floor=1e-6) -> DegreePropensity:
    """theta_i = strength_i / mean strength, with zero strengths floored at ``floor``."""
    if data.modality not in ("binary", "count", "real"):
        raise DomainError("propensities need binary, count or nonnegative real data")
    if data.n_layers != 1:
        raise DomainError("propensities are defined for a single layer")
    keys, vals = data.layers[0]
    if (vals < 0).any():
        raise DomainError("negative weights have no strength interpretation")
    strength = np.zeros(data.n)
    np.add.at(strength, keys[:, 0], vals)
    np.add.at(strength, keys[:, 1], vals)
    mean = strength.mean()
    theta = strength / mean if mean > 0 else np.zeros(data.n)
    theta = np.maximum(theta, floor)
    return DegreePropensity(theta * data.n / theta.sum())
