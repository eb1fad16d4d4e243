"""Recovery metrics, block posterior tables, PSM finalization and file exports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._engine import ari_kernel
from .errors import DomainError
from .families import FamilySpec
from .netdata import DegreePropensity, DyadData
from .partition import BlockLedger, Partition

STAT_NAMES = {
    "binary": ("edges",),
    "count": ("sum",),
    "real": ("sum_y", "sum_y2"),
    "signed": ("n_pos", "n_neg"),
    "dyad4": ("n_10", "n_01", "n_11"),
    "zip": ("m_active", "sum_active"),
}

CATEGORY_NAMES = {
    2: ("0", "1"),
    3: ("zero", "pos", "neg"),
    4: ("00", "10", "01", "11"),
}


def _labels(z):
    _, inv = np.unique(np.asarray(z), return_inverse=True)
    return inv.astype(np.int64)


def ari(z1, z2) -> float:
    """Adjusted Rand index from exact integer pair counts."""
    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    if z1.shape != z2.shape or z1.ndim != 1:
        raise DomainError("label vectors must have equal length")
    return float(ari_kernel(_labels(z1), _labels(z2)))


def confusion(z_true, z_map) -> np.ndarray:
    """K_true x K_map contingency counts (labels in sorted order, no permutation)."""
    z_true = np.asarray(z_true)
    z_map = np.asarray(z_map)
    if z_true.shape != z_map.shape:
        raise DomainError("label vectors must have equal length")
    a, b = _labels(z_true), _labels(z_map)
    out = np.zeros((a.max() + 1 if len(a) else 0, b.max() + 1 if len(b) else 0), dtype=np.int64)
    np.add.at(out, (a, b), 1)
    return out


@dataclass(frozen=True)
class BlockRow:
    r: int
    s: int
    layer: int
    n_dyads: int
    stats: tuple
    posterior: object

    @property
    def type(self):
        return "within" if self.r == self.s else "between"

    @property
    def mean(self):
        return self.posterior.mean

    @property
    def lo(self):
        return self.posterior.lo

    @property
    def hi(self):
        return self.posterior.hi


@dataclass(frozen=True)
class BlockSummaryTable:
    rows: tuple
    stat_names: tuple
    directed: bool

    def row(self, r, s, layer=0):
        if not self.directed:
            r, s = min(r, s), max(r, s)
        for row in self.rows:
            if (row.r, row.s, row.layer) == (r, s, layer):
                return row
        raise KeyError((r, s, layer))

    def means(self, layer=0):
        """K x K matrix of scalar posterior means (first category for vectors)."""
        K = 1 + max(max(row.r, row.s) for row in self.rows)
        out = np.full((K, K), np.nan)
        for row in self.rows:
            if row.layer != layer:
                continue
            m = row.mean if np.isscalar(row.mean) else row.mean[-1]
            out[row.r, row.s] = m
            if not self.directed:
                out[row.s, row.r] = m
        return out

    def to_csv(self, path):
        write_block_summary_csv(self, path)


def block_summary(data: DyadData, z, spec: FamilySpec, K=None, zip_indicators=None,
                  level=0.95) -> BlockSummaryTable:
    """Build the ledger at z and summarize every block's conjugate posterior."""
    z = np.asarray(z, dtype=np.int64)
    K = int(z.max()) + 1 if K is None else int(K)
    ledger = BlockLedger(data, Partition(z, K=K), spec, zip_indicators)
    names = STAT_NAMES["zip" if spec.zip else data.modality]
    rows = []
    for r, s in ledger.block_keys():
        fam = spec.family_for(r, s)
        for l in range(data.n_layers):
            st = ledger.block_stats(r, s, l)
            rows.append(BlockRow(r, s, l, st.n, st.values, fam.posterior(st, level)))
    return BlockSummaryTable(tuple(rows), names, data.mode == 1)


def degree_corrected_summary(data: DyadData, z, propensities, a=1.0, b=1.0, K=None):
    """omega_ab = (a + S_ab) / (b + T_ab), with T_ab = sum of theta_i theta_j over the block."""
    if data.modality not in ("binary", "count", "real"):
        raise DomainError("degree correction needs binary, count or nonnegative real data")
    theta = propensities.theta if isinstance(propensities, DegreePropensity) else np.asarray(
        propensities, dtype=float)
    z = np.asarray(z, dtype=np.int64)
    if len(theta) != data.n or len(z) != data.n:
        raise DomainError("propensities and labels need one entry per node")
    K = int(z.max()) + 1 if K is None else int(K)
    S = np.zeros((K, K))
    for keys, vals in data.layers:
        if (vals < 0).any():
            raise DomainError("negative weights are not exposures")
        np.add.at(S, (z[keys[:, 0]], z[keys[:, 1]]), vals)
    t1 = np.bincount(z, weights=theta, minlength=K)
    t2 = np.bincount(z, weights=theta * theta, minlength=K)
    T = np.outer(t1, t1)
    if data.kind == "undirected":
        S = S + S.T - np.diag(np.diag(S))
        np.fill_diagonal(T, 0.5 * (t1 * t1 - t2))
    else:
        np.fill_diagonal(T, t1 * t1 - t2)
    T = T * data.n_layers
    return (a + S) / (b + T)


def finalize_psm(counts, n_samples) -> np.ndarray:
    """Co-clustering counts (upper triangle or full) to a symmetric PSM with unit diagonal."""
    if n_samples < 1:
        raise DomainError("no retained samples")
    counts = np.asarray(counts, dtype=float)
    upper = np.triu(counts, 1)
    psm = (upper + upper.T) / n_samples
    np.fill_diagonal(psm, 1.0)
    return psm


def psm_ordering(z_map, psm=None) -> np.ndarray:
    """Display order: grouped by MAP cluster, larger clusters first, then by node index.

    Within a cluster, nodes with higher average co-clustering come first when
    a PSM is supplied.
    """
    z = _labels(z_map)
    sizes = np.bincount(z)
    rank = np.argsort(np.argsort(-sizes, kind="stable"), kind="stable")
    if psm is None:
        cohesion = np.zeros(len(z))
    else:
        cohesion = np.array([psm[i, z == z[i]].mean() for i in range(len(z))])
    return np.lexsort((np.arange(len(z)), -cohesion, rank[z]))


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_block_summary_csv(table: BlockSummaryTable, path):
    rows = table.rows
    if not rows:
        raise DomainError("empty table")
    vector = not np.isscalar(rows[0].mean)
    ncat = len(rows[0].mean) if vector else 0
    cats = CATEGORY_NAMES.get(ncat, tuple(str(c) for c in range(ncat)))
    has_zip = any("mu" in row.posterior.extra for row in rows)
    has_nig = any("sigma_mean" in row.posterior.extra for row in rows)
    head = ["r", "s", "type", "layer", "n_dyads", *table.stat_names]
    if vector:
        for c in cats:
            head += [f"mean_{c}", f"lo_{c}", f"hi_{c}"]
    else:
        head += ["mean", "lo", "hi"]
    if has_zip:
        head += ["lam_mean", "lam_lo", "lam_hi", "mu", "q"]
    if has_nig:
        head += ["sigma_mean"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for row in rows:
            line = [row.r, row.s, row.type, row.layer, row.n_dyads,
                    *[_fmt(v) for v in row.stats]]
            if vector:
                for c in range(ncat):
                    line += [_fmt(row.mean[c]), _fmt(row.lo[c]), _fmt(row.hi[c])]
            else:
                line += [_fmt(row.mean), _fmt(row.lo), _fmt(row.hi)]
            ex = row.posterior.extra
            if has_zip:
                line += [_fmt(ex[k]) for k in ("lam_mean", "lam_lo", "lam_hi", "mu", "q")]
            if has_nig:
                line += [_fmt(ex["sigma_mean"])]
            w.writerow(line)


def write_matrix_csv(matrix, path, integer=False):
    matrix = np.asarray(matrix)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in matrix:
            w.writerow([str(int(v)) if integer else _fmt(v) for v in row])


def write_trace_csv(traces, path):
    """One row per (chain, sweep): chain,sweep,logpost[,ari]."""
    has_ari = all("ari" in t for t in traces)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "sweep", "logpost"] + (["ari"] if has_ari else []))
        for c, t in enumerate(traces):
            for idx in range(len(t["sweep"])):
                line = [c, int(t["sweep"][idx]), _fmt(t["logpost"][idx])]
                if has_ari:
                    line.append(_fmt(t["ari"][idx]))
                w.writerow(line)


def write_ordering(order, path):
    Path(path).write_text("".join(f"{int(i)}\n" for i in order))


def write_manifest(manifest: dict, path):
    """Deterministic JSON (sorted keys, no timestamps) so reruns compare byte-for-byte."""
    Path(path).write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj
