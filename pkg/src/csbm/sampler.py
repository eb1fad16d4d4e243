"""Collapsed Gibbs chains over partitions, with trace, MAP and PSM accumulation."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _engine as eng
from .errors import ConfigError, DomainError, NumericalError
from .families import FamilySpec
from .netdata import DyadData
from .partition import BlockLedger, Partition
from .priors import CRPPrior, DirichletMultinomialPrior, log_prior

DRIFT_TOL = 1e-6
_UNIFORM_BUDGET = 2_000_000


@dataclass
class SamplerConfig:
    """Run schedule and model choices.

    ``K=None`` runs an open-K chain under ``prior`` (which must then be a CRP).
    ``init`` is "random", "singleton", or an explicit label vector.
    """

    family: FamilySpec
    prior: DirichletMultinomialPrior | CRPPrior
    sweeps: int = 5000
    burn_in: int = 1000
    thin: int = 10
    seed: int = 0
    n_chains: int = 1
    K: int | None = None
    init: object = None
    allow_new_cluster: bool = True
    k_cap: int | None = None
    greedy: bool = False
    check_every: int = 100
    level: float = 0.95
    workers: int | None = None

    def __post_init__(self):
        if self.sweeps < 1:
            raise ConfigError("sweeps must be positive")
        if not (0 <= self.burn_in < self.sweeps):
            raise ConfigError("burn_in must satisfy 0 <= burn_in < sweeps")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be at least 1")
        if self.K is None:
            if not isinstance(self.prior, CRPPrior):
                raise ConfigError("open-K runs need the CRP prior")
            if self.family.drop_constants:
                raise ConfigError("drop_constants is only allowed when K is fixed")
        else:
            if not isinstance(self.prior, DirichletMultinomialPrior):
                raise ConfigError("fixed-K runs use the Dirichlet-multinomial prior")
            if self.prior.K != self.K:
                raise ConfigError("prior K and run K disagree")
        if self.init is None:
            self.init = "random" if self.K is not None else "singleton"

    @property
    def open_k(self):
        return self.K is None

    def prior_vector(self):
        if isinstance(self.prior, DirichletMultinomialPrior):
            return np.array([0.0, self.prior.alpha, float(self.prior.K)])
        return np.array([1.0, self.prior.alpha, 0.0])


@dataclass
class RunResult:
    z_map: np.ndarray
    map_log_posterior: float
    map_chain: int
    map_sweep: int
    traces: list
    psm: np.ndarray
    n_retained: int
    block_summary: object
    cluster_sizes: np.ndarray
    ari: float | None = None
    chain_maps: list = field(default_factory=list)
    zip_indicators: np.ndarray | None = None


def data_constant(data: DyadData, spec: FamilySpec) -> float:
    """Pure-data log-likelihood term: -sum ln y! for count data unless dropped."""
    if spec.drop_constants:
        return 0.0
    return -data.log_factorial_constant()


class SamplerState:
    """Partition, ledger, RNG and accumulators for one chain."""

    def __init__(self, data: DyadData, config: SamplerConfig, chain=0, truth=None):
        self.data = data
        self.config = config
        self.chain = chain
        self.rng = np.random.Generator(np.random.PCG64(config.seed + chain))
        n = data.n
        z0 = _initial_labels(config, n, self.rng)
        if config.open_k:
            self.part = Partition.from_labels(z0, open_k=True, k_cap=config.k_cap or n)
            self.part.meta[eng.ALLOW_NEW] = int(config.allow_new_cluster)
        else:
            self.part = Partition(z0, K=config.K)
        self.ledger = BlockLedger(data, self.part, config.family)
        self.prior_vec = config.prior_vector()
        self.const = data_constant(data, config.family)
        self.w = np.zeros(int(self.part.meta[eng.K_CAP]) + 1)
        self.truth = (np.zeros(0, dtype=np.int64) if truth is None
                      else _dense_labels(truth))
        self.sweep = 0
        self.trace_sweep = []
        self.trace_lp = []
        self.trace_ari = []
        self.psm_counts = np.zeros((n, n))
        self.n_retained = 0
        self.map_z = self.part.z.copy()
        self.map_Z = (self.ledger.zip_indicators.copy() if config.family.zip
                      else np.zeros((1, 1, 1), dtype=np.uint8))
        self.mapv = np.array([-np.inf, 0.0])
        self.counters = np.zeros(2, dtype=np.int64)

    @property
    def log_posterior(self):
        return (float(eng.log_prior(self.prior_vec, self.part.sizes, self.part.K))
                + self.ledger.log_likelihood() + self.const)

    @property
    def map_log_posterior(self):
        return float(self.mapv[0])

    def _context(self, exc):
        node = int(self.part.meta[eng.CUR_NODE])
        sweep = int(self.part.meta[eng.CUR_SWEEP])
        where = f"chain {self.chain}, sweep {sweep}" + (f", node {node}" if node >= 0 else "")
        return NumericalError(f"{exc} ({where})")

    def advance(self, n_sweeps):
        """Run n_sweeps more sweeps through the compiled driver."""
        cfg = self.config
        n = self.data.n
        nzip = self.data.n_layers * n * n if cfg.family.zip else 0
        per = n + nzip
        done = 0
        while done < n_sweeps:
            chunk = int(min(n_sweeps - done, max(1, _UNIFORM_BUDGET // max(per, 1))))
            Uz = self.rng.random((chunk, n))
            Uzip = self.rng.random((chunk, nzip)) if nzip else np.zeros((chunk, 1))
            lp = np.zeros(chunk)
            ar = np.full(chunk, np.nan)
            try:
                eng.run_sweeps(self.ledger.graph, self.ledger.fam, self.ledger.state,
                               self.ledger.agg, self.ledger.agg2, self.w, self.prior_vec,
                               self.const, cfg.greedy, Uz, Uzip, self.sweep, cfg.burn_in,
                               cfg.thin, cfg.check_every, lp, ar, self.truth,
                               self.psm_counts, self.map_z, self.map_Z, self.mapv,
                               self.counters)
            except (NumericalError, DomainError, ZeroDivisionError, ValueError) as exc:
                raise self._context(exc) from exc
            if self.mapv[1] > DRIFT_TOL:
                raise NumericalError(
                    f"incremental log-posterior drifted by {self.mapv[1]:.3g} from a fresh "
                    f"recomputation (chain {self.chain}, by sweep {self.sweep + chunk})")
            self.trace_sweep.extend(range(self.sweep + 1, self.sweep + chunk + 1))
            self.trace_lp.extend(lp.tolist())
            if len(self.truth):
                self.trace_ari.extend(ar.tolist())
            self.sweep += chunk
            done += chunk
        self.n_retained = int(self.counters[0])

    def trace(self):
        cols = {"sweep": np.array(self.trace_sweep, dtype=np.int64),
                "logpost": np.array(self.trace_lp)}
        if len(self.truth):
            cols["ari"] = np.array(self.trace_ari)
        return cols


def _dense_labels(labels):
    _, inv = np.unique(np.asarray(labels), return_inverse=True)
    return inv.astype(np.int64)


def _initial_labels(config, n, rng):
    init = config.init
    if isinstance(init, str):
        if init == "random":
            k = config.K if config.K is not None else max(1, min(n, config.k_cap or n))
            return rng.integers(0, k, size=n)
        if init == "singleton":
            if config.K is not None and config.K < n:
                raise ConfigError("singleton initialization needs K >= n or open K")
            return np.arange(n)
        raise ConfigError(f"unknown init {init!r}")
    z = np.asarray(init, dtype=np.int64)
    if z.shape != (n,):
        raise ConfigError("given initial labels must have one entry per node")
    return z.copy()


def full_log_posterior(state: SamplerState, data=None, spec=None, prior=None) -> float:
    """log p(z) + sum over blocks and layers of log m, recomputed from scratch."""
    data = data if data is not None else state.data
    spec = spec if spec is not None else state.config.family
    prior = prior if prior is not None else state.config.prior
    part = state.part.copy()
    ledger = BlockLedger(data, part, spec, state.ledger.zip_indicators)
    return log_prior(prior, part.cluster_sizes) + ledger.log_likelihood() + data_constant(data, spec)


def log_posterior_of(labels, data: DyadData, spec: FamilySpec, prior, zip_indicators=None):
    """Collapsed log-posterior of a given labelling (K taken from the prior when fixed)."""
    if isinstance(prior, DirichletMultinomialPrior):
        part = Partition(labels, K=prior.K)
    else:
        part = Partition.from_labels(labels, open_k=True)
    ledger = BlockLedger(data, part, spec, zip_indicators)
    return log_prior(prior, part.cluster_sizes) + ledger.log_likelihood() + data_constant(data, spec)


def gibbs_sweep(state: SamplerState, data=None, spec=None, prior=None, greedy=None):
    """One pass over nodes in index order (plus the ZIP pass when active)."""
    greedy = state.config.greedy if greedy is None else greedy
    led = state.ledger
    U = state.rng.random(state.data.n)
    state.part.meta[eng.CUR_SWEEP] = state.sweep + 1
    try:
        for i in range(state.data.n):
            eng.gibbs_step(led.graph, led.fam, led.state, led.agg, led.agg2, state.w,
                           state.prior_vec, i, U[i], greedy)
        if state.config.family.zip:
            zip_update_indicators(state)
    except (NumericalError, DomainError) as exc:
        raise state._context(exc) from exc
    state.sweep += 1


def zip_update_indicators(state: SamplerState, data=None, spec=None):
    led = state.ledger
    if not state.config.family.zip:
        raise DomainError("indicator updates need zero-inflated blocks")
    n = state.data.n
    U = state.rng.random(state.data.n_layers * n * n)
    eng.zip_pass(led.graph, led.fam, led.state, U)


def run_chain(data, config, chain=0, truth=None) -> SamplerState:
    state = SamplerState(data, config, chain, truth)
    state.advance(config.sweeps)
    return state


def run(config: SamplerConfig, data: DyadData, truth=None) -> RunResult:
    """Run all chains, pool the PSM, and report the best MAP snapshot."""
    from . import report

    config.family.check_modality(data.modality)
    if truth is not None and len(truth) != data.n:
        raise ConfigError("truth labels must have one entry per node")
    chains = range(config.n_chains)
    workers = config.workers or min(config.n_chains, os.cpu_count() or 1)
    if workers > 1 and config.n_chains > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            states = list(pool.map(lambda c: run_chain(data, config, c, truth), chains))
    else:
        states = [run_chain(data, config, c, truth) for c in chains]
    total = sum(s.n_retained for s in states)
    if total == 0:
        raise ConfigError("the schedule retains no samples; check burn_in and thin")
    psm_counts = sum(s.psm_counts for s in states)
    psm = report.finalize_psm(psm_counts, total)
    best = max(states, key=lambda s: (s.map_log_posterior, -s.chain))
    z_map = _dense_labels(best.map_z)
    K = config.K if config.K is not None else int(z_map.max()) + 1
    zind = best.map_Z if config.family.zip else None
    table = report.block_summary(data, z_map, config.family, K=K, zip_indicators=zind,
                                 level=config.level)
    sizes = np.bincount(z_map, minlength=K)
    ari = report.ari(truth, z_map) if truth is not None else None
    return RunResult(
        z_map=z_map, map_log_posterior=best.map_log_posterior, map_chain=best.chain,
        map_sweep=int(best.counters[1]), traces=[s.trace() for s in states], psm=psm,
        n_retained=total, block_summary=table, cluster_sizes=sizes, ari=ari,
        chain_maps=[(s.chain, s.map_log_posterior, int(s.counters[1])) for s in states],
        zip_indicators=zind)


def select_k(data: DyadData, K_values, config: SamplerConfig):
    """Best sampled collapsed log-posterior for each K, sorted by K."""
    if config.family.drop_constants:
        raise ConfigError("select-k compares different K and needs drop_constants=false")
    rows = []
    for K in sorted(set(int(k) for k in K_values)):
        if K < 1:
            raise ConfigError("K values must be positive")
        prior = DirichletMultinomialPrior(config.prior.alpha, K)
        cfg = replace(config, K=K, prior=prior,
                      init="random" if isinstance(config.init, str) else config.init)
        res = run(cfg, data)
        rows.append((K, res.map_log_posterior))
    return rows


def exact_posterior(data: DyadData, spec: FamilySpec, prior, K):
    """Enumerate all K^n labellings; returns (labels, normalized probabilities)."""
    n = data.n
    if K ** n > 2_000_000:
        raise DomainError("enumeration too large")
    grid = np.array(np.meshgrid(*[np.arange(K)] * n, indexing="ij")).reshape(n, -1).T
    part = Partition(grid[0], K=K)
    ledger = BlockLedger(data, part, spec)
    vals = np.empty(len(grid))
    for idx, z in enumerate(grid):
        part.z[:] = z
        vals[idx] = ledger.rebuild() + eng.log_prior(
            np.array([0.0, prior.alpha, float(prior.K)]), part.sizes, K)
    vals -= vals.max()
    p = np.exp(vals)
    return grid, p / p.sum()


def canonical_partition(z):
    """Label vector relabelled by first appearance (a set-partition key)."""
    z = np.asarray(z)
    mapping = {}
    return tuple(mapping.setdefault(int(x), len(mapping)) for x in z)
