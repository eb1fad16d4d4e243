import math
from collections import Counter

import numpy as np
import pytest

from csbm import synthgen
from csbm.errors import ConfigError
from csbm.families import (
    BetaBernoulli,
    FamilySpec,
    GammaPoisson,
    NormalInverseGamma,
    ZeroInflatedPoisson,
    bb_log_marginal,
)
from csbm.netdata import DyadData
from csbm.priors import CRPPrior, DirichletMultinomialPrior, log_prior
from csbm.sampler import (
    SamplerConfig,
    SamplerState,
    canonical_partition,
    exact_posterior,
    full_log_posterior,
    gibbs_sweep,
    log_posterior_of,
    run,
    select_k,
)

BB = FamilySpec(BetaBernoulli(), BetaBernoulli())
GP = FamilySpec(GammaPoisson(), GammaPoisson())


def empty(n, modality="binary"):
    return DyadData(n, "undirected", modality, [(np.zeros((0, 2)), np.zeros(0))])


def tv_to_exact(data, spec, K, sweeps, seed=0):
    prior = DirichletMultinomialPrior(1.0, K)
    grid, p = exact_posterior(data, spec, prior, K)
    exact = Counter()
    for z, w in zip(grid, p):
        exact[canonical_partition(z)] += w
    cfg = SamplerConfig(spec, prior, sweeps=sweeps, burn_in=0, thin=1, seed=seed, K=K)
    state = SamplerState(data, cfg)
    emp = Counter()
    for _ in range(sweeps):
        gibbs_sweep(state)
        emp[canonical_partition(state.part.z)] += 1
    keys = set(exact) | set(emp)
    return 0.5 * sum(abs(exact[k] - emp[k] / sweeps) for k in keys)


class TestConfig:
    def test_validation(self):
        dm = DirichletMultinomialPrior(1.0, 2)
        with pytest.raises(ConfigError):
            SamplerConfig(BB, dm, sweeps=10, burn_in=10, K=2)
        with pytest.raises(ConfigError):
            SamplerConfig(BB, dm, thin=0, K=2)
        with pytest.raises(ConfigError):
            SamplerConfig(BB, dm, K=None)
        with pytest.raises(ConfigError):
            SamplerConfig(BB, CRPPrior(1.0), K=2)
        with pytest.raises(ConfigError):
            SamplerConfig(BB, dm, K=3)
        with pytest.raises(ConfigError):
            SamplerConfig(FamilySpec(BetaBernoulli(), BetaBernoulli(), True), CRPPrior())

    def test_default_init(self):
        assert SamplerConfig(BB, DirichletMultinomialPrior(1.0, 2), K=2).init == "random"
        assert SamplerConfig(BB, CRPPrior()).init == "singleton"


class TestObjective:
    def test_two_nodes(self):
        data = DyadData.from_dense([np.array([[0, 1], [1, 0]])], "undirected", "binary")
        prior = DirichletMultinomialPrior(1.0, 2)
        v = log_posterior_of([0, 0], data, BB, prior)
        np.testing.assert_allclose(v, math.log(0.375) + bb_log_marginal(1, 1, 1, 1))

    def test_layers_add(self):
        data, z = synthgen.generate(synthgen.preset("S5", seed=1))
        prior = DirichletMultinomialPrior(1.0, 3)
        total = log_posterior_of(z, data, BB, prior)
        lp = log_prior(prior, np.bincount(z, minlength=3))
        singles = [log_posterior_of(z, DyadData(data.n, data.kind, data.modality,
                                                [data.layers[l]]), BB, prior) - lp
                   for l in range(3)]
        np.testing.assert_allclose(total, lp + sum(singles), rtol=1e-12)

    def test_label_permutation_invariance(self, rng):
        data, z = synthgen.generate(synthgen.preset("S1", seed=2))
        prior = DirichletMultinomialPrior(1.0, 3)
        z = rng.integers(0, 3, data.n)
        perm = np.array([2, 0, 1])
        np.testing.assert_allclose(log_posterior_of(z, data, BB, prior),
                                   log_posterior_of(perm[z], data, BB, prior), rtol=1e-12)

    def test_count_constant(self):
        data, z = synthgen.generate(synthgen.preset("S2", seed=0))
        prior = DirichletMultinomialPrior(1.0, 3)
        dropped = FamilySpec(GammaPoisson(), GammaPoisson(), drop_constants=True)
        np.testing.assert_allclose(
            log_posterior_of(z, data, GP, prior) - log_posterior_of(z, data, dropped, prior),
            -data.log_factorial_constant(), rtol=1e-12)

    def test_exact_posterior_normalized(self):
        data, _ = synthgen.generate(synthgen.GenSpec(6, 2, "bernoulli",
                                                     {"p_in": 0.8, "p_out": 0.1}, seed=1))
        grid, p = exact_posterior(data, BB, DirichletMultinomialPrior(1.0, 2), 2)
        assert len(grid) == 64
        np.testing.assert_allclose(p.sum(), 1.0)
        # relabelling a vector leaves its probability unchanged
        idx = {tuple(z): k for k, z in enumerate(grid)}
        for z, w in zip(grid, p):
            np.testing.assert_allclose(p[idx[tuple(1 - z)]], w, rtol=1e-12)


class TestChains:
    def test_deterministic(self):
        data, z = synthgen.generate(synthgen.preset("S1", seed=0))
        cfg = SamplerConfig(BB, DirichletMultinomialPrior(1.0, 3), sweeps=60, burn_in=20,
                            thin=5, seed=7, K=3)
        a, b = run(cfg, data, z), run(cfg, data, z)
        np.testing.assert_array_equal(a.z_map, b.z_map)
        np.testing.assert_array_equal(a.traces[0]["logpost"], b.traces[0]["logpost"])
        np.testing.assert_array_equal(a.psm, b.psm)

    def test_retained_count_and_psm(self):
        data, z = synthgen.generate(synthgen.preset("S1", seed=0))
        cfg = SamplerConfig(BB, DirichletMultinomialPrior(1.0, 3), sweeps=50, burn_in=10,
                            thin=4, seed=1, K=3, n_chains=2)
        res = run(cfg, data, z)
        assert res.n_retained == 2 * (40 // 4)
        psm = res.psm
        np.testing.assert_array_equal(psm, psm.T)
        np.testing.assert_array_equal(np.diag(psm), 1.0)
        assert psm.min() >= 0 and psm.max() <= 1
        assert len(res.traces) == 2 and len(res.traces[0]["sweep"]) == 50
        assert res.map_log_posterior == max(v for _, v, _ in res.chain_maps)

    def test_single_retained_sample_psm_is_binary(self):
        data, z = synthgen.generate(synthgen.preset("S1", seed=0))
        cfg = SamplerConfig(BB, DirichletMultinomialPrior(1.0, 3), sweeps=5, burn_in=4,
                            thin=1, seed=3, K=3)
        state = SamplerState(data, cfg)
        state.advance(5)
        assert state.n_retained == 1
        same = (state.part.z[:, None] == state.part.z[None, :])
        upper = np.triu(state.psm_counts, 1)
        np.testing.assert_array_equal(upper, np.triu(same, 1).astype(float))

    def test_map_is_best_retained(self):
        data, z = synthgen.generate(synthgen.preset("S1", seed=4))
        cfg = SamplerConfig(BB, DirichletMultinomialPrior(1.0, 3), sweeps=80, burn_in=30,
                            thin=1, seed=2, K=3)
        res = run(cfg, data, z)
        retained = res.traces[0]["logpost"][30:]
        np.testing.assert_allclose(res.map_log_posterior, retained.max(), rtol=1e-12)
        np.testing.assert_allclose(log_posterior_of(res.z_map, data, BB, cfg.prior),
                                   res.map_log_posterior, rtol=1e-10)

    def test_incremental_matches_fresh(self):
        data, z = synthgen.generate(synthgen.preset("SI-B", seed=0))
        spec = FamilySpec(NormalInverseGamma(), NormalInverseGamma())
        cfg = SamplerConfig(spec, DirichletMultinomialPrior(1.0, 3), sweeps=40, burn_in=0,
                            thin=1, seed=5, K=3, check_every=7)
        state = SamplerState(data, cfg)
        state.advance(40)
        np.testing.assert_allclose(state.log_posterior, full_log_posterior(state), atol=1e-7)

    def test_greedy_fixed_point(self):
        data, z = synthgen.generate(synthgen.preset("S2", seed=1))
        cfg = SamplerConfig(GP, DirichletMultinomialPrior(1.0, 3), sweeps=3, burn_in=0,
                            thin=1, seed=0, K=3, init=z, greedy=True)
        state = SamplerState(data, cfg)
        state.advance(3)
        np.testing.assert_array_equal(state.part.z, z)

    def test_single_node(self):
        cfg = SamplerConfig(BB, DirichletMultinomialPrior(1.0, 3), sweeps=300, burn_in=0,
                            thin=1, seed=0, K=3)
        state = SamplerState(empty(1), cfg)
        labels = []
        for _ in range(3000):
            gibbs_sweep(state)
            labels.append(state.part.z[0])
            assert state.ledger.log_likelihood() == 0.0
        freq = np.bincount(labels, minlength=3) / 3000
        np.testing.assert_allclose(freq, 1 / 3, atol=0.04)

    def test_open_k_recovers(self):
        data, z = synthgen.generate(synthgen.preset("S2", seed=2))
        cfg = SamplerConfig(GP, CRPPrior(1.0), sweeps=300, burn_in=100, thin=5, seed=1)
        res = run(cfg, data, z)
        assert res.ari > 0.95
        assert (res.cluster_sizes > 0).sum() == 3

    def test_small_exact_posterior(self):
        data, _ = synthgen.generate(synthgen.GenSpec(6, 2, "bernoulli",
                                                     {"p_in": 0.7, "p_out": 0.2}, seed=3))
        assert tv_to_exact(data, BB, 2, 20_000) < 0.05


class TestZip:
    def indicator_rate(self, spec, sweeps=20_000):
        cfg = SamplerConfig(spec, DirichletMultinomialPrior(1.0, 1), sweeps=10, burn_in=0,
                            thin=1, seed=11, K=1)
        state = SamplerState(empty(2, "count"), cfg)
        hits = 0
        for _ in range(sweeps):
            gibbs_sweep(state)
            hits += int(state.ledger.zip_indicators[0, 0, 1])
        return hits / sweeps

    def test_single_zero_dyad(self):
        spec = FamilySpec(ZeroInflatedPoisson(), ZeroInflatedPoisson())
        np.testing.assert_allclose(self.indicator_rate(spec), 1 / 3, atol=0.015)

    def test_prior_dominance(self):
        z = ZeroInflatedPoisson(a_p=1e-4)
        assert self.indicator_rate(FamilySpec(z, z), 4000) < 0.01

    def test_positive_counts_stay_active(self):
        data, z = synthgen.generate(synthgen.preset("S4", seed=0))
        spec = FamilySpec(ZeroInflatedPoisson(), ZeroInflatedPoisson())
        cfg = SamplerConfig(spec, DirichletMultinomialPrior(1.0, 3), sweeps=5, burn_in=0,
                            thin=1, seed=1, K=3, init=z)
        state = SamplerState(data, cfg)
        state.advance(5)
        Y = data.dense_layers
        assert (state.ledger.zip_indicators[Y > 0] == 1).all()
        np.testing.assert_array_equal(state.ledger.zip_indicators,
                                      state.ledger.zip_indicators.transpose(0, 2, 1))


class TestSelectK:
    def test_single_cluster_is_deterministic(self):
        data, _ = synthgen.generate(synthgen.GenSpec(40, 1, "bernoulli",
                                                     {"p_in": 0.1, "p_out": 0.1}, seed=0))
        cfg = SamplerConfig(BB, DirichletMultinomialPrior(1.0, 1), sweeps=20, burn_in=5,
                            thin=1, K=1)
        rows = select_k(data, [1], cfg)
        np.testing.assert_allclose(rows[0][1], log_posterior_of(np.zeros(40, int), data, BB,
                                                                DirichletMultinomialPrior(1.0, 1)))

    def test_planted_k_wins(self):
        data, _ = synthgen.generate(synthgen.preset("S2", seed=3))
        cfg = SamplerConfig(GP, DirichletMultinomialPrior(1.0, 2), sweeps=200, burn_in=50,
                            thin=5, K=2, n_chains=2)
        rows = dict(select_k(data, [1, 2, 3], cfg))
        assert max(rows, key=rows.get) == 3

    def test_rejects_dropped_constants(self):
        spec = FamilySpec(GammaPoisson(), GammaPoisson(), drop_constants=True)
        cfg = SamplerConfig(spec, DirichletMultinomialPrior(1.0, 2), K=2)
        with pytest.raises(ConfigError):
            select_k(empty(3, "count"), [1, 2], cfg)
