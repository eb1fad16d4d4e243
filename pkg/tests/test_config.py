import pytest

from csbm.config import RunConfig
from csbm.errors import ConfigError
from csbm.families import BetaBernoulli, GammaPoisson, TruncBetaBernoulli
from csbm.priors import CRPPrior, DirichletMultinomialPrior


def cfg(**raw):
    return RunConfig.from_dict(raw, ".")


class TestRunConfig:
    def test_defaults(self):
        c = cfg(output="out", generate={"preset": "S1"})
        spec = c.family_spec("binary")
        assert spec.diag == BetaBernoulli() and spec.offdiag == BetaBernoulli()
        assert c.sampler_kwargs()["sweeps"] == 5000
        assert c.prior(3) == DirichletMultinomialPrior(1.0, 3)
        assert c.prior(None) == CRPPrior(1.0)

    def test_diag_offdiag(self):
        c = cfg(output="o", generate={"preset": "S3"},
                model={"offdiag": {"family": "trunc_beta_bernoulli", "x_max": 0.02}})
        spec = c.family_spec("binary")
        assert spec.offdiag == TruncBetaBernoulli(1.0, 1.0, 0.02)
        assert spec.diag == BetaBernoulli()
        c = cfg(output="o", model={"both": {"family": "gamma_poisson", "b": 2}})
        assert c.family_spec("count").diag == GammaPoisson(1.0, 2.0)

    @pytest.mark.parametrize("raw", [
        {"output": "o", "colour": 1},
        {"output": "o", "sampler": {"sweps": 10}},
        {"output": "o", "data": {"paths": "x"}, "generate": {"preset": "S1"}},
        {"output": "o", "model": {"both": {"family": "beta_bernoulli"},
                                  "diag": {"family": "beta_bernoulli"}}},
        {"output": "o", "data": "edges.txt"},
    ])
    def test_rejects(self, raw):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(raw)

    def test_modality_mismatch(self):
        c = cfg(output="o", model={"both": {"family": "nig"}})
        with pytest.raises(ConfigError):
            c.family_spec("binary")

    def test_integer_checks(self):
        c = cfg(output="o", sampler={"sweeps": "many"})
        with pytest.raises(ConfigError):
            c.sampler_kwargs()

    def test_overrides(self, tmp_path):
        c = RunConfig.from_dict({"output": "o", "generate": {"preset": "S1"}}, tmp_path)
        c.apply_overrides(seed=9, sweeps=40, k="4", out="elsewhere")
        assert c.raw["sampler"]["seed"] == 9 and c.raw["generate"]["seed"] == 9
        assert c.raw["sampler"]["sweeps"] == 40 and c.raw["sampler"]["K"] == 4
        assert c.output_dir == tmp_path / "elsewhere"
        c.apply_overrides(k="2,3,5")
        assert c.raw["select_k"]["K_values"] == [2, 3, 5]
        with pytest.raises(ConfigError):
            c.apply_overrides(k=",")

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "missing.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("output: [unclosed\n")
        with pytest.raises(ConfigError):
            RunConfig.load(bad)

    def test_effective_is_a_copy(self):
        c = cfg(output="o", generate={"preset": "S1"})
        eff = c.effective()
        eff["sampler"]["sweeps"] = 1
        assert c.raw["sampler"]["sweeps"] == 5000
