"""YAML run configuration: parsing, validation and the effective-config echo.

Top-level keys (unknown keys anywhere are errors)::

    output:    directory for artifacts (relative paths resolve against the config file)
    data:      {paths, kind, modality, n, labels, truth}
    generate:  generator block (see synthgen.genspec_from_dict); alternative to data
    model:     {diag, offdiag | both, drop_constants}
    prior:     {type: dirichlet_multinomial | crp, alpha}
    sampler:   {K, sweeps, burn_in, thin, seed, n_chains, init, allow_new_cluster,
                k_cap, greedy, check_every, level, workers}
    select_k:  {K_values}
    report:    {labels, propensities, a, b}
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .families import DEFAULTS, FamilySpec, family_from_dict
from .priors import prior_from_dict

TOP_KEYS = {"output", "data", "generate", "model", "prior", "sampler", "select_k", "report"}
DATA_KEYS = {"paths", "kind", "modality", "n", "labels", "truth"}
MODEL_KEYS = {"diag", "offdiag", "both", "drop_constants"}
SAMPLER_KEYS = {"K", "sweeps", "burn_in", "thin", "seed", "n_chains", "init",
                "allow_new_cluster", "k_cap", "greedy", "check_every", "level", "workers"}
SELECT_KEYS = {"K_values"}
REPORT_KEYS = {"labels", "propensities", "a", "b"}

SAMPLER_DEFAULTS = {"K": None, "sweeps": 5000, "burn_in": 1000, "thin": 10, "seed": 0,
                    "n_chains": 1, "init": None, "allow_new_cluster": True, "k_cap": None,
                    "greedy": False, "check_every": 100, "level": 0.95, "workers": None}


def _check_keys(block, allowed, where):
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}; allowed: {sorted(allowed)}")
    return dict(block)


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    @classmethod
    def from_dict(cls, raw, base_dir="."):
        raw = _check_keys(raw, TOP_KEYS, "config")
        raw["data"] = _check_keys(raw.get("data"), DATA_KEYS, "data") or None
        raw["model"] = _check_keys(raw.get("model"), MODEL_KEYS, "model")
        raw["sampler"] = {**SAMPLER_DEFAULTS,
                          **_check_keys(raw.get("sampler"), SAMPLER_KEYS, "sampler")}
        raw["select_k"] = _check_keys(raw.get("select_k"), SELECT_KEYS, "select_k")
        raw["report"] = _check_keys(raw.get("report"), REPORT_KEYS, "report")
        raw["prior"] = raw.get("prior") or {}
        if raw["data"] is not None and raw.get("generate") is not None:
            raise ConfigError("give either a data block or a generate block, not both")
        cfg = cls(raw, Path(base_dir))
        if raw["model"].get("both") and (raw["model"].get("diag") or raw["model"].get("offdiag")):
            raise ConfigError("model.both excludes model.diag / model.offdiag")
        return cfg

    def apply_overrides(self, seed=None, sweeps=None, k=None, out=None):
        raw = self.raw
        if seed is not None:
            raw["sampler"]["seed"] = int(seed)
            if raw.get("generate") is not None:
                raw["generate"]["seed"] = int(seed)
        if sweeps is not None:
            raw["sampler"]["sweeps"] = int(sweeps)
        if k is not None:
            ks = [int(x) for x in str(k).split(",") if x.strip()]
            if not ks:
                raise ConfigError("--k needs an integer or a comma-separated list")
            if len(ks) == 1:
                raw["sampler"]["K"] = ks[0]
            raw["select_k"]["K_values"] = ks
        if out is not None:
            raw["output"] = str(out)

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self) -> Path:
        if not self.raw.get("output"):
            raise ConfigError("no output directory (set 'output' or pass --out)")
        return self.resolve(self.raw["output"])

    def family_spec(self, modality) -> FamilySpec:
        m = self.raw["model"]
        drop = bool(m.get("drop_constants", False))
        if m.get("both"):
            diag = offdiag = family_from_dict(m["both"])
        else:
            default = DEFAULTS[modality]
            diag = family_from_dict(m["diag"]) if m.get("diag") else default
            offdiag = family_from_dict(m["offdiag"]) if m.get("offdiag") else default
        try:
            spec = FamilySpec(diag, offdiag, drop)
            spec.check_modality(modality)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return spec

    def prior(self, K):
        return prior_from_dict(self.raw["prior"] or {"type": "dirichlet_multinomial"
                                                     if K is not None else "crp"}, K)

    def sampler_kwargs(self):
        s = dict(self.raw["sampler"])
        for key in ("sweeps", "burn_in", "thin", "seed", "n_chains", "check_every"):
            if not isinstance(s[key], int) or isinstance(s[key], bool):
                raise ConfigError(f"sampler.{key} must be an integer")
        return s

    def effective(self) -> dict:
        """Full post-override configuration, suitable for replay."""
        return copy.deepcopy(self.raw)
