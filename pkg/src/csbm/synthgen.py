"""Planted-partition generators for the synthetic benchmarks.

Every mechanism draws dyads independently given the planted labels. Block
parameters come either from (within, between) scalars or from an explicit
K x K matrix, which also covers the gap-constrained case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .netdata import DyadData

MECHANISMS = ("bernoulli", "poisson", "gaussian", "zip", "multiplex", "dyad4", "signed")


@dataclass
class GenSpec:
    n: int
    K: int
    mechanism: str
    params: dict = field(default_factory=dict)
    sizes: tuple | None = None
    seed: int = 0
    directed: bool = False
    shuffle: bool = True

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise DomainError(f"unknown mechanism {self.mechanism!r}; choose from {MECHANISMS}")
        if self.n < 1 or self.K < 1 or self.K > self.n:
            raise DomainError("need 1 <= K <= n")
        if self.sizes is None:
            base, extra = divmod(self.n, self.K)
            self.sizes = tuple(base + (1 if k < extra else 0) for k in range(self.K))
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) != self.K or sum(self.sizes) != self.n or min(self.sizes) < 1:
            raise DomainError("cluster sizes must be K positive integers summing to n")
        if self.directed and self.mechanism in ("gaussian", "signed", "multiplex"):
            raise DomainError(f"{self.mechanism} generation is undirected")
        self.block_params()

    def _matrix(self, inside, between, key):
        P = self.params.get(key)
        if P is not None:
            P = np.asarray(P, dtype=float)
            if P.shape != (self.K, self.K):
                raise DomainError(f"{key} must be a K x K matrix")
            if not self.directed and not np.allclose(P, P.T):
                raise DomainError(f"{key} must be symmetric for undirected data")
            return P
        if inside not in self.params or between not in self.params:
            raise DomainError(f"{self.mechanism} needs {inside} and {between} (or {key})")
        P = np.full((self.K, self.K), float(self.params[between]))
        np.fill_diagonal(P, float(self.params[inside]))
        return P

    def block_params(self):
        """Validated block parameter arrays for the mechanism."""
        m = self.mechanism
        if m == "bernoulli":
            P = self._matrix("p_in", "p_out", "P")
            _prob(P)
            return {"P": P}
        if m == "poisson":
            lam = self._matrix("lam_in", "lam_out", "lam")
            if (lam <= 0).any():
                raise DomainError("Poisson rates must be positive")
            return {"lam": lam}
        if m == "gaussian":
            mu = self._matrix("mu_in", "mu_out", "mu")
            sigma = self.params.get("sigma", 1.0)
            sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (self.K, self.K)).copy()
            if (sigma <= 0).any():
                raise DomainError("sigma must be positive")
            return {"mu": mu, "sigma": sigma}
        if m == "zip":
            P = self._matrix("p_in", "p_out", "P")
            lam = self._matrix("lam_in", "lam_out", "lam")
            _prob(P)
            if (lam <= 0).any():
                raise DomainError("Poisson rates must be positive")
            return {"P": P, "lam": lam}
        if m == "multiplex":
            layers = self.params.get("layers")
            if not layers:
                raise DomainError("multiplex needs a non-empty 'layers' list")
            mats = []
            for layer in layers:
                sub = GenSpec(self.n, self.K, "bernoulli", dict(layer), self.sizes, self.seed)
                mats.append(sub.block_params()["P"])
            return {"P": mats}
        if m == "dyad4":
            pin, pout = _simplex(self.params, "pi_in", 4), _simplex(self.params, "pi_out", 4)
            return {"pi_in": pin, "pi_out": pout}
        pin, pout = _simplex(self.params, "theta_in", 3), _simplex(self.params, "theta_out", 3)
        return {"theta_in": pin, "theta_out": pout}

    @property
    def kind(self):
        return "directed" if self.directed or self.mechanism == "dyad4" else "undirected"

    @property
    def modality(self):
        return {"bernoulli": "binary", "poisson": "count", "gaussian": "real", "zip": "count",
                "multiplex": "binary", "dyad4": "dyad4", "signed": "signed"}[self.mechanism]

    def to_dict(self):
        return {"n": self.n, "K": self.K, "mechanism": self.mechanism,
                "params": self.params, "sizes": list(self.sizes), "seed": self.seed,
                "directed": self.directed, "shuffle": self.shuffle}


def _prob(P):
    if (P < 0).any() or (P > 1).any():
        raise DomainError("probabilities must lie in [0, 1]")


def _simplex(params, key, m):
    if key not in params:
        raise DomainError(f"missing {key}")
    v = np.asarray(params[key], dtype=float)
    if v.shape != (m,) or (v < 0).any() or abs(v.sum() - 1) > 1e-9:
        raise DomainError(f"{key} must be a probability vector of length {m}")
    return v


def planted_labels(spec: GenSpec, rng) -> np.ndarray:
    z = np.repeat(np.arange(spec.K), spec.sizes)
    if spec.shuffle:
        z = rng.permutation(z)
    return z


def _pairs(n, directed):
    if directed:
        i, j = np.nonzero(~np.eye(n, dtype=bool))
        return i, j
    return np.triu_indices(n, 1)


def generate(spec: GenSpec):
    """Draw (DyadData, truth labels) from the planted model; deterministic in spec.seed."""
    rng = np.random.default_rng(spec.seed)
    z = planted_labels(spec, rng)
    bp = spec.block_params()
    m = spec.mechanism
    n = spec.n
    if m == "dyad4":
        i, j = np.triu_indices(n, 1)
        a, b = z[i], z[j]
        pin, pout = bp["pi_in"], bp["pi_out"]
        u = rng.random(len(i))
        same = a == b
        state = np.where(same, np.searchsorted(np.cumsum(pin), u, side="right"),
                         np.searchsorted(np.cumsum(pout), u, side="right"))
        state = np.minimum(state, 3)
        # off-diagonal draws are oriented from the smaller community label
        flip = ~same & (a > b)
        state = np.where(flip & (state == 1), 2, np.where(flip & (state == 2), 1, state))
        fwd = (state == 1) | (state == 3)
        bwd = (state == 2) | (state == 3)
        src = np.concatenate([i[fwd], j[bwd]])
        dst = np.concatenate([j[fwd], i[bwd]])
        data = DyadData.from_arrays(n, "directed", "dyad4", [(src, dst, np.ones(len(src)))])
        return data, z
    i, j = _pairs(n, spec.directed)
    a, b = z[i], z[j]
    if m == "bernoulli":
        y = (rng.random(len(i)) < bp["P"][a, b]).astype(float)
        layers = [(i, j, y)]
    elif m == "poisson":
        layers = [(i, j, rng.poisson(bp["lam"][a, b]).astype(float))]
    elif m == "gaussian":
        y = rng.normal(bp["mu"][a, b], bp["sigma"][a, b])
        layers = [(i, j, y)]
    elif m == "zip":
        active = rng.random(len(i)) < bp["P"][a, b]
        y = np.where(active, rng.poisson(bp["lam"][a, b]), 0).astype(float)
        layers = [(i, j, y)]
    elif m == "multiplex":
        layers = [(i, j, (rng.random(len(i)) < P[a, b]).astype(float)) for P in bp["P"]]
    else:
        th_in, th_out = bp["theta_in"], bp["theta_out"]
        u = rng.random(len(i))
        cat = np.where(a == b, np.searchsorted(np.cumsum(th_in), u, side="right"),
                       np.searchsorted(np.cumsum(th_out), u, side="right"))
        cat = np.minimum(cat, 2)
        y = np.select([cat == 1, cat == 2], [1.0, -1.0], 0.0)
        layers = [(i, j, y)]
    data = DyadData.from_arrays(n, spec.kind, spec.modality, layers)
    return data, z


def complementary_layers(K, p_hi, p_lo, p_out):
    """Layer l boosts the within-probability of community l (mod K)."""
    layers = []
    for l in range(K):
        P = np.full((K, K), p_out)
        np.fill_diagonal(P, p_lo)
        P[l, l] = p_hi
        layers.append({"P": P.tolist()})
    return layers


def preset(name: str, seed: int = 0) -> GenSpec:
    """Generator settings for the bundled synthetic cases."""
    name = name.upper().replace("_", "-")
    if name == "S1":
        return GenSpec(150, 3, "bernoulli", {"p_in": 0.15, "p_out": 0.02}, seed=seed)
    if name == "S2":
        return GenSpec(150, 3, "poisson", {"lam_in": 1.5, "lam_out": 0.15}, seed=seed)
    if name == "S3":
        return GenSpec(150, 3, "bernoulli", {"p_in": 0.12, "p_out": 0.005},
                       sizes=(49, 50, 51), seed=seed)
    if name == "S4":
        return GenSpec(150, 3, "zip", {"p_in": 0.5, "p_out": 0.05, "lam_in": 2.0,
                                       "lam_out": 0.4}, seed=seed)
    if name == "S5":
        return GenSpec(150, 3, "multiplex",
                       {"layers": complementary_layers(3, 0.25, 0.08, 0.02)}, seed=seed)
    if name == "SI-B":
        return GenSpec(150, 3, "gaussian", {"mu_in": 1.0, "mu_out": 0.0, "sigma": 1.0},
                       seed=seed)
    if name == "SI-C":
        return GenSpec(120, 2, "dyad4", {"pi_in": [0.76, 0.08, 0.08, 0.08],
                                         "pi_out": [0.93, 0.02, 0.04, 0.01]}, seed=seed)
    if name == "SI-D":
        return GenSpec(150, 3, "signed", {"theta_in": [0.80, 0.17, 0.03],
                                          "theta_out": [0.90, 0.02, 0.08]}, seed=seed)
    raise ConfigError(f"unknown preset {name!r}")


def genspec_from_dict(d) -> GenSpec:
    d = dict(d)
    allowed = {"n", "K", "mechanism", "params", "sizes", "seed", "directed", "shuffle", "preset"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown generate keys: {sorted(unknown)}")
    try:
        if "preset" in d:
            base = preset(d.pop("preset"), int(d.pop("seed", 0)))
            fields = base.to_dict()
            if "params" in d:
                fields["params"] = {**fields["params"], **d.pop("params")}
            if ("n" in d or "K" in d) and "sizes" not in d:
                fields["sizes"] = None
            fields.update(d)
            return GenSpec(**fields)
        if "params" in d and isinstance(d["params"], dict) and "complementary" in d["params"]:
            c = d["params"].pop("complementary")
            d["params"]["layers"] = complementary_layers(int(d["K"]), c["p_hi"], c["p_lo"],
                                                         c["p_out"])
        return GenSpec(**d)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad generate block: {exc}") from exc
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
