"""Synthetic populations and outcomes for parameter-recovery experiments.

All randomness flows from ``numpy.random.SeedSequence`` keys built from the
user seed and an individual (or scenario-block) index, so any individual's
data can be regenerated in isolation and the output never depends on the order
in which individuals are processed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import reference as ref
from .dataset import CATEGORY, Dataset, apply_coding
from .jenks import DEFAULT_BREAKS, classify_values
from .likelihood import _lin, binary_logit_prob, thresholds_from
from .modelspec import BINARY_FAMILIES, ModelSpec, bind_spec

SCENARIO_RULES = ("balanced", "uniform")

# stream purposes, the last element of every SeedSequence key
_COVARIATES, _SCENARIOS, _CHOICES, _NOISE = 0, 1, 2, 3


class SynthError(ValueError):
    pass


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclass(frozen=True)
class PopulationSpec:
    """Recipe for a synthetic panel.

    ``n_observations`` (when set) is spread as evenly as possible across
    individuals; otherwise every individual gets ``obs_per_individual``.
    ``marginals`` maps each sampled individual-level variable to level shares
    in level order (binary variables: [share of 0, share of 1]).
    """

    n_individuals: int = ref.N_PARTICIPANTS
    n_observations: int | None = None
    obs_per_individual: int = 3
    marginals: dict = field(default_factory=ref.table2_shares)
    scenario_rule: str = "balanced"
    seed: int = 0
    lci_trials: int = 13
    lci_p: float = 0.3
    schema: tuple = ref.SURVEY_SCHEMA
    coding: tuple = ref.SURVEY_CODING

    def __post_init__(self):
        if int(self.n_individuals) < 1:
            raise SynthError("n_individuals must be >= 1")
        if self.n_observations is not None and int(self.n_observations) < int(self.n_individuals):
            raise SynthError("n_observations must give every individual at least one observation")
        if int(self.obs_per_individual) < 1:
            raise SynthError("obs_per_individual must be >= 1")
        if self.scenario_rule not in SCENARIO_RULES:
            raise SynthError(f"scenario_rule must be one of {SCENARIO_RULES}")
        if not 0.0 <= self.lci_p <= 1.0:
            raise SynthError("lci_p must lie in [0, 1]")
        defs = {d.name: d for d in self.schema}
        shares = {}
        for name, s in self.marginals.items():
            s = np.asarray(s, float)
            if name not in defs:
                raise SynthError(f"marginals given for unknown variable {name!r}")
            expected = len(defs[name].levels) if defs[name].kind == CATEGORY else 2
            if s.shape != (expected,):
                raise SynthError(f"{name}: expected {expected} shares, got {s.size}")
            if np.any(s < 0) or not np.isclose(s.sum(), 1.0, rtol=0, atol=1e-9):
                raise SynthError(f"{name}: shares must be non-negative and sum to 1 (sum={s.sum():.6g})")
            shares[name] = s
        object.__setattr__(self, "marginals", shares)

    def group_sizes(self) -> np.ndarray:
        n = int(self.n_individuals)
        if self.n_observations is None:
            return np.full(n, int(self.obs_per_individual))
        base, extra = divmod(int(self.n_observations), n)
        return base + (np.arange(n) < extra)

    def to_dict(self) -> dict:
        return {"n_individuals": int(self.n_individuals),
                "n_observations": int(self.group_sizes().sum()),
                "scenario_rule": self.scenario_rule, "seed": int(self.seed),
                "marginals": {k: [float(x) for x in v] for k, v in self.marginals.items()},
                "LCI": {"distribution": "binomial", "trials": self.lci_trials, "p": self.lci_p},
                "acceleration": {"distribution": "standard normal",
                                 "note": "units and distribution unreported; synthetic default"}}


def _scenarios(spec: PopulationSpec, n_obs: int) -> np.ndarray:
    if spec.scenario_rule == "uniform":
        out = np.empty(n_obs, np.int64)
        for b in range(0, n_obs, 16):
            out[b:b + 16] = _rng(spec.seed, b // 16, _SCENARIOS).integers(1, 17, min(16, n_obs - b))
        return out
    # every consecutive block of 16 observations is a random permutation of the factorial
    blocks = [_rng(spec.seed, b, _SCENARIOS).permutation(16) + 1 for b in range((n_obs + 15) // 16)]
    return np.concatenate(blocks)[:n_obs] if blocks else np.zeros(0, np.int64)


def generate_population(spec: PopulationSpec) -> Dataset:
    """Covariate-only coded Dataset: individual traits from the marginals, scenarios by rule."""
    sizes = spec.group_sizes()
    n, n_obs = len(sizes), int(sizes.sum())
    defs = {d.name: d for d in spec.schema}
    traits = [name for name in spec.marginals]
    per_ind = {name: np.empty(n) for name in traits}
    lci = np.empty(n)
    accel = np.empty(n_obs)
    offsets = np.r_[0, np.cumsum(sizes)]
    cum = [np.cumsum(spec.marginals[name])[:-1] for name in traits]
    first = [1 if defs[name].kind == CATEGORY else 0 for name in traits]
    for i in range(n):
        g = _rng(spec.seed, i, _COVARIATES)
        u = g.random(len(traits))
        for j, name in enumerate(traits):
            per_ind[name][i] = first[j] + np.searchsorted(cum[j], u[j], side="right")
        lci[i] = g.binomial(spec.lci_trials, spec.lci_p)
        accel[offsets[i]:offsets[i + 1]] = g.standard_normal(sizes[i])

    ids = np.repeat(np.arange(1, n + 1), sizes)
    scen = _scenarios(spec, n_obs)
    covs = {name: np.repeat(v, sizes) for name, v in per_ind.items()}
    covs["LCI"] = np.repeat(lci, sizes)
    covs["acceleration"] = accel
    for j, name in enumerate(ref.SCENARIO_VARIABLES):
        lookup = np.array([0] + [ref.SCENARIOS[s][j] for s in range(1, 17)], float)
        covs[name] = lookup[scen]
    missing = [d.name for d in spec.schema if d.name not in covs]
    if missing:
        raise SynthError(f"no generator for schema variables {missing}")
    ds = Dataset(spec.schema, ids, scen, {d.name: covs[d.name] for d in spec.schema})
    return apply_coding(ds, spec.coding)


def _bind(spec: ModelSpec, population: Dataset, params):
    bound = bind_spec(spec, population)
    theta = np.asarray(params, float)
    if theta.shape != (spec.n_params,):
        raise SynthError(f"truth has {theta.size} values, model needs {spec.n_params}")
    return bound, theta


def class_probabilities(spec: ModelSpec, population: Dataset, params) -> np.ndarray:
    """(n_individuals, Z) membership probabilities under ``params``."""
    bound, theta = _bind(spec, population, params)
    return _membership_matrix(bound, np.r_[theta, 0.0])


def _membership_matrix(bound, theta_ext):
    n, Z = bound.n_individuals, bound.spec.n_classes
    scores = np.zeros((n, Z))
    for z in range(Z - 1):
        scores[:, z] = _lin(bound.W[z], theta_ext[bound.alpha_idx[z]])
    scores -= scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    return p / p.sum(axis=1, keepdims=True)


def simulate_binary_choices(population: Dataset, spec: ModelSpec, params, seed: int) -> Dataset:
    """Draw giveAway choices from the family's own kernel.

    Per individual, one stream supplies in order: a class uniform, one
    uniform per observation, then the random-coefficient normals of the drawn
    class. A model whose sds are zero therefore reproduces the choices of the
    same model without random terms.
    """
    if spec.family not in BINARY_FAMILIES:
        raise SynthError(f"{spec.family} is not a binary choice family")
    bound, theta = _bind(spec, population, params)
    ext = np.r_[theta, 0.0]
    pi = _membership_matrix(bound, ext)
    cum = np.cumsum(pi, axis=1)
    v_fixed = [_lin(c.X, ext[c.beta_idx]) for c in bound.classes]
    starts, sizes = population.group_starts, population.group_sizes
    y = np.empty(population.n_observations, np.int64)
    for i in range(bound.n_individuals):
        g = _rng(seed, i, _CHOICES)
        o = slice(starts[i], starts[i] + sizes[i])
        z = min(int(np.searchsorted(cum[i], g.random(), side="right")), len(cum[i]) - 1)
        u = g.random(sizes[i])
        c = bound.classes[z]
        v = v_fixed[z][o]
        if len(c.sd_idx):
            xi = g.standard_normal(len(c.sd_idx))
            v = v + (c.R[o] * (ext[c.sd_idx] * xi)).sum(axis=1)
        y[o] = u < binary_logit_prob(v)
    return population.replace(choice_y=y)


def simulate_proportions(population: Dataset, spec: ModelSpec, params, noise_sd: float, seed: int,
                         breaks=DEFAULT_BREAKS, clamp: bool = True) -> Dataset:
    """auto_proportion = linear predictor + N(0, noise_sd^2), clamped to [0, 1], then categorized."""
    if spec.family != "LR":
        raise SynthError("simulate_proportions needs an LR model")
    if not noise_sd >= 0:
        raise SynthError("noise sd must be >= 0")
    bound, theta = _bind(spec, population, params)
    c = bound.classes[0]
    prop = _lin(c.X, theta[c.beta_idx])
    if noise_sd > 0:
        starts, sizes = population.group_starts, population.group_sizes
        eps = np.empty_like(prop)
        for i in range(bound.n_individuals):
            eps[starts[i]:starts[i] + sizes[i]] = _rng(seed, i, _NOISE).standard_normal(sizes[i])
        prop = prop + noise_sd * eps
    if clamp:
        prop = np.clip(prop, 0.0, 1.0)
    return population.replace(auto_proportion=prop, ordinal_category=classify_values(prop, breaks))


def simulate_ordinal_choices(population: Dataset, spec: ModelSpec, params, seed: int) -> Dataset:
    """Ordinal categories from a logistic latent scale cut at the model's thresholds."""
    if spec.family != "OL":
        raise SynthError("simulate_ordinal_choices needs an OL model")
    bound, theta = _bind(spec, population, params)
    c = bound.classes[0]
    eta = _lin(c.X, theta[c.beta_idx])
    idx = bound.threshold_idx
    tau = thresholds_from(theta[idx[0]], theta[idx[1:]])
    starts, sizes = population.group_starts, population.group_sizes
    u = np.empty_like(eta)
    for i in range(bound.n_individuals):
        u[starts[i]:starts[i] + sizes[i]] = _rng(seed, i, _CHOICES).random(sizes[i])
    u = np.clip(u, 1e-300, None)
    latent = eta + np.log(u) - np.log1p(-u)
    # P(category <= k) = F(tau_k - eta)
    cat = 1 + (latent[:, None] > tau[None, :]).sum(axis=1)
    return population.replace(ordinal_category=cat)
