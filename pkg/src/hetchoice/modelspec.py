"""Declarative model descriptions and their binding to a dataset.

Configuration is JSON. Top-level keys::

    family        one of BL, MIXL, LCM, LCML, OL, LR
    name          optional label
    classes       list of {"name", "alternative"?, "utilities", "random_coefs"?}
                  utilities:    [{"coef": <name>, "variable": <column or "CONSTANT">}]
                  random_coefs: [{"mean": <utility coef>, "sd": <name>}]
                                or [{"variable": <column>, "sd": <name>}] (zero-mean)
    membership    {<class name>: [{"coef", "variable"}]} for every class but the last,
                  which is the reference (all membership parameters fixed at 0)
    thresholds    OL only: {"first": <name>, "increments": [<name>...], "unused": [<name>...]}
    draws         {"count", "method", "seed", "burn_in", "bases"} (see draws.DrawConfig)

Parameter vector layout of a bound model: class-1 utility coefficients,
class-2 utility coefficients, ..., sd parameters (class order), membership
parameters (class order), thresholds (first, then increments). With more than
one class every class-level name is qualified as ``<class>.<coef>``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import BINARY, CATEGORY, Dataset
from .draws import DrawConfig

CONSTANT = "CONSTANT"
FAMILIES = ("BL", "MIXL", "LCM", "LCML", "OL", "LR")
BINARY_FAMILIES = ("BL", "MIXL", "LCM", "LCML")

_TOP_KEYS = {"family", "name", "classes", "membership", "thresholds", "draws"}
_CLASS_KEYS = {"name", "alternative", "utilities", "random_coefs"}
_TERM_KEYS = {"coef", "variable"}
_RANDOM_KEYS = {"mean", "variable", "sd"}
_THRESHOLD_KEYS = {"first", "increments", "unused"}
_DRAW_KEYS = {"count", "method", "seed", "burn_in", "bases"}


class SpecError(ValueError):
    pass


class BindError(SpecError):
    pass


@dataclass(frozen=True)
class Term:
    coef: str
    variable: str


@dataclass(frozen=True)
class UtilitySpec:
    terms: tuple[Term, ...]
    alternative: str = "giveAway"

    @property
    def coef_names(self) -> tuple[str, ...]:
        return tuple(t.coef for t in self.terms)


@dataclass(frozen=True)
class RandomCoefSpec:
    """Normal mixing on one variable: coefficient = mean + sd * xi.

    ``mean`` names a utility coefficient (whose variable is used) or is
    ``None`` for a zero-mean random term on ``variable``.
    """

    sd: str
    variable: str
    mean: str | None = None


@dataclass(frozen=True)
class ClassSpec:
    name: str
    utility: UtilitySpec
    random_coefs: tuple[RandomCoefSpec, ...] = ()


@dataclass(frozen=True)
class ThresholdSpec:
    first: str
    increments: tuple[str, ...] = ()
    unused: tuple[str, ...] = ()

    @property
    def n_categories(self) -> int:
        return len(self.increments) + 2


@dataclass(frozen=True)
class ModelSpec:
    family: str
    classes: tuple[ClassSpec, ...]
    membership: tuple[tuple[Term, ...], ...] = ()
    thresholds: ThresholdSpec | None = None
    draws: DrawConfig = field(default_factory=DrawConfig)
    draws_declared: bool = False
    name: str = ""
    text: str = ""

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_random(self) -> int:
        return sum(len(c.random_coefs) for c in self.classes)

    def qualify(self, class_index: int, coef: str) -> str:
        if self.n_classes == 1:
            return coef
        return f"{self.classes[class_index].name}.{coef}"

    @property
    def param_names(self) -> tuple[str, ...]:
        names = []
        for z, c in enumerate(self.classes):
            names += [self.qualify(z, t.coef) for t in c.utility.terms]
        for z, c in enumerate(self.classes):
            names += [self.qualify(z, r.sd) for r in c.random_coefs]
        for z, terms in enumerate(self.membership):
            names += [self.qualify(z, t.coef) for t in terms]
        if self.thresholds is not None:
            names += [self.thresholds.first, *self.thresholds.increments]
        return tuple(names)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def sd_variables(self) -> dict[str, str]:
        """Map each sd parameter name to the variable it scales."""
        return {self.qualify(z, r.sd): r.variable
                for z, c in enumerate(self.classes) for r in c.random_coefs}

    @property
    def variables(self) -> set[str]:
        out = set()
        for c in self.classes:
            out |= {t.variable for t in c.utility.terms}
            out |= {r.variable for r in c.random_coefs}
        for terms in self.membership:
            out |= {t.variable for t in terms}
        out.discard(CONSTANT)
        return out


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise SpecError(f"{where}: unknown keys {sorted(unknown)}")


def _terms(items, where) -> tuple[Term, ...]:
    if not isinstance(items, list):
        raise SpecError(f"{where}: expected a list of terms")
    out = []
    for i, item in enumerate(items):
        _check_keys(item, _TERM_KEYS, f"{where}[{i}]")
        try:
            out.append(Term(str(item["coef"]), str(item["variable"])))
        except KeyError as exc:
            raise SpecError(f"{where}[{i}]: missing key {exc}") from None
    return tuple(out)


def parse_model_spec(text: str) -> ModelSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    _check_keys(raw, _TOP_KEYS, "model spec")
    family = str(raw.get("family", "")).upper()
    if family not in FAMILIES:
        raise SpecError(f"unknown family {raw.get('family')!r}; expected one of {FAMILIES}")
    if "classes" not in raw or not raw["classes"]:
        raise SpecError("model spec needs at least one class")

    classes = []
    for z, c in enumerate(raw["classes"]):
        where = f"classes[{z}]"
        _check_keys(c, _CLASS_KEYS, where)
        terms = _terms(c.get("utilities", []), f"{where}.utilities")
        coefs = [t.coef for t in terms]
        if len(set(coefs)) != len(coefs):
            raise SpecError(f"{where}: duplicate coefficient names")
        by_coef = {t.coef: t for t in terms}
        randoms = []
        for i, r in enumerate(c.get("random_coefs", [])):
            _check_keys(r, _RANDOM_KEYS, f"{where}.random_coefs[{i}]")
            if "sd" not in r:
                raise SpecError(f"{where}.random_coefs[{i}]: missing sd parameter")
            mean = r.get("mean")
            if mean is not None:
                if mean not in by_coef:
                    raise SpecError(f"{where}.random_coefs[{i}]: mean {mean!r} is not a utility coefficient")
                variable = by_coef[mean].variable
                if "variable" in r and r["variable"] != variable:
                    raise SpecError(f"{where}.random_coefs[{i}]: variable disagrees with mean term")
            elif "variable" in r:
                variable = r["variable"]
            else:
                raise SpecError(f"{where}.random_coefs[{i}]: needs a mean or a variable")
            if r["sd"] == mean:
                raise SpecError(f"{where}.random_coefs[{i}]: sd and mean must differ")
            randoms.append(RandomCoefSpec(str(r["sd"]), str(variable), mean))
        names = coefs + [r.sd for r in randoms]
        if len(set(names)) != len(names):
            raise SpecError(f"{where}: sd parameter names collide with coefficients")
        classes.append(ClassSpec(str(c.get("name", f"class{z + 1}")),
                                 UtilitySpec(terms, str(c.get("alternative", "giveAway"))),
                                 tuple(randoms)))
    class_names = [c.name for c in classes]
    if len(set(class_names)) != len(class_names):
        raise SpecError("class names must be unique")

    membership = ()
    if len(classes) == 1:
        if raw.get("membership"):
            raise SpecError("a single-class model cannot declare a membership block")
    else:
        block = raw.get("membership")
        if not block:
            raise SpecError(f"{len(classes)} classes require a membership block")
        if not isinstance(block, dict):
            raise SpecError("membership: expected an object keyed by class name")
        expected = class_names[:-1]
        if set(block) != set(expected):
            raise SpecError(f"membership must list exactly the non-reference classes {expected} "
                            f"(the last class, {class_names[-1]!r}, is the reference)")
        membership = tuple(_terms(block[n], f"membership.{n}") for n in expected)
        for n, terms in zip(expected, membership):
            if len({t.coef for t in terms}) != len(terms):
                raise SpecError(f"membership.{n}: duplicate coefficient names")

    thresholds = None
    if family == "OL":
        th = raw.get("thresholds")
        _check_keys(th, _THRESHOLD_KEYS, "thresholds")
        if "first" not in th:
            raise SpecError("thresholds: missing first threshold")
        thresholds = ThresholdSpec(str(th["first"]), tuple(th.get("increments", [])),
                                   tuple(th.get("unused", [])))
    elif raw.get("thresholds"):
        raise SpecError(f"thresholds are only valid for OL, not {family}")

    draws_declared = "draws" in raw
    draw_raw = raw.get("draws") or {}
    _check_keys(draw_raw, _DRAW_KEYS, "draws")
    try:
        draws = DrawConfig(**{k: (tuple(v) if k == "bases" else v) for k, v in draw_raw.items()})
    except (TypeError, ValueError) as exc:
        raise SpecError(f"draws: {exc}") from None

    spec = ModelSpec(family, tuple(classes), membership, thresholds, draws, draws_declared,
                     str(raw.get("name", "")), text)
    _check_family(spec)
    names = spec.param_names
    if len(set(names)) != len(names):
        raise SpecError("parameter names must be unique across the model")
    return spec


def _check_family(spec: ModelSpec) -> None:
    f, z, r = spec.family, spec.n_classes, spec.n_random
    if f in ("BL", "MIXL", "OL", "LR") and z != 1:
        raise SpecError(f"{f} takes exactly one class, got {z}")
    if f == "LCML" and z < 2:
        raise SpecError("LCML needs at least two classes")
    if f in ("BL", "LCM", "OL", "LR") and r:
        raise SpecError(f"{f} cannot declare random coefficients")
    if f in ("MIXL", "LCML") and not r:
        raise SpecError(f"{f} needs at least one random coefficient")
    if f == "OL":
        if any(t.variable == CONSTANT for t in spec.classes[0].utility.terms):
            raise SpecError("OL utilities cannot include CONSTANT; thresholds absorb it")


def spec_to_json(spec: ModelSpec) -> dict:
    """Inverse of :func:`parse_model_spec` (as a JSON-ready dict)."""
    out = {"family": spec.family}
    if spec.name:
        out["name"] = spec.name
    out["classes"] = []
    for c in spec.classes:
        item = {"name": c.name, "alternative": c.utility.alternative,
                "utilities": [{"coef": t.coef, "variable": t.variable} for t in c.utility.terms]}
        if c.random_coefs:
            item["random_coefs"] = [{"mean": r.mean, "sd": r.sd} if r.mean else
                                    {"variable": r.variable, "sd": r.sd} for r in c.random_coefs]
        out["classes"].append(item)
    if spec.membership:
        out["membership"] = {c.name: [{"coef": t.coef, "variable": t.variable} for t in terms]
                             for c, terms in zip(spec.classes, spec.membership)}
    if spec.thresholds is not None:
        out["thresholds"] = {"first": spec.thresholds.first,
                             "increments": list(spec.thresholds.increments),
                             "unused": list(spec.thresholds.unused)}
    if spec.draws_declared:
        out["draws"] = spec.draws.to_dict()
    return out


# -- binding --------------------------------------------------------------

@dataclass(frozen=True)
class BoundClass:
    X: np.ndarray            # (n_obs, n_terms) utility design
    beta_idx: np.ndarray     # parameter index for each column of X
    R: np.ndarray            # (n_obs, n_random) variables carrying random terms
    sd_idx: np.ndarray       # parameter index of each sd
    draw_dims: np.ndarray    # column of the DrawSet used by each random term


@dataclass(frozen=True)
class BoundModel:
    spec: ModelSpec
    dataset: Dataset
    classes: tuple[BoundClass, ...]
    W: np.ndarray            # (n_individuals, n_membership_terms) per non-reference class stacked
    alpha_idx: np.ndarray    # (Z-1, n_membership_terms) parameter indices
    threshold_idx: np.ndarray
    y: np.ndarray | None
    starts: np.ndarray
    obs_individual: np.ndarray

    @property
    def family(self) -> str:
        return self.spec.family

    @property
    def param_names(self) -> tuple[str, ...]:
        return self.spec.param_names

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    @property
    def n_individuals(self) -> int:
        return self.dataset.n_individuals

    @property
    def n_observations(self) -> int:
        return self.dataset.n_observations

    @property
    def n_random(self) -> int:
        return self.spec.n_random

    def column(self, name: str) -> np.ndarray:
        if name == CONSTANT:
            return np.ones(self.n_observations)
        return self.dataset.covariates[name]


def _column(dataset: Dataset, name: str, role: str) -> np.ndarray:
    if name == CONSTANT:
        return np.ones(dataset.n_observations)
    if name not in dataset.covariates:
        raise BindError(f"unknown variable {name!r} referenced as {role}")
    if dataset.variable(name).kind == CATEGORY:
        raise BindError(f"variable {name!r} is a category variable; dummy-code it before use as {role}")
    return np.asarray(dataset.covariates[name], float)


def bind_spec(spec: ModelSpec, dataset: Dataset) -> BoundModel:
    """Materialize design matrices for ``spec`` on ``dataset`` (which is left untouched)."""
    index = {n: i for i, n in enumerate(spec.param_names)}
    classes = []
    offset = 0
    for z, c in enumerate(spec.classes):
        X = np.column_stack([_column(dataset, t.variable, "utility term") for t in c.utility.terms]) \
            if c.utility.terms else np.zeros((dataset.n_observations, 0))
        beta_idx = np.array([index[spec.qualify(z, t.coef)] for t in c.utility.terms], np.int64)
        R = np.column_stack([_column(dataset, r.variable, "random term") for r in c.random_coefs]) \
            if c.random_coefs else np.zeros((dataset.n_observations, 0))
        sd_idx = np.array([index[spec.qualify(z, r.sd)] for r in c.random_coefs], np.int64)
        dims = np.arange(offset, offset + len(c.random_coefs))
        offset += len(c.random_coefs)
        classes.append(BoundClass(X, beta_idx, R, sd_idx, dims))

    starts = dataset.group_starts
    n_terms = max((len(t) for t in spec.membership), default=0)
    W = np.zeros((spec.n_classes - 1, dataset.n_individuals, n_terms))
    alpha_idx = np.full((spec.n_classes - 1, n_terms), -1, np.int64)
    for z, terms in enumerate(spec.membership):
        for j, t in enumerate(terms):
            col = _column(dataset, t.variable, "membership covariate")
            if t.variable != CONSTANT and len(col):
                per_ind = np.repeat(col[starts], dataset.group_sizes)
                if not np.array_equal(per_ind, col):
                    raise BindError(f"membership covariate {t.variable!r} varies within an individual")
            W[z, :, j] = col[starts] if len(col) else 0.0
            alpha_idx[z, j] = index[spec.qualify(z, t.coef)]

    threshold_idx = np.zeros(0, np.int64)
    if spec.thresholds is not None:
        threshold_idx = np.array([index[n] for n in (spec.thresholds.first, *spec.thresholds.increments)])

    if spec.family in BINARY_FAMILIES:
        y = dataset.choice_y
    elif spec.family == "OL":
        y = dataset.ordinal_category if dataset.n_observations and dataset.ordinal_category.any() else None
        if y is not None and (y.min() < 1 or y.max() > spec.thresholds.n_categories):
            raise BindError(f"ordinal_category must lie in 1..{spec.thresholds.n_categories}")
    else:
        y = dataset.auto_proportion if not np.isnan(dataset.auto_proportion).all() else None
        if y is not None and np.isnan(y).any():
            raise BindError("auto_proportion is missing for some observations")
    if y is not None:
        y = np.array(y)
        y.flags.writeable = False
    return BoundModel(spec, dataset, tuple(classes), W, alpha_idx, threshold_idx, y,
                      starts, dataset.individual_index)
