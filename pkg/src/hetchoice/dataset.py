"""Panel choice data: variable definitions, CSV ingestion, coding rules and validation.

A :class:`Dataset` is column-oriented. Rows are observations, grouped by
``individual_id`` (stable order within each individual), and every covariate
is stored as a float column keyed by variable name.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

BINARY = "binary-indicator"
CATEGORY = "ordinal-category"
CONTINUOUS = "continuous-score"

_KIND_ALIASES = {
    "binary": BINARY,
    "binary-indicator": BINARY,
    "category": CATEGORY,
    "categorical": CATEGORY,
    "ordinal-category": CATEGORY,
    "continuous": CONTINUOUS,
    "continuous-score": CONTINUOUS,
}

LCI_RANGE = (0.0, 13.0)

ID_COLUMNS = ("individual_id", "scenario_id")
OUTCOME_COLUMNS = ("choice_y", "auto_proportion", "ordinal_category")


class DatasetError(ValueError):
    """Base class for ingestion and coding failures."""


class SchemaError(DatasetError):
    pass


class RowError(DatasetError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyDatasetError(DatasetError):
    pass


class CodingError(DatasetError):
    pass


@dataclass(frozen=True)
class VariableDef:
    name: str
    kind: str
    levels: tuple[str, ...] = ()
    units: str = "dimensionless"

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind)
        if kind is None:
            raise SchemaError(f"unknown variable kind {self.kind!r} for {self.name!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "levels", tuple(self.levels))
        if kind == CATEGORY and len(self.levels) < 2:
            raise SchemaError(f"category variable {self.name!r} needs at least two levels")
        if kind != CATEGORY and self.levels and kind != BINARY:
            raise SchemaError(f"continuous variable {self.name!r} cannot declare levels")

    def parse(self, cell: str) -> float:
        """Convert one CSV cell to the stored numeric value.

        Category variables accept either the level label or its 1-based code.
        """
        cell = cell.strip()
        if self.kind == CATEGORY:
            if cell in self.levels:
                return float(self.levels.index(cell) + 1)
            value = float(cell)
            if value != int(value) or not 1 <= value <= len(self.levels):
                raise ValueError(f"{cell!r} is not a level of {self.name}")
            return value
        value = float(cell)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {cell!r}")
        if self.kind == BINARY and value not in (0.0, 1.0):
            raise ValueError(f"{self.name} must be 0 or 1, got {cell!r}")
        return value


@dataclass(frozen=True)
class Observation:
    individual_id: int
    scenario_id: int
    covariates: Mapping[str, float]
    choice_y: int | None = None
    auto_proportion: float | None = None
    ordinal_category: int | None = None


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable panel of observations.

    ``choice_y`` is ``None`` for covariate-only data. ``auto_proportion`` uses
    NaN and ``ordinal_category`` uses 0 to mark absent values.
    """

    variable_defs: tuple[VariableDef, ...]
    individual_id: np.ndarray
    scenario_id: np.ndarray
    covariates: Mapping[str, np.ndarray]
    choice_y: np.ndarray | None = None
    auto_proportion: np.ndarray | None = None
    ordinal_category: np.ndarray | None = None
    _starts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ids = np.asarray(self.individual_id, dtype=np.int64)
        order = np.argsort(ids, kind="stable")
        sort = lambda a, dtype=float: None if a is None else _frozen(np.asarray(a)[order], dtype)
        object.__setattr__(self, "variable_defs", tuple(self.variable_defs))
        object.__setattr__(self, "individual_id", _frozen(ids[order], np.int64))
        object.__setattr__(self, "scenario_id", sort(self.scenario_id, np.int64))
        covs = {d.name: sort(self.covariates[d.name]) for d in self.variable_defs}
        extra = set(self.covariates) - set(covs)
        if extra:
            raise SchemaError(f"covariates without a VariableDef: {sorted(extra)}")
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "choice_y", sort(self.choice_y, np.int64))
        n = len(ids)
        prop = np.full(n, np.nan) if self.auto_proportion is None else self.auto_proportion
        cat = np.zeros(n, np.int64) if self.ordinal_category is None else self.ordinal_category
        object.__setattr__(self, "auto_proportion", sort(prop))
        object.__setattr__(self, "ordinal_category", sort(cat, np.int64))
        sid = self.individual_id
        starts = np.flatnonzero(np.r_[True, sid[1:] != sid[:-1]]) if n else np.zeros(0, np.int64)
        object.__setattr__(self, "_starts", _frozen(starts, np.int64))

    # -- shape ------------------------------------------------------------
    @property
    def n_observations(self) -> int:
        return len(self.individual_id)

    @property
    def n_individuals(self) -> int:
        return len(self._starts)

    @property
    def group_starts(self) -> np.ndarray:
        """Index of the first observation of each individual."""
        return self._starts

    @property
    def group_sizes(self) -> np.ndarray:
        return np.diff(np.r_[self._starts, self.n_observations])

    @property
    def individual_index(self) -> np.ndarray:
        """0-based individual position for every observation."""
        return np.repeat(np.arange(self.n_individuals), self.group_sizes)

    def variable(self, name: str) -> VariableDef:
        for d in self.variable_defs:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def variable_names(self) -> list[str]:
        return [d.name for d in self.variable_defs]

    @property
    def observations(self) -> Iterator[Observation]:
        names = self.variable_names
        for t in range(self.n_observations):
            prop = self.auto_proportion[t]
            cat = int(self.ordinal_category[t])
            yield Observation(
                individual_id=int(self.individual_id[t]),
                scenario_id=int(self.scenario_id[t]),
                covariates={n: float(self.covariates[n][t]) for n in names},
                choice_y=None if self.choice_y is None else int(self.choice_y[t]),
                auto_proportion=None if np.isnan(prop) else float(prop),
                ordinal_category=cat or None,
            )

    def replace(self, **changes) -> "Dataset":
        fields = dict(
            variable_defs=self.variable_defs,
            individual_id=self.individual_id,
            scenario_id=self.scenario_id,
            covariates=self.covariates,
            choice_y=self.choice_y,
            auto_proportion=self.auto_proportion,
            ordinal_category=self.ordinal_category,
        )
        fields.update(changes)
        return Dataset(**fields)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.variable_defs != other.variable_defs:
            return False
        pairs = [
            (self.individual_id, other.individual_id),
            (self.scenario_id, other.scenario_id),
            (self.auto_proportion, other.auto_proportion),
            (self.ordinal_category, other.ordinal_category),
        ]
        pairs += [(self.covariates[n], other.covariates[n]) for n in self.variable_names]
        if (self.choice_y is None) != (other.choice_y is None):
            return False
        if self.choice_y is not None:
            pairs.append((self.choice_y, other.choice_y))
        return all(np.array_equal(a, b, equal_nan=a.dtype.kind == "f") for a, b in pairs)

    __hash__ = None


def empty_like(schema: Sequence[VariableDef]) -> Dataset:
    return Dataset(
        variable_defs=tuple(schema),
        individual_id=np.zeros(0, np.int64),
        scenario_id=np.zeros(0, np.int64),
        covariates={d.name: np.zeros(0) for d in schema},
        choice_y=np.zeros(0, np.int64),
    )


# -- CSV ------------------------------------------------------------------

def _parse_int(cell: str) -> int:
    value = float(cell)
    if value != int(value):
        raise ValueError(f"{cell!r} is not an integer")
    return int(value)


def read_csv(handle, schema: Sequence[VariableDef], *, allow_empty: bool = False) -> Dataset:
    reader = csv.reader(handle)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyDatasetError("file has no header row") from None
    for required in (*ID_COLUMNS, *(d.name for d in schema)):
        if required not in header:
            raise SchemaError(f"missing column {required!r}")
    col = {name: i for i, name in enumerate(header)}
    has_choice = "choice_y" in col

    ids, scen, ys, props, cats = [], [], [], [], []
    covs = {d.name: [] for d in schema}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise RowError(line, f"expected {len(header)} cells, found {len(row)}")
        try:
            ids.append(_parse_int(row[col["individual_id"]]))
            s = _parse_int(row[col["scenario_id"]])
            if not 1 <= s <= 16:
                raise ValueError(f"scenario_id {s} outside 1..16")
            scen.append(s)
            for d in schema:
                cell = row[col[d.name]]
                if not cell.strip():
                    raise ValueError(f"missing value for {d.name}")
                covs[d.name].append(d.parse(cell))
            if has_choice:
                y = _parse_int(row[col["choice_y"]])
                if y not in (0, 1):
                    raise ValueError(f"choice_y must be 0 or 1, got {y}")
                ys.append(y)
            cell = row[col["auto_proportion"]].strip() if "auto_proportion" in col else ""
            p = float(cell) if cell else math.nan
            if cell and not 0.0 <= p <= 1.0:
                raise ValueError(f"auto_proportion {p} outside [0, 1]")
            props.append(p)
            cell = row[col["ordinal_category"]].strip() if "ordinal_category" in col else ""
            k = _parse_int(cell) if cell else 0
            if cell and k not in (1, 2, 3):
                raise ValueError(f"ordinal_category must be 1, 2 or 3, got {k}")
            cats.append(k)
        except ValueError as exc:
            raise RowError(line, str(exc)) from None
    if not ids and not allow_empty:
        raise EmptyDatasetError("dataset has no observation rows")
    return Dataset(
        variable_defs=tuple(schema),
        individual_id=np.array(ids, np.int64),
        scenario_id=np.array(scen, np.int64),
        covariates={k: np.array(v, float) for k, v in covs.items()},
        choice_y=np.array(ys, np.int64) if has_choice else None,
        auto_proportion=np.array(props, float),
        ordinal_category=np.array(cats, np.int64),
    )


def load_csv(path, schema: Sequence[VariableDef], *, allow_empty: bool = False) -> Dataset:
    """Read a UTF-8 panel CSV into a :class:`Dataset`.

    The header must contain ``individual_id``, ``scenario_id`` and every schema
    variable. ``choice_y``, ``auto_proportion`` and ``ordinal_category`` are
    optional columns; blank optional outcome cells mean "absent".
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return read_csv(fh, schema, allow_empty=allow_empty)


def _fmt(value: float) -> str:
    return repr(float(value)) if value != int(value) else str(int(value))


def write_csv(dataset: Dataset, path=None) -> str:
    """Serialize to CSV text (and to ``path`` if given). Round-trips through :func:`load_csv`."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = dataset.variable_names
    header = [*ID_COLUMNS, *names]
    if dataset.choice_y is not None:
        header.append("choice_y")
    header += ["auto_proportion", "ordinal_category"]
    writer.writerow(header)
    for t in range(dataset.n_observations):
        row = [str(dataset.individual_id[t]), str(dataset.scenario_id[t])]
        row += [_fmt(dataset.covariates[n][t]) for n in names]
        if dataset.choice_y is not None:
            row.append(str(dataset.choice_y[t]))
        p = dataset.auto_proportion[t]
        row.append("" if np.isnan(p) else repr(float(p)))
        k = dataset.ordinal_category[t]
        row.append(str(k) if k else "")
        writer.writerow(row)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def schema_from_json(text: str) -> list[VariableDef]:
    """Parse a JSON list of ``{"name", "kind", "levels"?, "units"?}`` objects."""
    items = json.loads(text)
    out = []
    for item in items:
        unknown = set(item) - {"name", "kind", "levels", "units"}
        if unknown:
            raise SchemaError(f"unknown keys in variable definition: {sorted(unknown)}")
        out.append(VariableDef(item["name"], item["kind"], tuple(item.get("levels", ())),
                               item.get("units", "dimensionless")))
    return out


def schema_to_json(schema: Sequence[VariableDef]) -> str:
    items = []
    for d in schema:
        item = {"name": d.name, "kind": d.kind}
        if d.levels:
            item["levels"] = list(d.levels)
        if d.units != "dimensionless":
            item["units"] = d.units
        items.append(item)
    return json.dumps(items, indent=2)


# -- coding rules ---------------------------------------------------------

@dataclass(frozen=True)
class DummyRule:
    """One 0/1 column per non-reference level, named after the level label."""

    variable: str
    reference: str | None = None


@dataclass(frozen=True)
class CompoundRule:
    """Product of binary indicators, e.g. ``multitasking_night = multitasking * night``."""

    name: str
    operands: tuple[str, ...]


@dataclass(frozen=True)
class ComplementRule:
    name: str
    operand: str


@dataclass(frozen=True)
class UnionRule:
    """Logical OR of binary indicators."""

    name: str
    operands: tuple[str, ...]


def _require_binary(defs: dict, name: str, rule) -> None:
    if name not in defs:
        raise CodingError(f"{type(rule).__name__} references unknown variable {name!r}")
    if defs[name].kind != BINARY:
        raise CodingError(f"{type(rule).__name__} {getattr(rule, 'name', '')!r} needs binary "
                          f"operands; {name!r} is {defs[name].kind}")


def apply_coding(dataset: Dataset, rules: Sequence) -> Dataset:
    """Derive indicator columns. Rules apply in order; re-applying is a no-op."""
    defs = {d.name: d for d in dataset.variable_defs}
    order = list(defs)
    covs = dict(dataset.covariates)

    def put(name, values):
        if name in defs and defs[name].kind != BINARY:
            raise CodingError(f"derived column {name!r} would overwrite a {defs[name].kind} variable")
        if name not in defs:
            order.append(name)
        defs[name] = VariableDef(name, BINARY)
        covs[name] = values.astype(float)

    for rule in rules:
        if isinstance(rule, DummyRule):
            if rule.variable not in defs:
                raise CodingError(f"dummy rule references unknown variable {rule.variable!r}")
            d = defs[rule.variable]
            if d.kind != CATEGORY:
                raise CodingError(f"dummy rule needs a category variable; {d.name!r} is {d.kind}")
            ref = rule.reference if rule.reference is not None else d.levels[0]
            if ref not in d.levels:
                raise CodingError(f"reference level {ref!r} not declared for {d.name!r}")
            for code, label in enumerate(d.levels, start=1):
                if label != ref:
                    put(label, covs[d.name] == code)
        elif isinstance(rule, CompoundRule):
            for op in rule.operands:
                _require_binary(defs, op, rule)
            put(rule.name, np.prod([covs[op] for op in rule.operands], axis=0) == 1)
        elif isinstance(rule, ComplementRule):
            _require_binary(defs, rule.operand, rule)
            put(rule.name, covs[rule.operand] == 0)
        elif isinstance(rule, UnionRule):
            for op in rule.operands:
                _require_binary(defs, op, rule)
            put(rule.name, np.max([covs[op] for op in rule.operands], axis=0) == 1)
        else:
            raise CodingError(f"unknown coding rule {rule!r}")
    return dataset.replace(variable_defs=tuple(defs[n] for n in order), covariates=covs)


def coding_rules_from_json(text: str) -> list:
    """Rules as JSON: ``[{"kind": "dummy"|"compound"|"complement"|"union", ...}]``."""
    out = []
    for item in json.loads(text):
        kind = item.get("kind")
        body = {k: v for k, v in item.items() if k != "kind"}
        try:
            if kind == "dummy":
                out.append(DummyRule(**body))
            elif kind == "compound":
                out.append(CompoundRule(body["name"], tuple(body["operands"])))
            elif kind == "complement":
                out.append(ComplementRule(**body))
            elif kind == "union":
                out.append(UnionRule(body["name"], tuple(body["operands"])))
            else:
                raise CodingError(f"unknown coding rule kind {kind!r}")
        except (TypeError, KeyError) as exc:
            raise CodingError(f"malformed {kind} rule: {exc}") from None
    return out


# -- validation -----------------------------------------------------------

def validate_dataset(dataset: Dataset) -> dict:
    """Marginal counts, giveAway shares and invariant violations.

    Never raises; problems are listed under ``"violations"``.
    """
    y = dataset.choice_y
    violations = []
    variables = {}
    for d in dataset.variable_defs:
        x = dataset.covariates[d.name]
        entry = {"kind": d.kind}
        if d.kind == CONTINUOUS:
            if len(x):
                entry.update(min=float(x.min()), max=float(x.max()), mean=float(x.mean()))
            if d.name == "LCI":
                bad = int(((x < LCI_RANGE[0]) | (x > LCI_RANGE[1])).sum())
                if bad:
                    violations.append({"variable": d.name, "issue": "LCI outside [0, 13]", "count": bad})
        else:
            labels = d.levels if d.kind == CATEGORY else ("0", "1")
            codes = range(1, len(labels) + 1) if d.kind == CATEGORY else (0, 1)
            levels = {}
            for label, code in zip(labels, codes):
                mask = x == code
                n = int(mask.sum())
                level = {"n": n}
                if y is not None:
                    give = int(y[mask].sum())
                    level["giveAway"] = give
                    level["giveAway_share"] = give / n if n else None
                levels[label] = level
            stray = int((~np.isin(x, list(codes))).sum())
            if stray:
                violations.append({"variable": d.name, "issue": "value outside declared levels",
                                   "count": stray})
            entry["levels"] = levels
        variables[d.name] = entry

    report = {
        "n_individuals": dataset.n_individuals,
        "n_observations": dataset.n_observations,
        "variables": variables,
    }
    if y is not None:
        report["giveAway"] = int(y.sum())
        report["giveAway_share"] = float(y.mean()) if len(y) else None
        if len(y) and (y.min() == y.max()):
            violations.append({"variable": "choice_y", "issue": "zero variation in outcome"})
        bad = int((~np.isin(y, (0, 1))).sum())
        if bad:
            violations.append({"variable": "choice_y", "issue": "choice_y outside {0, 1}", "count": bad})
    p = dataset.auto_proportion
    bad = int(((p < 0) | (p > 1)).sum())
    if bad:
        violations.append({"variable": "auto_proportion", "issue": "outside [0, 1]", "count": bad})
    bad = int((~np.isin(dataset.ordinal_category, (0, 1, 2, 3))).sum())
    if bad:
        violations.append({"variable": "ordinal_category", "issue": "outside {1, 2, 3}", "count": bad})
    bad = int(((dataset.scenario_id < 1) | (dataset.scenario_id > 16)).sum())
    if bad:
        violations.append({"variable": "scenario_id", "issue": "outside 1..16", "count": bad})
    report["violations"] = violations
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
