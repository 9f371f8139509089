"""Command-line runs: estimate, recover, classify, simulate, compare.

Exit codes: 0 success, 1 input error, 2 estimation did not converge (the
diagnostic result is still written), 3 recovery coverage below threshold.
Outputs go to ``--out`` or, when absent, to ``$HETCHOICE_OUT`` (default
``./hetchoice_out``). Result files embed a run manifest; its ``timestamps``
entry is the only part that varies between identical runs.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import reference as ref
from .dataset import (DatasetError, apply_coding, coding_rules_from_json, load_csv, schema_from_json,
                      write_csv)
from .draws import DrawConfig
from .estimation import EstimationError, EstimationResult, OptimizerConfig, estimate
from .jenks import JenksError, classify_values, jenks_breaks, LEVEL_NAMES
from .likelihood import LikelihoodError
from .modelspec import FAMILIES, ModelSpec, SpecError, parse_model_spec
from .synthgen import (PopulationSpec, SynthError, generate_population, simulate_binary_choices,
                       simulate_ordinal_choices, simulate_proportions)

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_COVERAGE = 0, 1, 2, 3
OUT_ENV = "HETCHOICE_OUT"
COVERAGE_TARGET = 0.9

log = logging.getLogger("hetchoice")


class InputError(Exception):
    pass


# -- manifest -------------------------------------------------------------------

def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    inputs: dict = field(default_factory=dict)          # path -> sha256
    version: str = __version__
    started: str = ""
    finished: str = ""

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "config": self.config,
                "inputs": {Path(p).name: d for p, d in self.inputs.items()},
                "version": self.version,
                "timestamps": {"started": self.started, "finished": self.finished}}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "hetchoice_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


# -- shared input handling --------------------------------------------------------

def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _load_spec(args, family: str, manifest: RunManifest) -> ModelSpec:
    if args.spec:
        text = _read_text(args.spec)
        manifest.inputs[args.spec] = _digest(args.spec)
    elif family in ref.SPECS:
        text = ref.spec_text(family)
    else:
        raise InputError(f"--spec is required for family {family}")
    spec = parse_model_spec(text)
    if spec.family != family:
        raise InputError(f"--model {family.lower()} does not match the family declared "
                         f"in the --spec file ({spec.family})")
    return spec


def _load_data(args, manifest: RunManifest):
    schema = ref.SURVEY_SCHEMA
    if args.schema:
        schema = schema_from_json(_read_text(args.schema))
        manifest.inputs[args.schema] = _digest(args.schema)
    rules = ref.SURVEY_CODING
    if args.coding == "none":
        rules = ()
    elif args.coding:
        rules = coding_rules_from_json(_read_text(args.coding))
        manifest.inputs[args.coding] = _digest(args.coding)
    if not Path(args.data).is_file():
        raise InputError(f"data file {args.data} not found")
    manifest.inputs[args.data] = _digest(args.data)
    return apply_coding(load_csv(args.data, schema), rules)


def _family(name: str) -> str:
    fam = name.upper()
    if fam not in FAMILIES:
        raise InputError(f"unknown model {name!r}; choose from {', '.join(f.lower() for f in FAMILIES)}")
    return fam


# -- estimate -------------------------------------------------------------------------

def run_estimate(args) -> int:
    manifest = RunManifest("estimate", {}, started=_now())
    family = _family(args.model)
    spec = _load_spec(args, family, manifest)
    data = _load_data(args, manifest)
    config = OptimizerConfig(max_iter=args.max_iter, restarts=args.restarts, seed=args.seed)
    result = estimate(spec, data, config=config, draw_count=args.draws, draw_seed=args.seed,
                      n_threads=args.threads, bic_n=args.bic_n, null=args.null)
    manifest.config = {
        "model": family, "spec_text": spec.text,
        "draws": result.draws,
        "optimizer": {"gtol": config.gtol, "max_iter": config.max_iter,
                      "restarts": config.restarts_for(family), "seed": config.seed},
        "bic_n": args.bic_n, "null": args.null,
    }
    out = _out_dir(args)
    manifest.finished = _now()
    doc = result.to_dict()
    doc["manifest"] = manifest.to_dict()
    _write_json(out / "result.json", doc)
    table = result.format_table()
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    if not result.converged:
        print(f"estimation did not converge: {result.message}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# -- simulate ---------------------------------------------------------------------------

def _load_truth(path, spec: ModelSpec) -> np.ndarray:
    raw = json.loads(_read_text(path))
    values = raw.get("parameters", raw) if isinstance(raw, dict) else None
    if not isinstance(values, dict):
        raise InputError("truth file must be a JSON object of parameter name -> value")
    allowed = set(spec.param_names)
    if spec.thresholds is not None:
        allowed |= set(spec.thresholds.unused)
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise InputError(f"truth names not in the model: {unknown}")
    missing = [n for n in spec.param_names if n not in values]
    if missing:
        raise InputError(f"truth is missing parameters: {missing}")
    return np.array([float(values[n]) for n in spec.param_names])


def _truth_for(args, spec: ModelSpec, manifest: RunManifest) -> np.ndarray:
    if args.truth:
        manifest.inputs[args.truth] = _digest(args.truth)
        return _load_truth(args.truth, spec)
    if spec.family in ref.REPORTED and not args.spec:
        return ref.truth(spec.family)
    raise InputError("--truth is required for this model")


def _population(args, seed: int) -> PopulationSpec:
    return PopulationSpec(n_individuals=args.n, n_observations=args.n_observations,
                          obs_per_individual=args.obs_per_individual, seed=seed)


def _simulate(spec: ModelSpec, truth: np.ndarray, pop: PopulationSpec, seed: int, noise_sd: float):
    data = generate_population(pop)
    if spec.family == "OL":
        return simulate_ordinal_choices(data, spec, truth, seed)
    if spec.family == "LR":
        return simulate_proportions(data, spec, truth, noise_sd, seed)
    return simulate_binary_choices(data, spec, truth, seed)


def run_simulate(args) -> int:
    manifest = RunManifest("simulate", {}, started=_now())
    family = _family(args.model)
    spec = _load_spec(args, family, manifest)
    truth = _truth_for(args, spec, manifest)
    pop = _population(args, args.seed)
    data = _simulate(spec, truth, pop, args.seed, args.noise_sd)
    out = _out_dir(args)
    write_csv(data, out / "dataset.csv")
    manifest.config = {"model": family, "spec_text": spec.text, "seed": args.seed,
                       "truth": dict(zip(spec.param_names, map(float, truth))),
                       "population": pop.to_dict(), "noise_sd": args.noise_sd}
    manifest.finished = _now()
    _write_json(out / "manifest.json", manifest.to_dict())
    print(f"wrote {data.n_observations} observations for {data.n_individuals} individuals to "
          f"{out / 'dataset.csv'}")
    return EXIT_OK


# -- recover ------------------------------------------------------------------------------

def recovery_report(spec: ModelSpec, truth: np.ndarray, results: list[EstimationResult]) -> dict:
    """Per-parameter share of seeds whose +-2 robust SE interval covers the truth, and median bias."""
    est = np.array([r.estimates for r in results])
    se = np.array([r.robust_se for r in results])
    truth = np.asarray(truth, float).copy()
    # a normal random term with sd s is the same model as one with -s
    sd_cols = [spec.param_names.index(n) for n in spec.sd_variables]
    est[:, sd_cols] = np.abs(est[:, sd_cols])
    truth[sd_cols] = np.abs(truth[sd_cols])
    covered = np.abs(est - truth) <= 2 * se                    # NaN SE counts as not covered
    params = []
    for j, name in enumerate(spec.param_names):
        params.append({"name": name, "truth": float(truth[j]),
                       "coverage": float(covered[:, j].mean()),
                       "median_bias": float(np.median(est[:, j] - truth[j])),
                       "median_estimate": float(np.median(est[:, j]))})
    report = {"model": spec.family, "n_seeds": len(results), "parameters": params,
              "converged": [bool(r.converged) for r in results],
              "coverage_target": COVERAGE_TARGET,
              "all_covered": all(p["coverage"] >= COVERAGE_TARGET for p in params)}
    if spec.thresholds is not None:
        inc = [spec.param_names.index(n) for n in spec.thresholds.increments]
        report["ordered_thresholds"] = [bool(np.all(row[inc] > 0)) for row in est]
    return report


def format_recovery(report: dict) -> str:
    lines = [f"{'Parameter':<34} {'truth':>9} {'coverage':>9} {'median bias':>12}"]
    for p in report["parameters"]:
        lines.append(f"{p['name']:<34} {p['truth']:9.3f} {p['coverage']:9.2f} {p['median_bias']:12.4f}")
    lines.append(f"seeds: {report['n_seeds']}, converged: {sum(report['converged'])}")
    return "\n".join(lines)


def run_recover(args) -> int:
    manifest = RunManifest("recover", {}, started=_now())
    family = _family(args.model)
    spec = _load_spec(args, family, manifest)
    truth = _truth_for(args, spec, manifest)
    if args.seeds < 1:
        raise InputError("--seeds must be >= 1")
    config = OptimizerConfig(max_iter=args.max_iter, restarts=args.restarts)
    results = []
    for k in range(args.seeds):
        seed = args.seed + k
        data = _simulate(spec, truth, _population(args, seed), seed, args.noise_sd)
        res = estimate(spec, data, config=config, draw_count=args.draws, n_threads=args.threads,
                       bic_n=args.bic_n)
        log.info("seed %d: LL=%.4f converged=%s", seed, res.loglik, res.converged)
        results.append(res)
    report = recovery_report(spec, truth, results)
    manifest.config = {"model": family, "spec_text": spec.text, "seeds": args.seeds,
                       "first_seed": args.seed, "n_individuals": args.n,
                       "n_observations": args.n_observations, "noise_sd": args.noise_sd,
                       "draws": args.draws}
    manifest.finished = _now()
    report["manifest"] = manifest.to_dict()
    out = _out_dir(args)
    _write_json(out / "recovery.json", report)
    text = format_recovery(report)
    (out / "recovery.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK if report["all_covered"] else EXIT_COVERAGE


# -- classify ---------------------------------------------------------------------------------

def _read_values(path) -> list[float]:
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if line == 1:
                    continue                     # header
                raise InputError(f"line {line}: not a number: {row[0]!r}") from None
    return values


def run_classify(args) -> int:
    manifest = RunManifest("classify", {"k": args.k, "breaks": args.breaks}, started=_now())
    if not Path(args.data).is_file():
        raise InputError(f"data file {args.data} not found")
    manifest.inputs[args.data] = _digest(args.data)
    values = _read_values(args.data)
    if args.breaks:
        breaks = [float(b) for b in args.breaks.split(",")]
        cats = classify_values(values, breaks)
        doc = {"breakpoints": breaks}
    else:
        res = jenks_breaks(values, args.k)
        cats = res.classes
        doc = res.to_dict()
    out = _out_dir(args)
    with open(out / "classified.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "category", "level"])
        for v, c in zip(values, cats):
            w.writerow([repr(float(v)), int(c), LEVEL_NAMES.get(int(c), "") if len(doc["breakpoints"]) == 3 else ""])
    manifest.finished = _now()
    doc["manifest"] = manifest.to_dict()
    _write_json(out / "breaks.json", doc)
    print("breakpoints:", ", ".join(f"{b:g}" for b in doc["breakpoints"]))
    if "gvf" in doc:
        print(f"GVF: {doc['gvf']:.4f}  counts: {doc['counts']}")
    return EXIT_OK


# -- compare ----------------------------------------------------------------------------------

def compare_table(results: list[tuple[str, EstimationResult]]) -> str:
    """Side-by-side estimates and fit rows; columns sorted by BIC, smallest first."""
    cols = sorted(results, key=lambda nr: nr[1].metrics.bic)
    names = []
    for _, r in cols:
        names += [n for n in r.names if n not in names]
    head = f"{'':<34}" + "".join(f"{label[:16]:>18}" for label, _ in cols)
    lines = [head, "-" * len(head)]
    for n in names:
        cells = []
        for _, r in cols:
            if n in r.names:
                j = r.names.index(n)
                cells.append(f"{r.estimates[j]:10.3f} ({r.robust_t[j]:5.2f})")
            else:
                cells.append("")
        lines.append(f"{n:<34}" + "".join(f"{c:>18}" for c in cells))
    lines.append("-" * len(head))
    rows = [("Number of parameters", lambda r: f"{r.k:d}"),
            ("Log-likelihood", lambda r: f"{r.loglik:.3f}"),
            ("AIC", lambda r: f"{r.metrics.aic:.3f}"),
            ("BIC", lambda r: f"{r.metrics.bic:.3f}"),
            ("Rho-square-bar", lambda r: f"{r.metrics.rho_bar:.3f}")]
    for label, fmt in rows:
        lines.append(f"{label:<34}" + "".join(f"{fmt(r):>18}" for _, r in cols))
    return "\n".join(lines)


def run_compare(args) -> int:
    results = []
    for path in args.results:
        try:
            doc = json.loads(_read_text(path))
            results.append((Path(path).parent.name or Path(path).stem, EstimationResult.from_dict(doc)))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: not an estimation result ({exc})") from None
    text = compare_table(results)
    if args.out or os.environ.get(OUT_ENV):
        (_out_dir(args) / "compare.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetchoice", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    models = [f.lower() for f in FAMILIES]

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./hetchoice_out)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")

    def data_opts(sp):
        sp.add_argument("--schema", help="JSON variable list (default: built-in takeover survey schema)")
        sp.add_argument("--coding", help="JSON coding rules, or 'none' (default: built-in rules)")

    def fit_opts(sp):
        sp.add_argument("--draws", type=int, help="simulation draws per individual")
        sp.add_argument("--bic-n", choices=("observations", "individuals"), default="observations")
        sp.add_argument("--max-iter", type=int, default=500)
        sp.add_argument("--restarts", type=int)

    e = sub.add_parser("estimate", help="fit a model to a dataset CSV")
    e.add_argument("--model", required=True, choices=models)
    e.add_argument("--spec", help="model specification JSON (default: built-in spec for the model)")
    e.add_argument("--data", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--null", choices=("equal-shares", "market-shares", "intercept-only"),
                   default=None)
    fit_opts(e), data_opts(e), common(e)
    e.set_defaults(func=run_estimate)

    r = sub.add_parser("recover", help="simulate from a truth and re-estimate over several seeds")
    r.add_argument("--model", required=True, choices=models)
    r.add_argument("--truth", help="JSON parameter values (default: reported column for the model)")
    r.add_argument("--spec")
    r.add_argument("--n", type=int, required=True, help="individuals per simulated dataset")
    r.add_argument("--n-observations", type=int, help="total observations (default n x obs-per-individual)")
    r.add_argument("--obs-per-individual", type=int, default=3)
    r.add_argument("--seeds", type=int, required=True)
    r.add_argument("--seed", type=int, default=1, help="first seed")
    r.add_argument("--noise-sd", type=float, default=0.1)
    fit_opts(r), common(r)
    r.set_defaults(func=run_recover)

    c = sub.add_parser("classify", help="Jenks natural breaks on a one-column CSV")
    c.add_argument("--data", required=True)
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--breaks", help="comma-separated upper bounds instead of fitting breaks")
    common(c)
    c.set_defaults(func=run_classify)

    s = sub.add_parser("simulate", help="write a synthetic dataset CSV and manifest")
    s.add_argument("--model", required=True, choices=models)
    s.add_argument("--truth")
    s.add_argument("--spec")
    s.add_argument("--n", type=int, default=ref.N_PARTICIPANTS)
    s.add_argument("--n-observations", type=int)
    s.add_argument("--obs-per-individual", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-sd", type=float, default=0.1)
    common(s)
    s.set_defaults(func=run_simulate)

    m = sub.add_parser("compare", help="side-by-side table of result JSONs sorted by BIC")
    m.add_argument("results", nargs="+")
    common(m)
    m.set_defaults(func=run_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "null", "x") is None:
        args.null = "intercept-only" if args.model == "lr" else "equal-shares"
    try:
        return args.func(args)
    except (InputError, DatasetError, SpecError, SynthError, JenksError, LikelihoodError,
            EstimationError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
