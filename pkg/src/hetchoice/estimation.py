"""Maximum (simulated) likelihood estimation, robust inference and fit metrics."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .dataset import Dataset
from .draws import DrawConfig, DrawSet, standard_normal_draws
from .likelihood import LikelihoodError, PanelLikelihood, ols_fit
from .modelspec import BINARY_FAMILIES, CONSTANT, BoundModel, ModelSpec, bind_spec, parse_model_spec, spec_to_json

log = logging.getLogger(__name__)

Z95 = 1.96
Z90 = 1.645


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    gtol: float = 1e-5
    max_iter: int = 500
    restarts: int | None = None     # None: 5 for LCM/LCML, 1 otherwise
    seed: int = 0

    def __post_init__(self):
        if not self.gtol > 0:
            raise ValueError("gradient tolerance must be positive")
        if self.restarts is not None and self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def restarts_for(self, family: str) -> int:
        if self.restarts is not None:
            return self.restarts
        return 5 if family in ("LCM", "LCML") else 1


# -- finite differences -----------------------------------------------------

def numeric_gradient(f: Callable, theta) -> np.ndarray:
    """Central differences with step 1e-6 * max(1, |theta_j|)."""
    theta = np.asarray(theta, float)
    g = np.empty_like(theta)
    for j in range(len(theta)):
        h = 1e-6 * max(1.0, abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        fu, fd = f(up), f(dn)
        if not (math.isfinite(fu) and math.isfinite(fd)):
            raise EstimationError(f"non-finite objective while differentiating coordinate {j}")
        g[j] = (fu - fd) / (2 * h)
    return g


def numeric_hessian(grad: Callable, theta, rel_step: float = 1e-5) -> np.ndarray:
    """Symmetrized central differences of an analytic gradient."""
    theta = np.asarray(theta, float)
    k = len(theta)
    H = np.empty((k, k))
    for j in range(k):
        h = rel_step * max(1.0, abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        H[:, j] = (grad(up) - grad(dn)) / (2 * h)
    return (H + H.T) / 2


# -- optimizer ----------------------------------------------------------------

@dataclass
class OptimizeOutcome:
    theta: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if len(self.grad) else 0.0


def maximize(fun: Callable, init, config: OptimizerConfig = OptimizerConfig(),
             grad: Callable | None = None, lower=None, polish: bool = True) -> OptimizeOutcome:
    """Quasi-Newton ascent of ``fun`` until the gradient infinity-norm is <= ``config.gtol``.

    ``grad`` defaults to :func:`numeric_gradient`. ``lower`` optionally gives
    per-coordinate lower bounds (``-inf`` for free coordinates); with bounds
    L-BFGS-B is used, otherwise BFGS. A few damped Newton steps on a
    finite-difference Hessian finish the job when the quasi-Newton run stalls
    above the tolerance (skipped with ``polish=False``).
    """
    x0 = np.asarray(init, float)
    if not np.all(np.isfinite(x0)):
        raise EstimationError("initial values must be finite")
    if grad is None:
        grad = lambda t: numeric_gradient(fun, t)
    lower = None if lower is None else np.asarray(lower, float)
    bounded = lower is not None and np.isfinite(lower).any()

    def neg(t):
        v = fun(t)
        return -v if math.isfinite(v) else np.inf

    def neg_grad(t):
        return -grad(t)

    if len(x0) == 0:
        return OptimizeOutcome(x0, fun(x0), np.zeros(0), 0, True, "no free parameters")
    if bounded:
        res = minimize(neg, x0, jac=neg_grad, method="L-BFGS-B",
                       bounds=[(lo if np.isfinite(lo) else None, None) for lo in lower],
                       options={"maxiter": config.max_iter, "gtol": config.gtol, "ftol": 0.0,
                                "maxls": 50})
    else:
        res = minimize(neg, x0, jac=neg_grad, method="BFGS",
                       options={"maxiter": config.max_iter, "gtol": config.gtol})
    theta, iters = res.x, int(res.nit)
    g = grad(theta)
    value = fun(theta)
    message = str(res.message)
    for _ in range(20 if polish else 0):
        if np.max(np.abs(g)) <= config.gtol or iters >= config.max_iter:
            break
        H = numeric_hessian(grad, theta)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or step @ g <= 0:
            break
        t = 1.0
        while t > 1e-8:
            cand = theta + t * step
            if lower is not None and np.any(cand < lower):
                t /= 2
                continue
            v = fun(cand)
            if math.isfinite(v) and v >= value - 1e-12 * abs(value):
                break
            t /= 2
        else:
            break
        theta, value = cand, v
        g = grad(theta)
        iters += 1
        message = "newton refinement"
    gn = float(np.max(np.abs(g)))
    converged = gn <= config.gtol
    if not converged:
        message = f"gradient norm {gn:.3g} above tolerance {config.gtol:g} ({message})"
    return OptimizeOutcome(theta, float(value), g, iters, converged, message)


# -- fit metrics ----------------------------------------------------------------

@dataclass(frozen=True)
class FitMetrics:
    aic: float
    bic: float
    rho_bar: float


def fit_metrics(k: int, LL: float, LL0: float, n: int) -> FitMetrics:
    """AIC = 2k - 2LL, BIC = k ln(n) - 2LL, rho-square-bar = 1 - (LL - k) / LL0."""
    return FitMetrics(aic=2 * k - 2 * LL, bic=k * math.log(n) - 2 * LL, rho_bar=1 - (LL - k) / LL0)


def odds_ratio(beta: float) -> float:
    return math.exp(beta)


def significance_stars(t: float | None) -> str:
    """Footnote convention of the source tables: ``*`` not significant at 95%, ``**`` not at 90%."""
    if t is None or not math.isfinite(t):
        return ""
    a = abs(t)
    if a < Z90:
        return "**"
    if a < Z95:
        return "*"
    return ""


# -- results --------------------------------------------------------------------

def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _json_matrix(m):
    return None if m is None else [[_json_float(v) for v in row] for row in np.asarray(m)]


@dataclass
class EstimationResult:
    family: str
    names: tuple[str, ...]
    estimates: np.ndarray
    robust_cov: np.ndarray | None
    hessian_cov: np.ndarray | None
    loglik: float
    null_loglik: float
    null_model: str
    null_logliks: dict
    n_observations: int
    n_individuals: int
    bic_n: str = "observations"
    cluster: str = "individual"
    converged: bool = True
    iterations: int = 0
    gradient_norm: float = 0.0
    best_restart: int = 0
    restart_logliks: list = field(default_factory=list)
    message: str = ""
    hessian_ok: bool = True
    sd_variables: dict = field(default_factory=dict)
    draws: dict | None = None
    extra: dict = field(default_factory=dict)
    spec: ModelSpec | None = None

    @property
    def k(self) -> int:
        return len(self.names)

    @property
    def n_used_for_bic(self) -> int:
        return self.n_individuals if self.bic_n == "individuals" else self.n_observations

    @property
    def metrics(self) -> FitMetrics:
        return fit_metrics(self.k, self.loglik, self.null_loglik, self.n_used_for_bic)

    @property
    def robust_se(self) -> np.ndarray:
        if self.robust_cov is None:
            return np.full(self.k, np.nan)
        return np.sqrt(np.clip(np.diag(self.robust_cov), 0, None))

    @property
    def hessian_se(self) -> np.ndarray:
        if self.hessian_cov is None:
            return np.full(self.k, np.nan)
        return np.sqrt(np.clip(np.diag(self.hessian_cov), 0, None))

    @property
    def robust_t(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.estimates / self.robust_se

    def param(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])

    def to_dict(self) -> dict:
        m = self.metrics
        se, t, hse = self.robust_se, self.robust_t, self.hessian_se
        params = []
        for j, name in enumerate(self.names):
            tj = _json_float(t[j])
            params.append({
                "name": name,
                "estimate": float(self.estimates[j]),
                "robust_se": _json_float(se[j]),
                "robust_t": tj,
                "hessian_se": _json_float(hse[j]),
                "not_significant_95": None if tj is None else abs(tj) < Z95,
                "not_significant_90": None if tj is None else abs(tj) < Z90,
                "stars": significance_stars(tj),
            })
        out = {
            "family": self.family,
            "parameters": params,
            "n_params": self.k,
            "LL": float(self.loglik),
            "LL0": float(self.null_loglik),
            "null_model": self.null_model,
            "null_logliks": {k: float(v) for k, v in self.null_logliks.items()},
            "AIC": float(m.aic),
            "BIC": float(m.bic),
            "rho_bar": float(m.rho_bar),
            "bic_n": self.bic_n,
            "n_used_for_bic": self.n_used_for_bic,
            "n_observations": self.n_observations,
            "n_individuals": self.n_individuals,
            "cluster": self.cluster,
            "convergence": {
                "converged": bool(self.converged),
                "iterations": int(self.iterations),
                "gradient_norm": float(self.gradient_norm),
                "best_restart": int(self.best_restart),
                "restart_logliks": [_json_float(v) for v in self.restart_logliks],
                "hessian_negative_definite": bool(self.hessian_ok),
                "message": self.message,
            },
            "robust_cov": _json_matrix(self.robust_cov),
            "hessian_cov": _json_matrix(self.hessian_cov),
            "draws": self.draws,
            "extra": {k: _json_float(v) for k, v in self.extra.items()},
            "sd_variables": dict(self.sd_variables),
        }
        if self.spec is not None:
            out["spec"] = spec_to_json(self.spec)
            out["spec_text"] = self.spec.text
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "EstimationResult":
        names = tuple(p["name"] for p in d["parameters"])
        est = np.array([p["estimate"] for p in d["parameters"]], float)
        rc = d.get("robust_cov")
        if rc is None:
            se = np.array([np.nan if p["robust_se"] is None else p["robust_se"] for p in d["parameters"]])
            rc = np.diag(se ** 2) if np.isfinite(se).all() else None
        hc = d.get("hessian_cov")
        conv = d.get("convergence", {})
        spec = parse_model_spec(d["spec_text"]) if d.get("spec_text") else None
        return cls(
            family=d["family"], names=names, estimates=est,
            robust_cov=None if rc is None else np.array(rc, float),
            hessian_cov=None if hc is None else np.array(hc, float),
            loglik=d["LL"], null_loglik=d["LL0"], null_model=d.get("null_model", ""),
            null_logliks=d.get("null_logliks", {}), n_observations=d["n_observations"],
            n_individuals=d["n_individuals"], bic_n=d.get("bic_n", "observations"),
            cluster=d.get("cluster", "individual"), converged=conv.get("converged", True),
            iterations=conv.get("iterations", 0), gradient_norm=conv.get("gradient_norm", 0.0),
            best_restart=conv.get("best_restart", 0),
            restart_logliks=conv.get("restart_logliks", []), message=conv.get("message", ""),
            hessian_ok=conv.get("hessian_negative_definite", True),
            sd_variables=d.get("sd_variables", {}), draws=d.get("draws"),
            extra=d.get("extra", {}), spec=spec,
        )

    def format_table(self) -> str:
        """Plain-text parameter table followed by the performance indicators."""
        se, t = self.robust_se, self.robust_t
        width = max([len(n) for n in self.names] + [30])
        lines = [f"{'Parameter':<{width}}  {'Estimate':>10}  {'Rob. SE':>9}  {'Rob. t':>8}"]
        lines.append("-" * len(lines[0]))
        for j, name in enumerate(self.names):
            tj = t[j]
            ts = f"{tj:8.2f}" if math.isfinite(tj) else f"{'n/a':>8}"
            ss = f"{se[j]:9.3f}" if math.isfinite(se[j]) else f"{'n/a':>9}"
            lines.append(f"{name:<{width}}  {self.estimates[j]:10.3f}  {ss}  {ts} "
                         f"{significance_stars(tj)}")
        m = self.metrics
        lines.append("-" * len(lines[0]))
        lines.append("Performance Indicators:")
        lines.append(f"{'Number of parameters':<{width}}  {self.k:>10d}")
        lines.append(f"{'Log-likelihood':<{width}}  {self.loglik:10.3f}")
        lines.append(f"{'Akaike Information Criterion':<{width}}  {m.aic:10.3f}")
        lines.append(f"{'Bayesian Information Criterion':<{width}}  {m.bic:10.3f}  "
                     f"(n = {self.n_used_for_bic} {self.bic_n})")
        lines.append(f"{'Rho-square-bar':<{width}}  {m.rho_bar:10.3f}  (null: {self.null_model})")
        for key, val in self.extra.items():
            lines.append(f"{key:<{width}}  {val:10.3f}")
        lines.append("")
        lines.append("* not significant at 95% confidence level; ** not significant at 90%.")
        if not self.converged:
            lines.append(f"WARNING: not converged: {self.message}")
        if self.draws and self.draws.get("defaulted"):
            lines.append("Note: simulation draws use built-in defaults (count/method not declared).")
        return "\n".join(lines)


def heterogeneity_workflow(mixl_result: EstimationResult, t_threshold: float) -> list[str]:
    """Variables whose random-coefficient sd has |robust t| >= threshold, largest |t| first.

    These are the suggested membership covariates for a follow-up latent class fit.
    """
    if not mixl_result.sd_variables:
        raise EstimationError("result has no standard-deviation parameters")
    t = mixl_result.robust_t
    picked = []
    for name, variable in mixl_result.sd_variables.items():
        tj = abs(t[mixl_result.names.index(name)])
        if math.isfinite(tj) and tj >= t_threshold:
            picked.append((tj, variable))
    picked.sort(key=lambda p: -p[0])
    return [v for _, v in picked]


# -- null models ----------------------------------------------------------------

def null_logliks(bound: BoundModel) -> dict:
    n = bound.n_observations
    f = bound.family
    if n == 0 or bound.y is None:
        return {"equal-shares": 0.0, "market-shares": 0.0}
    if f in BINARY_FAMILIES:
        s = float(np.mean(bound.y))
        ms = 0.0 if s in (0.0, 1.0) else n * (s * math.log(s) + (1 - s) * math.log(1 - s))
        return {"equal-shares": n * math.log(0.5), "market-shares": ms}
    if f == "OL":
        K = bound.spec.thresholds.n_categories
        counts = np.bincount(bound.y.astype(int), minlength=K + 1)[1:]
        nz = counts[counts > 0]
        return {"equal-shares": n * math.log(1.0 / K),
                "market-shares": float((nz * np.log(nz / n)).sum())}
    y = bound.y
    fit = ols_fit(np.ones((n, 1)), y)
    return {"intercept-only": fit.loglik}


# -- starting values ------------------------------------------------------------

def _sub_spec_bl(spec: ModelSpec, z: int) -> ModelSpec:
    c = spec.classes[z]
    return ModelSpec("BL", (replace(c, random_coefs=()),), draws=spec.draws, text="")


def _fit_bl_class(spec: ModelSpec, z: int, dataset: Dataset, config: OptimizerConfig) -> np.ndarray:
    sub = _sub_spec_bl(spec, z)
    bound = bind_spec(sub, dataset)
    if bound.n_params == 0:
        return np.zeros(0)
    engine = PanelLikelihood(bound)
    out = maximize(engine.loglik, np.zeros(bound.n_params),
                   replace(config, max_iter=min(config.max_iter, 200)),
                   grad=lambda t: engine.evaluate(t)[1].sum(axis=0))
    return out.theta


def starting_values(bound: BoundModel, config: OptimizerConfig, restart: int = 0) -> np.ndarray:
    """Simple-to-complex starts: class utilities from a plain logit fit, sd at 0.1, membership at 0.

    Restarts beyond the first (and every latent class start) perturb class
    utilities by uniform noise on [-0.5, 0.5].
    """
    spec = bound.spec
    theta = np.zeros(bound.n_params)
    if spec.family == "BL" or bound.n_observations == 0:
        return theta
    if spec.family == "OL":
        K = spec.thresholds.n_categories
        counts = np.bincount(bound.y.astype(int), minlength=K + 1)[1:] + 0.5
        cum = np.cumsum(counts)[:-1] / counts.sum()
        tau = np.log(cum / (1 - cum))
        steps = np.maximum(np.diff(tau), 0.1)
        theta[bound.threshold_idx] = np.r_[tau[0], steps]
        return theta
    names = spec.param_names
    index = {n: i for i, n in enumerate(names)}
    cache = {}
    for z, c in enumerate(spec.classes):
        key = c.utility.terms
        if key not in cache:
            cache[key] = _fit_bl_class(spec, z, bound.dataset, config)
        theta[bound.classes[z].beta_idx] = cache[key]
        for r in c.random_coefs:
            theta[index[spec.qualify(z, r.sd)]] = 0.1
    if spec.n_classes > 1 or restart > 0:
        rng = np.random.default_rng([config.seed, restart])
        for z, bc in enumerate(bound.classes):
            theta[bc.beta_idx] += rng.uniform(-0.5, 0.5, len(bc.beta_idx))
    return theta


def latent_class_pool(bound: BoundModel, config: OptimizerConfig, n_starts: int,
                      n_fits: int = 10) -> list[np.ndarray]:
    """Starts for a latent class mixed logit from cheap fits of the same model without random terms.

    ``n_fits`` perturbed fixed-coefficient latent class fits explore the
    class structure. The best of them (sds set to 0.1) is the first start;
    the others are that start with class utilities jittered by uniform noise
    on [-0.5, 0.5].
    """
    spec = bound.spec
    classes = tuple(replace(c, random_coefs=()) for c in spec.classes)
    sub = ModelSpec("LCM", classes, membership=spec.membership, text="")
    sub_bound = bind_spec(sub, bound.dataset)
    engine = PanelLikelihood(sub_bound)
    f = engine.loglik
    g = lambda t: engine.evaluate(t)[1].sum(axis=0)
    best = None
    for m in range(n_fits):
        x0 = starting_values(sub_bound, replace(config, seed=config.seed + 7919 * (m + 1)), restart=m)
        out = maximize(f, x0, replace(config, max_iter=min(config.max_iter, 300)), grad=g, polish=False)
        if math.isfinite(out.value) and (best is None or out.value > best.value):
            best = out
    if best is None:
        return []
    index = {n: i for i, n in enumerate(spec.param_names)}
    theta = np.zeros(bound.n_params)
    for name, v in zip(sub.param_names, best.theta):
        theta[index[name]] = v
    for z, c in enumerate(spec.classes):
        for r in c.random_coefs:
            theta[index[spec.qualify(z, r.sd)]] = 0.1
    pool = [theta]
    rng = np.random.default_rng([config.seed, 104729])
    for _ in range(1, n_starts):
        x = theta.copy()
        for bc in bound.classes:
            x[bc.beta_idx] += rng.uniform(-0.5, 0.5, len(bc.beta_idx))
        pool.append(x)
    return pool


# -- class label canonicalization -------------------------------------------------

def _classes_exchangeable(spec: ModelSpec) -> bool:
    if spec.n_classes < 2:
        return False
    first = spec.classes[0]
    ref_terms = tuple(t.variable for t in first.utility.terms)
    ref_rand = tuple(r.variable for r in first.random_coefs)
    mem = [tuple(t.variable for t in terms) for terms in spec.membership]
    return (all(tuple(t.variable for t in c.utility.terms) == ref_terms
                and tuple(r.variable for r in c.random_coefs) == ref_rand
                and tuple(r.mean is None for r in c.random_coefs)
                == tuple(r.mean is None for r in first.random_coefs)
                for c in spec.classes)
            and all(m == mem[0] for m in mem))


def relabel_matrix(spec: ModelSpec, order) -> np.ndarray:
    """Linear map T with theta' = T theta for the class permutation ``order``.

    New class z takes old class ``order[z]``; membership scores are re-referenced
    to the new last class.
    """
    k = spec.n_params
    T = np.zeros((k, k))
    index = {n: i for i, n in enumerate(spec.param_names)}
    Z = spec.n_classes
    for z_new, z_old in enumerate(order):
        cn, co = spec.classes[z_new], spec.classes[z_old]
        for tn, to in zip(cn.utility.terms, co.utility.terms):
            T[index[spec.qualify(z_new, tn.coef)], index[spec.qualify(z_old, to.coef)]] = 1
        for rn, ro in zip(cn.random_coefs, co.random_coefs):
            T[index[spec.qualify(z_new, rn.sd)], index[spec.qualify(z_old, ro.sd)]] = 1
    ref_old = order[-1]
    for z_new in range(Z - 1):
        z_old = order[z_new]
        for j, t in enumerate(spec.membership[z_new]):
            row = index[spec.qualify(z_new, t.coef)]
            if z_old != Z - 1:
                T[row, index[spec.qualify(z_old, spec.membership[z_old][j].coef)]] += 1
            if ref_old != Z - 1:
                T[row, index[spec.qualify(ref_old, spec.membership[ref_old][j].coef)]] -= 1
    for name in (spec.param_names[i] for i in range(k) if not T[i].any()):
        T[index[name], index[name]] = 1
    return T


def canonical_order(spec: ModelSpec, theta: np.ndarray, key: str | None = None):
    """Class order with the largest membership coefficient on ``key`` (the reference counts as 0) first.

    ``key`` defaults to the first non-constant membership covariate. Returns
    ``None`` when classes are not exchangeable or no covariate is available.
    """
    if not _classes_exchangeable(spec):
        return None
    variables = [t.variable for t in spec.membership[0]]
    if key is None:
        key = next((v for v in variables if v != CONSTANT), None)
    if key is None or key not in variables:
        return None
    j = variables.index(key)
    index = {n: i for i, n in enumerate(spec.param_names)}
    coefs = [theta[index[spec.qualify(z, spec.membership[z][j].coef)]] for z in range(spec.n_classes - 1)]
    coefs.append(0.0)
    return list(np.argsort(-np.asarray(coefs), kind="stable"))


# -- driver ---------------------------------------------------------------------

def make_draws(bound: BoundModel, draw_count: int | None = None, seed: int | None = None) -> DrawSet | None:
    if not bound.n_random:
        return None
    cfg = bound.spec.draws
    if draw_count is not None:
        cfg = replace(cfg, count=int(draw_count))
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    return standard_normal_draws(bound.n_individuals, cfg, bound.n_random)


def _per_observation(bound: BoundModel) -> BoundModel:
    ds = bound.dataset.replace(individual_id=np.arange(bound.n_observations))
    return bind_spec(bound.spec, ds)


def _fit_linear(bound: BoundModel, bic_n: str, cluster: str) -> EstimationResult:
    c = bound.classes[0]
    names = bound.param_names
    if bound.y is None:
        raise EstimationError("dataset has no auto_proportion outcome")
    groups = bound.obs_individual if cluster == "individual" else None
    fit = ols_fit(c.X, bound.y, names=names, groups=groups)
    nulls = null_logliks(bound)
    return EstimationResult(
        family="LR", names=names, estimates=fit.coef, robust_cov=fit.robust_cov, hessian_cov=None,
        loglik=fit.loglik, null_loglik=nulls["intercept-only"], null_model="intercept-only",
        null_logliks=nulls, n_observations=bound.n_observations, n_individuals=bound.n_individuals,
        bic_n=bic_n, cluster=cluster if cluster == "individual" else "observation (HC0)",
        message="closed-form least squares", extra={"R2": fit.r2, "adj_R2": fit.adj_r2,
                                                    "residual_variance": fit.sigma2},
        spec=bound.spec)


def maximize_loglik(bound: BoundModel, init=None, config: OptimizerConfig = OptimizerConfig(),
                    draws: DrawSet | None = None, *, n_threads: int = 1,
                    bic_n: str = "observations", null: str = "equal-shares",
                    cluster: str = "individual", canonicalize: bool = True) -> EstimationResult:
    """Estimate ``bound`` by (simulated) maximum likelihood.

    Multi-restart families keep the restart with the highest log-likelihood.
    Covariances come from a finite-difference Hessian of the analytic scores;
    the robust one is the sandwich H^-1 B H^-1 with B the outer product of
    scores summed by individual (``cluster="individual"``) or per observation.
    """
    if bic_n not in ("observations", "individuals"):
        raise ValueError("bic_n must be 'observations' or 'individuals'")
    if cluster not in ("individual", "observation"):
        raise ValueError("cluster must be 'individual' or 'observation'")
    spec = bound.spec
    if spec.family == "LR":
        return _fit_linear(bound, bic_n, cluster)
    if bound.n_random and draws is None:
        draws = make_draws(bound)
    engine = PanelLikelihood(bound, draws, n_threads=n_threads)

    # the optimizer asks for value and gradient at the same points; compute both once
    memo = {}

    def both(t):
        key = np.asarray(t, float).tobytes()
        if key not in memo:
            memo.clear()
            try:
                ll, sc = engine.evaluate(t)
                memo[key] = (float(ll.sum()), sc.sum(axis=0))
            except LikelihoodError:
                memo[key] = (-np.inf, np.full(bound.n_params, np.nan))
        return memo[key]

    def f(t):
        return both(t)[0]

    def g(t):
        return both(t)[1]

    lower = None
    if spec.family == "OL":
        lower = np.full(bound.n_params, -np.inf)
        lower[bound.threshold_idx[1:]] = 1e-8

    n_restarts = config.restarts_for(spec.family)
    pool = []
    if spec.n_classes > 1 and bound.n_random and bound.n_observations:
        pool = latent_class_pool(bound, config, n_restarts)
        log.info("latent class pool ready")
    outcomes = []
    for r in range(n_restarts):
        if init is not None and r == 0:
            x0 = np.asarray(init, float)
        elif r < len(pool):
            x0 = pool[r]
        else:
            x0 = starting_values(bound, config, restart=r)
        if len(x0) != bound.n_params:
            raise EstimationError(f"init has {len(x0)} values, model has {bound.n_params} parameters")
        # only the winning restart is polished below
        out = maximize(f, x0, config, grad=g, lower=lower, polish=n_restarts == 1)
        log.info("restart %d: LL=%.6f converged=%s", r, out.value, out.converged)
        outcomes.append(out)
    best_r = int(np.argmax([o.value for o in outcomes]))
    best = outcomes[best_r]
    if not best.converged and n_restarts > 1:
        budget = max(1, config.max_iter - best.iterations)
        polished = maximize(f, best.theta, replace(config, max_iter=budget), grad=g, lower=lower)
        polished.iterations += best.iterations
        best = polished
    theta = best.theta

    hessian_ok = True
    hess_cov = robust = None
    if bound.n_observations:
        H = numeric_hessian(g, theta)
        eig = np.linalg.eigvalsh(H)
        hessian_ok = bool(np.all(eig < 0))
        if hessian_ok:
            hess_cov = np.linalg.inv(-H)
            hess_cov = (hess_cov + hess_cov.T) / 2
            if cluster == "observation":
                if spec.family not in ("BL", "OL"):
                    raise EstimationError("observation clustering needs observation-separable likelihoods")
                scores = PanelLikelihood(_per_observation(bound), None).evaluate(theta)[1]
            else:
                scores = engine.evaluate(theta)[1]
            B = scores.T @ scores
            robust = hess_cov @ B @ hess_cov
            robust = (robust + robust.T) / 2

    if canonicalize:
        order = canonical_order(spec, theta)
        if order is not None and order != list(range(spec.n_classes)):
            T = relabel_matrix(spec, order)
            theta = T @ theta
            hess_cov = None if hess_cov is None else T @ hess_cov @ T.T
            robust = None if robust is None else T @ robust @ T.T

    nulls = null_logliks(bound)
    draw_info = None
    if draws is not None:
        draw_info = {**draws.config.to_dict(), "defaulted": not spec.draws_declared}
    return EstimationResult(
        family=spec.family, names=bound.param_names, estimates=theta, robust_cov=robust,
        hessian_cov=hess_cov, loglik=best.value, null_loglik=nulls[null], null_model=null,
        null_logliks=nulls, n_observations=bound.n_observations, n_individuals=bound.n_individuals,
        bic_n=bic_n, cluster=cluster, converged=best.converged, iterations=best.iterations,
        gradient_norm=best.grad_norm, best_restart=best_r,
        restart_logliks=[o.value for o in outcomes],
        message=best.message if hessian_ok else best.message + "; Hessian not negative definite",
        hessian_ok=hessian_ok, sd_variables=spec.sd_variables, draws=draw_info, spec=spec)


def estimate(spec: ModelSpec | str, dataset: Dataset, **kwargs) -> EstimationResult:
    if isinstance(spec, str):
        spec = parse_model_spec(spec)
    draws = kwargs.pop("draws", None)
    draw_count = kwargs.pop("draw_count", None)
    draw_seed = kwargs.pop("draw_seed", None)
    bound = bind_spec(spec, dataset)
    if draws is None and bound.n_random:
        draws = make_draws(bound, draw_count, draw_seed)
    return maximize_loglik(bound, draws=draws, **kwargs)
