"""Probability and log-likelihood kernels for the binary, mixture, ordinal and linear families.

The small functions (``panel_loglik_binary``, ``lcm_loglik``, ...) are direct
transcriptions of each model. :class:`PanelLikelihood` is the vectorized engine
used during estimation; it also returns per-individual analytic scores.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._kernels import panel_logp, panel_scores
from .draws import DrawSet
from .modelspec import BINARY_FAMILIES, BoundModel


class LikelihoodError(ValueError):
    pass


# -- scalar building blocks -----------------------------------------------

def binary_logit_prob(v):
    """P(giveAway) = 1 / (1 + exp(-v)), evaluated without overflow."""
    v = np.asarray(v, float)
    e = np.exp(-np.abs(v))
    p = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(p) if p.ndim == 0 else p


def log_binary_logit_prob(v):
    """log P(giveAway) = min(v, 0) - log1p(exp(-|v|))."""
    v = np.asarray(v, float)
    return np.minimum(v, 0.0) - np.log1p(np.exp(-np.abs(v)))


def _lin(X: np.ndarray, b: np.ndarray) -> np.ndarray:
    # row-wise dot product; avoids BLAS so results do not depend on thread count
    return (X * b).sum(axis=1) if X.shape[1] else np.zeros(X.shape[0])


def _check_params(params, bound: BoundModel) -> np.ndarray:
    theta = np.asarray(params, float)
    if theta.shape != (bound.n_params,):
        raise LikelihoodError(f"expected {bound.n_params} parameters, got shape {theta.shape}")
    return theta


def _signed_y(bound: BoundModel) -> np.ndarray:
    if bound.y is None:
        raise LikelihoodError("dataset has no choice_y outcome")
    return 2.0 * bound.y - 1.0


def _panel_sum(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    if len(starts) == 0:
        return np.zeros((0,) + values.shape[1:])
    return np.add.reduceat(values, starts, axis=0)


# -- binary logit -------------------------------------------------------------

def panel_loglik_binary(params, bound: BoundModel) -> float:
    """Sum over observations of ln P(y) under a single-class fixed-coefficient logit."""
    theta = _check_params(params, bound)
    if bound.spec.n_classes != 1 or bound.n_random:
        raise LikelihoodError("panel_loglik_binary needs one class without random coefficients")
    if bound.n_observations == 0:
        return 0.0
    c = bound.classes[0]
    v = _lin(c.X, theta[c.beta_idx])
    if not np.all(np.isfinite(v)):
        raise LikelihoodError("non-finite utility (check covariates)")
    return float(log_binary_logit_prob(_signed_y(bound) * v).sum())


def mixl_simulated_prob(X, y, beta, sd, xi, random_vars=None) -> float:
    """Simulated panel probability of one individual's choice sequence.

    X: (T, m) fixed-utility design, y: (T,) choices, beta: (m,), sd: (d,),
    xi: (R, d) draws, random_vars: (T, d) variables carrying the random terms
    (defaults to the first d columns of X).
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float).reshape(-1)
    sd = np.asarray(sd, float).reshape(-1)
    xi = np.asarray(xi, float)
    if xi.size == 0 and len(sd):
        raise LikelihoodError("need at least one draw")
    xi = xi.reshape(-1, len(sd)) if len(sd) else np.zeros((1, 0))
    Rv = X[:, :len(sd)] if random_vars is None else np.atleast_2d(np.asarray(random_vars, float))
    v = X @ np.asarray(beta, float)                      # (T,)
    v = v[None, :] + (xi * sd) @ Rv.T                     # (R, T)
    logp = log_binary_logit_prob((2 * y - 1) * v).sum(axis=1)
    m = logp.max()
    return float(np.exp(m) * np.mean(np.exp(logp - m)))


# -- latent classes -----------------------------------------------------------

def membership_probs(W, alpha) -> np.ndarray:
    """Softmax class probabilities; the last class is the reference (score 0).

    W: (q,) or (n, q) membership covariates; alpha: (Z-1, q).
    """
    W = np.asarray(W, float)
    alpha = np.atleast_2d(np.asarray(alpha, float))
    scores = W @ alpha.T if W.ndim > 1 else alpha @ W
    if not np.all(np.isfinite(scores)):
        raise LikelihoodError("non-finite membership score")
    zeros = np.zeros(scores.shape[:-1] + (1,))
    scores = np.concatenate([scores, zeros], axis=-1)
    return np.exp(scores - logsumexp(scores, axis=-1, keepdims=True))


def _log_membership(theta_ext: np.ndarray, bound: BoundModel) -> np.ndarray:
    n = bound.n_individuals
    Z = bound.spec.n_classes
    scores = np.zeros((n, Z))
    for z in range(Z - 1):
        scores[:, z] = _lin(bound.W[z], theta_ext[bound.alpha_idx[z]])
    if not np.all(np.isfinite(scores)):
        raise LikelihoodError("non-finite membership score")
    return scores - logsumexp(scores, axis=1, keepdims=True)


def lcm_loglik(params, bound: BoundModel) -> float:
    """Sum_i ln Sum_z P_z(W_i) Prod_t P(y_it | beta_z), with log-sum-exp over classes."""
    theta = _check_params(params, bound)
    if bound.n_random:
        raise LikelihoodError("lcm_loglik takes no random coefficients; use lcml_loglik")
    if bound.n_observations == 0:
        return 0.0
    s = _signed_y(bound)
    log_pi = _log_membership(np.r_[theta, 0.0], bound)
    panel = np.column_stack([
        _panel_sum(log_binary_logit_prob(s * _lin(c.X, theta[c.beta_idx])), bound.starts)
        for c in bound.classes
    ])
    return float(logsumexp(log_pi + panel, axis=1).sum())


def lcml_loglik(params, bound: BoundModel, draws: DrawSet) -> float:
    """Simulated log-likelihood of the latent class mixed logit (any binary family)."""
    return float(PanelLikelihood(bound, draws).loglik_i(_check_params(params, bound)).sum())


mixl_loglik = lcml_loglik


# -- ordinal logit ------------------------------------------------------------

def thresholds_from(tau1: float, deltas) -> np.ndarray:
    deltas = np.asarray(deltas, float).reshape(-1)
    if np.any(~(deltas > 0)):
        raise LikelihoodError("threshold increments must be strictly positive")
    return tau1 + np.r_[0.0, np.cumsum(deltas)]


def ordinal_probs(x, beta, tau1: float, deltas) -> np.ndarray:
    """Category probabilities F(tau_k - b'x) - F(tau_{k-1} - b'x), F logistic."""
    tau = thresholds_from(tau1, deltas)
    eta = np.asarray(x, float) @ np.asarray(beta, float)
    cdf = binary_logit_prob(tau - np.asarray(eta)[..., None])
    cdf = np.asarray(cdf)
    lower = np.concatenate([np.zeros(cdf.shape[:-1] + (1,)), cdf], axis=-1)
    upper = np.concatenate([cdf, np.ones(cdf.shape[:-1] + (1,))], axis=-1)
    return upper - lower


def _ordinal_terms(theta: np.ndarray, bound: BoundModel):
    c = bound.classes[0]
    idx = bound.threshold_idx
    tau = thresholds_from(theta[idx[0]], theta[idx[1:]])
    eta = _lin(c.X, theta[c.beta_idx])
    k = bound.y.astype(np.int64)
    K = len(tau) + 1
    up = np.where(k < K, tau[np.minimum(k, K - 1) - 1] - eta, np.inf)
    lo = np.where(k > 1, tau[np.maximum(k - 2, 0)] - eta, -np.inf)
    return c, k, tau, up, lo


def _log_interval(up: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """log(F(up) - F(lo)) for the logistic CDF, stable in both tails."""
    # F(u) - F(l) = F(u) * (1 - F(l)) * (1 - exp(l - u))
    out = np.empty_like(up)
    fin_u, fin_l = np.isfinite(up), np.isfinite(lo)
    only_u = fin_u & ~fin_l
    only_l = fin_l & ~fin_u
    both = fin_u & fin_l
    out[only_u] = log_binary_logit_prob(up[only_u])
    out[only_l] = log_binary_logit_prob(-lo[only_l])
    u, l = up[both], lo[both]
    out[both] = (log_binary_logit_prob(u) + log_binary_logit_prob(-l)
                 + np.log(-np.expm1(l - u)))
    out[~fin_u & ~fin_l] = 0.0
    return out


def ordinal_loglik(params, bound: BoundModel) -> float:
    theta = _check_params(params, bound)
    if bound.n_observations == 0:
        return 0.0
    if bound.y is None:
        raise LikelihoodError("dataset has no ordinal_category outcome")
    _, _, _, up, lo = _ordinal_terms(theta, bound)
    return float(_log_interval(up, lo).sum())


def _ordinal_scores(theta: np.ndarray, bound: BoundModel):
    c, k, tau, up, lo = _ordinal_terms(theta, bound)
    logp = _log_interval(up, lo)
    p = np.exp(logp)
    dens = lambda a: np.where(np.isfinite(a), binary_logit_prob(a) * binary_logit_prob(-a), 0.0)
    fu, fl = dens(up), dens(lo)
    g = np.zeros((bound.n_observations, bound.n_params))
    g[:, c.beta_idx] = (-(fu - fl) / p)[:, None] * c.X
    # d/d tau_j: +f(up)/p if j is the upper bound, -f(lo)/p if lower
    n_tau = len(tau)
    dtau = np.zeros((bound.n_observations, n_tau))
    rows = np.arange(bound.n_observations)
    K = n_tau + 1
    has_up, has_lo = k < K, k > 1
    dtau[rows[has_up], (k - 1)[has_up]] += fu[has_up] / p[has_up]
    dtau[rows[has_lo], (k - 2)[has_lo]] -= fl[has_lo] / p[has_lo]
    # tau_j = tau1 + sum_{m<=j} delta_m: d/d tau1 = sum_j, d/d delta_m = sum_{j>=m}
    chain = np.cumsum(dtau[:, ::-1], axis=1)[:, ::-1]
    g[:, bound.threshold_idx] = chain
    return logp, g


# -- linear regression --------------------------------------------------------

class SingularDesignError(LikelihoodError):
    pass


@dataclass(frozen=True)
class OLSResult:
    coef: np.ndarray
    sigma2: float              # residual variance, SSR / (n - k)
    r2: float
    adj_r2: float
    robust_cov: np.ndarray     # heteroskedasticity-consistent (HC0), or cluster-robust if groups given
    residuals: np.ndarray
    loglik: float              # Gaussian log-likelihood at sigma^2 = SSR / n

    @property
    def robust_se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.robust_cov))


def ols_fit(X, y, names=None, groups=None) -> OLSResult:
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if n < k:
        raise SingularDesignError(f"{n} rows cannot identify {k} coefficients")
    rank = np.linalg.matrix_rank(X)
    if rank < k:
        # report columns that are linear combinations of the preceding ones
        bad, kept = [], []
        for j in range(k):
            if np.linalg.matrix_rank(X[:, kept + [j]]) <= len(kept):
                bad.append(names[j])
            else:
                kept.append(j)
        raise SingularDesignError(f"design matrix is rank deficient; offending columns: {bad}")
    q, r = np.linalg.qr(X)
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - X @ coef
    ssr = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k) if n > k else float("nan")
    sigma2 = ssr / (n - k) if n > k else float("nan")
    bread = np.linalg.inv(X.T @ X)
    scores = X * resid[:, None]
    if groups is not None:
        groups = np.asarray(groups)
        _, inv = np.unique(groups, return_inverse=True)
        summed = np.zeros((inv.max() + 1, k))
        np.add.at(summed, inv, scores)
        scores = summed
    meat = scores.T @ scores
    cov = bread @ meat @ bread
    s2_ml = ssr / n
    ll = -0.5 * n * (np.log(2 * np.pi * s2_ml) + 1.0) if s2_ml > 0 else float("inf")
    return OLSResult(coef, sigma2, r2, adj, (cov + cov.T) / 2, resid, float(ll))


# -- vectorized engine with scores ---------------------------------------------

@dataclass(frozen=True)
class _Block:
    obs: slice
    starts: np.ndarray        # local observation offsets of each individual
    ind: slice
    obs_ind: np.ndarray       # local individual index of each observation


class PanelLikelihood:
    """Per-individual log-likelihood and analytic scores for a bound model.

    Binary families are all handled as a (possibly single-class) mixture of
    panel logits with (possibly absent) normal random coefficients. Work is
    split into fixed blocks of individuals; block results are concatenated in
    block order, so the output does not depend on ``n_threads``.
    """

    block_size = 256

    def __init__(self, bound: BoundModel, draws: DrawSet | None = None, n_threads: int = 1):
        self.bound = bound
        self.n_threads = max(1, int(n_threads))
        family = bound.family
        if family not in BINARY_FAMILIES and family != "OL":
            raise LikelihoodError(f"no likelihood engine for family {family}")
        if bound.n_random:
            if draws is None:
                raise LikelihoodError("random coefficients need a DrawSet")
            n, R, d = draws.values.shape
            if n != bound.n_individuals or d < bound.n_random:
                raise LikelihoodError(f"draws shape {draws.values.shape} does not fit "
                                      f"{bound.n_individuals} individuals x {bound.n_random} dims")
            if R == 0:
                raise LikelihoodError("need at least one draw")
        self.draws = draws
        self.blocks = self._make_blocks()
        if family in BINARY_FAMILIES and bound.n_observations:
            self._s = _signed_y(bound)
        # random-term regressors premultiplied by draws, per class: (d, n_obs, R)
        self._A = []
        for c in bound.classes:
            if len(c.sd_idx):
                xi = draws.values[bound.obs_individual][:, :, c.draw_dims]     # (n_obs, R, d)
                self._A.append(np.ascontiguousarray(np.moveaxis(xi * c.R[:, None, :], 2, 0)))
            else:
                self._A.append(np.zeros((0, bound.n_observations, 1)))

    def _make_blocks(self):
        b = self.bound
        starts = b.starts
        blocks = []
        for i0 in range(0, b.n_individuals, self.block_size):
            i1 = min(i0 + self.block_size, b.n_individuals)
            o0 = starts[i0]
            o1 = starts[i1] if i1 < b.n_individuals else b.n_observations
            blocks.append(_Block(slice(o0, o1), starts[i0:i1] - o0, slice(i0, i1),
                                 b.obs_individual[o0:o1] - i0))
        return blocks

    def _run(self, fn):
        if self.n_threads == 1 or len(self.blocks) == 1:
            parts = [fn(blk) for blk in self.blocks]
        else:
            with ThreadPoolExecutor(self.n_threads) as pool:
                parts = list(pool.map(fn, self.blocks))
        return parts

    def evaluate(self, theta, scores: bool = True):
        """Return (ll_i, scores_i) with shapes (N,) and (N, k); scores is None if not requested."""
        theta = _check_params(theta, self.bound)
        b = self.bound
        if b.n_observations == 0:
            return np.zeros(0), (np.zeros((0, b.n_params)) if scores else None)
        if b.family == "OL":
            if b.y is None:
                raise LikelihoodError("dataset has no ordinal_category outcome")
            logp, g = _ordinal_scores(theta, b)
            return _panel_sum(logp, b.starts), (_panel_sum(g, b.starts) if scores else None)
        theta_ext = np.r_[theta, 0.0]
        log_pi = _log_membership(theta_ext, b)
        parts = self._run(lambda blk: self._block(theta_ext, log_pi, blk, scores))
        ll = np.concatenate([p[0] for p in parts])
        g = np.concatenate([p[1] for p in parts]) if scores else None
        return ll, g

    def loglik_i(self, theta) -> np.ndarray:
        return self.evaluate(theta, scores=False)[0]

    def loglik(self, theta) -> float:
        return float(self.loglik_i(theta).sum())

    def _block(self, theta_ext, log_pi_all, blk: _Block, scores: bool):
        b = self.bound
        k = b.n_params
        s = self._s[blk.obs]
        log_pi = log_pi_all[blk.ind]
        n_ind = len(blk.starts)
        n_obs = blk.obs.stop - blk.obs.start
        Z = b.spec.n_classes
        per_class = []
        log_sz = np.empty((n_ind, Z))
        for z, c in enumerate(b.classes):
            vfix = _lin(c.X[blk.obs], theta_ext[c.beta_idx])
            A = self._A[z][:, blk.obs, :]
            sd = theta_ext[c.sd_idx]
            lp, q, ok = panel_logp(vfix, s, A, sd, blk.starts, n_obs, scores)  # lp: (n_ind, R_z)
            if not ok:
                raise LikelihoodError("non-finite utility (check covariates and parameters)")
            m = lp.max(axis=1, keepdims=True)
            log_sz[:, z] = m[:, 0] + np.log(np.mean(np.exp(lp - m), axis=1))
            per_class.append((q, A, lp))
        joint = log_pi + log_sz
        ll = logsumexp(joint, axis=1)
        if not scores:
            return ll, None

        g = np.zeros((n_ind, k + 1))
        post = np.exp(joint - ll[:, None])                               # class posteriors h_iz
        for z, c in enumerate(b.classes):
            q, A, lp = per_class[z]
            R = lp.shape[1]
            # weight of draw r within class z for individual i, scaled by class posterior
            w = np.exp(lp - log_sz[:, z:z + 1]) / R * post[:, z:z + 1]  # (n_ind, R)
            gb, gs = panel_scores(q, A, blk.starts, n_obs, w, c.X[blk.obs])
            np.add.at(g.T, c.beta_idx, gb.T)
            np.add.at(g.T, c.sd_idx, gs.T)
        if Z > 1:
            pi = np.exp(log_pi)
            for z in range(Z - 1):
                coef = (post[:, z] - pi[:, z])[:, None] * b.W[z][blk.ind]
                np.add.at(g.T, b.alpha_idx[z], coef.T)
        return ll, g[:, :k]


def loglik(params, bound: BoundModel, draws: DrawSet | None = None) -> float:
    """Family dispatcher for the log-likelihood at ``params``."""
    f = bound.family
    if f == "OL":
        return ordinal_loglik(params, bound)
    if f == "LR":
        raise LikelihoodError("LR is fit in closed form; use ols_fit")
    if bound.n_random:
        return lcml_loglik(params, bound, draws)
    if bound.spec.n_classes > 1:
        return lcm_loglik(params, bound)
    return panel_loglik_binary(params, bound)
