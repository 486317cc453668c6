"""Joint Gaussian mixtures over (covariate, uncertainty) pairs and their conditionals.

A :class:`JointGmm` is fitted by EM on stacked ``[x, xi]`` rows. Conditioning
on an observed covariate ``x`` yields a :class:`ConditionalGmm` over the
uncertainty block whose weights are the posterior responsibilities of ``x``
under each component's covariate marginal, whose means are the usual
Gaussian regression ``mu_xi + S_xix S_xx^{-1} (x - mu_x)``, and whose
covariances are the Schur complements ``S_xixi - S_xix S_xx^{-1} S_xxi``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .errors import (
    DegenerateData,
    DimensionMismatch,
    NonFiniteInput,
    SingularCovariateBlock,
    TooFewSamples,
)

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Sample:
    covariate: np.ndarray
    uncertainty: np.ndarray
    period_index: int = 1

    def __post_init__(self):
        cov = np.atleast_1d(np.asarray(self.covariate, dtype=float))
        unc = np.atleast_1d(np.asarray(self.uncertainty, dtype=float))
        if cov.ndim != 1 or unc.ndim != 1 or cov.size < 1 or unc.size < 1:
            raise DimensionMismatch("covariate and uncertainty must be non-empty vectors")
        if not (np.all(np.isfinite(cov)) and np.all(np.isfinite(unc))):
            raise NonFiniteInput("sample contains non-finite entries")
        object.__setattr__(self, "covariate", cov)
        object.__setattr__(self, "uncertainty", unc)


@dataclass
class EmConfig:
    max_iter: int = 500
    tol: float = 1e-7
    jitter: float = 1e-8  # relative to the average covariance diagonal
    seed: int = 0


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def regularize(cov: np.ndarray, jitter: float) -> np.ndarray:
    """Symmetrize and lift the spectrum so that the minimum eigenvalue is at
    least ``jitter * mean(diag)``; untouched when already above the floor."""
    cov = 0.5 * (cov + cov.T)
    scale = float(np.mean(np.diag(cov)))
    floor = jitter * scale if scale > 0 else jitter
    lam_min = float(np.linalg.eigvalsh(cov)[0])
    if lam_min < floor:
        cov = cov + (floor - lam_min) * np.eye(cov.shape[0])
    return cov


def _chol(cov: np.ndarray) -> np.ndarray:
    return linalg.cholesky(cov, lower=True)


def _mvn_logpdf(points: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    diff = np.atleast_2d(points) - mean
    z = linalg.solve_triangular(chol, diff.T, lower=True)
    maha = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (mean.size * LOG_2PI + logdet + maha)


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "covariance", _frozen(self.covariance))
        if not self.weight > 0:
            raise ValueError("component weight must be positive")
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-12, rtol=0):
            raise ValueError("component covariance must be symmetric")


@dataclass(frozen=True)
class JointGmm:
    components: tuple[GaussianComponent, ...]
    n: int
    m: int
    log_likelihood: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("a mixture needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, expected 1")
        for c in self.components:
            if c.mean.shape != (self.n + self.m,):
                raise DimensionMismatch("component mean length differs from n + m")

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @cached_property
    def _cholesky(self) -> tuple[np.ndarray, ...]:
        return tuple(_chol(c.covariance) for c in self.components)

    @cached_property
    def _covariate_cholesky(self) -> tuple[np.ndarray, ...]:
        out = []
        for c in self.components:
            sxx = c.covariance[: self.n, : self.n]
            try:
                out.append(_chol(sxx))
            except linalg.LinAlgError:
                out.append(_chol(regularize(sxx, 1e-8)))
        return tuple(out)

    def marginal_uncertainty(self) -> "ConditionalGmm":
        """Mixture over the uncertainty block alone (covariates ignored)."""
        comps = [
            ConditionalComponent(c.weight, c.mean[self.n:], c.covariance[self.n:, self.n:])
            for c in self.components
        ]
        return ConditionalGmm(tuple(comps), conditioning_covariate=None)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "components": [
                {
                    "weight": float(c.weight),
                    "mean": c.mean.tolist(),
                    "covariance": c.covariance.ravel().tolist(),
                }
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "JointGmm":
        n, m = int(data["n"]), int(data["m"])
        d = n + m
        comps = [
            GaussianComponent(
                float(c["weight"]),
                np.asarray(c["mean"], dtype=float),
                np.asarray(c["covariance"], dtype=float).reshape(d, d),
            )
            for c in data["components"]
        ]
        return cls(tuple(comps), n, m)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "JointGmm":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ConditionalComponent:
    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.atleast_1d(self.mean)))
        object.__setattr__(self, "covariance", _frozen(np.atleast_2d(self.covariance)))

    @cached_property
    def cholesky(self) -> np.ndarray:
        return _chol(self.covariance)

    def mahalanobis(self, points) -> np.ndarray:
        diff = np.atleast_2d(points) - self.mean
        z = linalg.solve_triangular(self.cholesky, diff.T, lower=True)
        return np.sum(z * z, axis=0)


@dataclass(frozen=True)
class ConditionalGmm:
    components: tuple[ConditionalComponent, ...]
    conditioning_covariate: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"conditional weights sum to {total}, expected 1")

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def m(self) -> int:
        return self.components[0].mean.size

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def mean(self) -> np.ndarray:
        return sum(c.weight * c.mean for c in self.components)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "covariate": None if self.conditioning_covariate is None
            else np.asarray(self.conditioning_covariate).tolist(),
            "components": [
                {"weight": float(c.weight), "mean": c.mean.tolist(),
                 "covariance": c.covariance.ravel().tolist()}
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConditionalGmm":
        m = int(data["m"])
        comps = [
            ConditionalComponent(float(c["weight"]), np.asarray(c["mean"], dtype=float),
                                 np.asarray(c["covariance"], dtype=float).reshape(m, m))
            for c in data["components"]
        ]
        cov = data.get("covariate")
        return cls(tuple(comps), None if cov is None else np.asarray(cov, dtype=float))


# -- fitting -----------------------------------------------------------------

def _as_matrix(samples) -> tuple[np.ndarray, int, int]:
    if isinstance(samples, tuple) and len(samples) == 2:
        x = np.atleast_2d(np.asarray(samples[0], dtype=float))
        xi = np.atleast_2d(np.asarray(samples[1], dtype=float))
        if x.shape[0] != xi.shape[0]:
            x, xi = x.T, xi.T
        data = np.hstack([x, xi])
        return data, x.shape[1], xi.shape[1]
    samples = list(samples)
    if not samples:
        raise TooFewSamples("no samples given")
    n = samples[0].covariate.size
    m = samples[0].uncertainty.size
    for s in samples:
        if s.covariate.size != n or s.uncertainty.size != m:
            raise DimensionMismatch("samples disagree on covariate/uncertainty dimension")
    data = np.array([np.concatenate([s.covariate, s.uncertainty]) for s in samples])
    return data, n, m


def _kmeanspp(white: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = white.shape[0]
    centers = [int(rng.integers(n))]
    d2 = np.sum((white - white[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(idx)
        d2 = np.minimum(d2, np.sum((white - white[idx]) ** 2, axis=1))
    return np.asarray(centers)


def _m_step(data, resp, jitter):
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    means = (resp.T @ data) / nk[:, None]
    covs = []
    for j in range(resp.shape[1]):
        diff = data - means[j]
        cov = (resp[:, j, None] * diff).T @ diff / nk[j]
        covs.append(regularize(cov, jitter) if jitter > 0 else 0.5 * (cov + cov.T))
    return weights, means, covs


def _e_step(data, weights, means, covs):
    logp = np.column_stack([
        np.log(w) + _mvn_logpdf(data, mu, _chol(cov))
        for w, mu, cov in zip(weights, means, covs)
    ])
    norm = logsumexp(logp, axis=1)
    return np.exp(logp - norm[:, None]), float(norm.sum())


def fit_gmm(samples, k: int, config: EmConfig | None = None) -> JointGmm:
    """Fit a ``k``-component joint mixture by EM.

    ``samples`` is either a sequence of :class:`Sample` or a pair of arrays
    ``(covariates, uncertainties)`` with one row per observation.
    """
    config = config or EmConfig()
    if k < 1:
        raise ValueError("k must be at least 1")
    data, n, m = _as_matrix(samples)
    if not np.all(np.isfinite(data)):
        raise NonFiniteInput("samples contain NaN or infinite entries")
    d = n + m
    if data.shape[0] < k * (d + 1):
        raise TooFewSamples(f"need at least {k * (d + 1)} samples for k={k}, got {data.shape[0]}")
    spread = data.std(axis=0)
    if config.jitter <= 0 and np.any(spread == 0):
        raise DegenerateData("a coordinate is constant across samples and jitter is disabled")

    rng = np.random.default_rng(config.seed)
    scale = np.where(spread > 0, spread, 1.0)
    white = (data - data.mean(axis=0)) / scale
    centers = _kmeanspp(white, k, rng)
    dist = np.stack([np.sum((white - white[c]) ** 2, axis=1) for c in centers], axis=1)
    labels = np.argmin(dist, axis=1)
    resp = np.zeros((data.shape[0], k))
    resp[np.arange(data.shape[0]), labels] = 1.0
    # keep every component alive at initialization
    resp += 1e-10
    resp /= resp.sum(axis=1, keepdims=True)

    weights, means, covs = _m_step(data, resp, config.jitter)
    history: list[float] = []
    try:
        for it in range(config.max_iter):
            resp, ll = _e_step(data, weights, means, covs)
            history.append(ll)
            if len(history) > 1:
                gain = history[-1] - history[-2]
                if gain < -1e-8 * max(1.0, abs(history[-2])):
                    log.warning("EM log-likelihood decreased by %.3e at iteration %d", -gain, it)
                if abs(gain) <= config.tol * max(1.0, abs(history[-2])):
                    break
            weights, means, covs = _m_step(data, resp, config.jitter)
    except linalg.LinAlgError as exc:
        raise DegenerateData("covariance lost positive definiteness during EM") from exc

    comps = tuple(GaussianComponent(float(w), mu, cov) for w, mu, cov in zip(weights, means, covs))
    # renormalize against round-off so the weight invariant holds to 1e-9
    total = sum(c.weight for c in comps)
    comps = tuple(GaussianComponent(c.weight / total, c.mean, c.covariance) for c in comps)
    return JointGmm(comps, n, m, tuple(history))


def bic_sweep(samples, ks: Sequence[int], config: EmConfig | None = None) -> dict[int, float]:
    """Bayesian information criterion for each candidate component count."""
    data, n, m = _as_matrix(samples)
    d = n + m
    out = {}
    for k in ks:
        model = fit_gmm(samples, k, config)
        ll = float(np.sum([log_density(model, row) for row in data]))
        n_params = k * (d + d * (d + 1) / 2) + (k - 1)
        out[k] = -2.0 * ll + n_params * math.log(data.shape[0])
    return out


# -- densities ----------------------------------------------------------------

def component_log_densities(model: JointGmm, points, covariate_only: bool = False) -> np.ndarray:
    """Per-component weighted log densities, shape (N, K)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dim = model.n if covariate_only else model.n + model.m
    if pts.shape[1] != dim:
        raise DimensionMismatch(f"point has length {pts.shape[1]}, expected {dim}")
    cols = []
    for j, c in enumerate(model.components):
        if covariate_only:
            lp = _mvn_logpdf(pts, c.mean[: model.n], model._covariate_cholesky[j])
        else:
            lp = _mvn_logpdf(pts, c.mean, model._cholesky[j])
        cols.append(math.log(c.weight) + lp)
    return np.column_stack(cols)


def log_density(model: JointGmm, point, covariate_only: bool = False) -> float:
    """Log of the mixture density at ``point`` (or of the covariate marginal)."""
    point = np.asarray(point, dtype=float)
    if point.ndim != 1:
        raise DimensionMismatch("log_density takes a single point")
    return float(logsumexp(component_log_densities(model, point, covariate_only)[0]))


# -- conditioning ---------------------------------------------------------------

def condition(model: JointGmm, x, jitter: float = 1e-8, max_cond: float = 1e14) -> ConditionalGmm:
    """Condition the joint mixture on an observed covariate ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.n,):
        raise DimensionMismatch(f"covariate has length {x.size}, expected {model.n}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("covariate contains non-finite entries")
    n = model.n
    logw = component_log_densities(model, x, covariate_only=True)[0]
    if not np.any(np.isfinite(logw)):
        warnings.warn("covariate likelihood underflowed for every component; using prior weights",
                      RuntimeWarning, stacklevel=2)
        weights = model.weights
    else:
        weights = np.exp(logw - logsumexp(logw))
    weights = weights / weights.sum()

    comps = []
    for j, c in enumerate(model.components):
        sxx = c.covariance[:n, :n]
        sxix = c.covariance[n:, :n]
        sxixi = c.covariance[n:, n:]
        if np.linalg.cond(sxx) > max_cond:
            lifted = regularize(sxx, jitter)
            if np.linalg.cond(lifted) > max_cond:
                raise SingularCovariateBlock(f"covariate block of component {j} is singular")
            sxx = lifted
        factor = linalg.cho_factor(sxx, lower=True)
        gain = linalg.cho_solve(factor, sxix.T).T  # S_xix S_xx^{-1}
        mean = c.mean[n:] + gain @ (x - c.mean[:n])
        cov = sxixi - gain @ sxix.T
        cov = 0.5 * (cov + cov.T)
        try:
            _chol(cov)
        except linalg.LinAlgError:
            cov = regularize(cov, max(jitter, 1e-12))
        comps.append(ConditionalComponent(float(weights[j]), mean, cov))
    return ConditionalGmm(tuple(comps), conditioning_covariate=x)


def sample_conditional(model: ConditionalGmm, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` i.i.d. uncertainty vectors, shape (count, m)."""
    return sample_conditional_labelled(model, count, seed)[0]


def sample_conditional_labelled(model: ConditionalGmm, count: int, seed: int):
    """Like :func:`sample_conditional` but also returns the drawn component labels."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    labels = rng.choice(model.k, size=count, p=model.weights)
    z = rng.standard_normal((count, model.m))
    out = np.empty((count, model.m))
    for j, c in enumerate(model.components):
        sel = labels == j
        out[sel] = c.mean + z[sel] @ c.cholesky.T
    return out, labels
