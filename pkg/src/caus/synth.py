"""Synthetic two-regime wind history with a known joint mixture.

Each regime is a joint Gaussian over (forecasts, actual outputs): forecasts
are drawn around a regime center and actuals equal the forecasts plus a
regime-specific bias and correlated noise. The generating mixture is known
in closed form, which makes it usable as a ground truth in tests.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .gmm import GaussianComponent, JointGmm


@dataclass(frozen=True)
class Regime:
    weight: float
    forecast_mean: tuple[float, ...]
    forecast_std: float
    bias: tuple[float, ...]
    noise_cov: tuple[tuple[float, ...], ...]


DEFAULT_REGIMES = (
    Regime(0.55, (70.0, 45.0), 10.0, (14.0, -14.0), ((36.0, -18.0), (-18.0, 36.0))),
    Regime(0.45, (45.0, 70.0), 10.0, (-14.0, 14.0), ((36.0, -18.0), (-18.0, 36.0))),
)


def regime_component(reg: Regime) -> GaussianComponent:
    """Joint Gaussian of ``[forecast, actual]`` implied by one regime."""
    f_mean = np.asarray(reg.forecast_mean)
    n = f_mean.size
    sf = reg.forecast_std ** 2 * np.eye(n)
    noise = np.asarray(reg.noise_cov)
    mean = np.concatenate([f_mean, f_mean + np.asarray(reg.bias)])
    cov = np.block([[sf, sf], [sf, sf + noise]])
    return GaussianComponent(reg.weight, mean, cov)


def true_model(regimes=DEFAULT_REGIMES) -> JointGmm:
    n = len(regimes[0].forecast_mean)
    return JointGmm(tuple(regime_component(r) for r in regimes), n, n)


def generate_history(n_rows: int, seed: int, regimes=DEFAULT_REGIMES, periods: int = 24):
    """Rows of ``(period, forecasts..., actuals...)``; period cycles 1..periods."""
    rng = np.random.default_rng(seed)
    model = true_model(regimes)
    labels = rng.choice(model.k, size=n_rows, p=model.weights)
    dim = model.n + model.m
    out = np.empty((n_rows, dim))
    for k, comp in enumerate(model.components):
        idx = np.flatnonzero(labels == k)
        chol = np.linalg.cholesky(comp.covariance)
        out[idx] = comp.mean + rng.standard_normal((idx.size, dim)) @ chol.T
    period = np.arange(n_rows) % periods + 1
    return period, out[:, :model.n], out[:, model.n:]


def history_csv(period, covariates, uncertainty) -> str:
    n, m = covariates.shape[1], uncertainty.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["period"] + [f"covariate_{i + 1}" for i in range(n)]
                    + [f"uncertainty_{i + 1}" for i in range(m)])
    for p, x, xi in zip(period, covariates, uncertainty):
        writer.writerow([int(p)] + [f"{v:.6f}" for v in x] + [f"{v:.6f}" for v in xi])
    return buf.getvalue()
