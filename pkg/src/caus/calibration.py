"""Union Mahalanobis scores and the order-statistic radius.

The score of a point is its smallest squared Mahalanobis distance to any
component of a conditional mixture. Drawing ``N`` scores from the mixture
and keeping the ``ceil((1 - eps)(N + 1))``-th smallest gives a radius that a
fresh draw from the same mixture falls under with probability at least
``1 - eps`` (exchangeability of the ``N + 1`` scores).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionMismatch, RankUnattainable
from .gmm import ConditionalGmm, sample_conditional


@dataclass(frozen=True)
class ScoreSet:
    scores: np.ndarray
    period_index: int = 1

    def histogram_csv(self, bins: int = 50) -> str:
        counts, edges = np.histogram(self.scores, bins=bins)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["score", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([repr(float(0.5 * (lo + hi))), int(c)])
        return buf.getvalue()


@dataclass(frozen=True)
class CalibratedRadius:
    gamma: float
    epsilon: float
    kappa: int
    n_samples: int
    period: int = 1
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CalibratedRadius":
        return cls(float(data["gamma"]), float(data["epsilon"]), int(data["kappa"]),
                   int(data["n_samples"]), int(data.get("period", 1)), data.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


INFINITE_RADIUS = CalibratedRadius(math.inf, 0.0, 1, 1)


def order_rank(epsilon: float, n_samples: int) -> int:
    """``ceil((1 - epsilon)(n_samples + 1))`` in exact rational arithmetic."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie strictly between 0 and 1")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    return math.ceil((1 - Fraction(epsilon)) * (n_samples + 1))


def union_score(model: ConditionalGmm, points) -> np.ndarray | float:
    """Smallest squared Mahalanobis distance to any component.

    Accepts one point (returns a float) or an (N, m) array (returns (N,)).
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim <= 1
    pts = pts.reshape(1, -1) if single else pts
    if pts.shape[1] != model.m:
        raise DimensionMismatch(f"points have dimension {pts.shape[1]}, model has {model.m}")
    scores = np.min(np.stack([c.mahalanobis(pts) for c in model.components]), axis=0)
    return float(scores[0]) if single else scores


def score_samples(model: ConditionalGmm, n_samples: int, seed: int, period: int = 1) -> ScoreSet:
    xi = sample_conditional(model, n_samples, seed)
    return ScoreSet(union_score(model, xi), period)


def radius_from_scores(scores, epsilon: float, period: int = 1, seed=None) -> CalibratedRadius:
    scores = np.asarray(scores, dtype=float)
    n = scores.size
    kappa = order_rank(epsilon, n)
    if kappa > n:
        raise RankUnattainable(
            f"rank {kappa} exceeds {n} samples at epsilon={epsilon}; raise the sample count"
        )
    ordered = np.sort(scores, kind="stable")
    return CalibratedRadius(float(ordered[kappa - 1]), float(epsilon), kappa, n, period, seed)


def calibrate(model: ConditionalGmm, n_samples: int, epsilon: float, seed: int,
              period: int = 1) -> CalibratedRadius:
    """Radius whose union of ellipsoids covers a fresh draw w.p. >= 1 - epsilon."""
    kappa = order_rank(epsilon, n_samples)
    if kappa > n_samples:
        raise RankUnattainable(
            f"rank {kappa} exceeds {n_samples} samples at epsilon={epsilon}; raise the sample count"
        )
    scores = score_samples(model, n_samples, seed, period).scores
    return radius_from_scores(scores, epsilon, period, seed)


def empirical_coverage(model: ConditionalGmm, radius: CalibratedRadius | float, n_test: int,
                       seed: int) -> float:
    gamma = radius.gamma if isinstance(radius, CalibratedRadius) else float(radius)
    if math.isinf(gamma) and gamma > 0:
        return 1.0
    xi = sample_conditional(model, n_test, seed)
    return float(np.mean(union_score(model, xi) <= gamma))


def holdout_coverage(model: ConditionalGmm, radius: CalibratedRadius, observations) -> float:
    """Coverage against real observations; a diagnostic, no bound is implied."""
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    return float(np.mean(union_score(model, obs) <= radius.gamma))
