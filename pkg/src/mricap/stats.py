"""Estimates with standard errors, built from replication moments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

METRICS = ("ue", "lol_days", "lol_hours", "mri_hours")


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float = 0.0

    def __float__(self):
        return float(self.value)

    def scaled(self, factor: float) -> "Estimate":
        return Estimate(self.value * factor, self.se * abs(factor))


@dataclass(frozen=True)
class AdequacyMetrics:
    eue: float
    lole: float
    lolh: float
    expected_mri_hours: float
    se_eue: float
    se_lole: float
    se_lolh: float
    se_mri_hours: float
    replications: int | None
    seed: int | None

    def to_dict(self) -> dict:
        return {
            "eue": self.eue,
            "lole": self.lole,
            "lolh": self.lolh,
            "expected_mri_hours": self.expected_mri_hours,
            "se_eue": self.se_eue,
            "se_lole": self.se_lole,
            "se_lolh": self.se_lolh,
            "se_mri_hours": self.se_mri_hours,
            "replications": self.replications,
            "seed": self.seed,
        }


class Evaluation:
    """Means and covariance of per-replication outcomes for a batch of cases.

    Outcomes are indexed ``[metric, case]`` with metrics in ``METRICS``
    order. ``cov`` is the covariance of a single replication's flattened
    outcome vector; the covariance of the means is ``cov / n``. Exact
    (enumerated) evaluations carry no covariance and every SE is zero.
    """

    def __init__(self, mean: np.ndarray, cov: np.ndarray | None, n: int | None,
                 seed: int | None = None):
        self.mean = mean
        self.cov = cov
        self.n = n
        self.seed = seed

    @property
    def exact(self) -> bool:
        return self.cov is None

    @property
    def n_cases(self) -> int:
        return self.mean.shape[1]

    @classmethod
    def from_moments(cls, sums: np.ndarray, gram: np.ndarray, n: int, seed=None) -> "Evaluation":
        mean = sums / n
        flat = mean.ravel()
        if n > 1:
            cov = (gram - n * np.outer(flat, flat)) / (n - 1)
        else:
            cov = np.zeros_like(gram)
        return cls(mean, cov, n, seed)

    def weights(self) -> np.ndarray:
        return np.zeros_like(self.mean)

    def estimate(self, w: np.ndarray) -> Estimate:
        value = float(np.sum(w * self.mean))
        if self.exact:
            return Estimate(value, 0.0)
        flat = w.ravel()
        var = float(flat @ self.cov @ flat) / self.n
        return Estimate(value, math.sqrt(max(var, 0.0)))

    def ratio(self, num: np.ndarray, den: np.ndarray) -> Estimate:
        """Delta-method estimate of ``(num . mean) / (den . mean)``."""
        a = float(np.sum(num * self.mean))
        b = float(np.sum(den * self.mean))
        if b == 0:
            raise ZeroDivisionError("ratio denominator is zero")
        r = a / b
        if self.exact:
            return Estimate(r, 0.0)
        g = (num - r * den).ravel() / b
        var = float(g @ self.cov @ g) / self.n
        return Estimate(r, math.sqrt(max(var, 0.0)))

    def value(self, metric: str, case: int) -> float:
        return float(self.mean[METRICS.index(metric), case])

    def difference(self, metric: str, a: int, b: int, scale: float = 1.0) -> Estimate:
        """``scale * (metric[a] - metric[b])`` with its paired SE."""
        w = self.weights()
        m = METRICS.index(metric)
        w[m, a] += scale
        w[m, b] -= scale
        return self.estimate(w)

    def metrics(self, case: int = 0) -> AdequacyMetrics:
        values, ses = [], []
        for metric in METRICS:
            w = self.weights()
            w[METRICS.index(metric), case] = 1.0
            est = self.estimate(w)
            values.append(est.value)
            ses.append(est.se)
        return AdequacyMetrics(*values, *ses, replications=self.n, seed=self.seed)


def isotonic_nonincreasing(values, weights=None) -> np.ndarray:
    """Least-squares projection onto nonincreasing sequences (pool adjacent violators)."""
    y = np.asarray(values, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    blocks: list[list[float]] = []  # [mean, weight, count]
    for yi, wi in zip(y, w):
        blocks.append([yi, wi, 1])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            m2, w2, c2 = blocks.pop()
            m1, w1, c1 = blocks.pop()
            wt = w1 + w2
            blocks.append([(m1 * w1 + m2 * w2) / wt, wt, c1 + c2])
    return np.concatenate([np.full(c, m) for m, _, c in blocks])
