"""Estimator records, batch-means errors and the delta method."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

FLAG_OK = ""
FLAG_BOUND = "one-sided-bound"


@dataclass
class EstimatorResult:
    observable: str
    params: dict
    samples: int
    estimate: float
    stderr: float
    derived_name: str = ""
    derived_value: float = float("nan")
    derived_stderr: float = float("nan")
    flag: str = FLAG_OK
    wall_seconds: float = 0.0
    segments: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("an estimate needs at least one sample")
        if not self.stderr >= 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")
        if not math.isnan(self.derived_value) and not self.derived_name:
            raise ValueError("a derived value needs the name of its transformation")

    @property
    def is_bound(self):
        return self.flag == FLAG_BOUND

    def to_dict(self):
        return asdict(self)


def batch_means(series, n_batches=20):
    """Mean and batch-means standard error of a (possibly correlated) series.

    ``series`` may be 2-d (samples x observables); errors are per column.
    """
    x = np.asarray(series, dtype=np.float64)
    n = len(x)
    if n == 0:
        raise ValueError("empty series")
    mean = x.mean(axis=0)
    b = min(n_batches, n)
    if b < 2:
        return mean, np.zeros_like(mean)
    size = n // b
    means = x[: b * size].reshape((b, size) + x.shape[1:]).mean(axis=1)
    se = means.std(axis=0, ddof=1) / math.sqrt(b)
    return mean, se


def pooled(segments, n_batches=20):
    """Combine per-segment series: batches are formed inside each segment so
    that chain correlation never straddles a boundary."""
    segments = [np.asarray(s, dtype=np.float64) for s in segments if len(s)]
    if not segments:
        raise ValueError("no samples")
    total = sum(len(s) for s in segments)
    per = max(2, math.ceil(n_batches / len(segments)))
    batch = []
    for s in segments:
        b = min(per, len(s))
        size = len(s) // b
        batch.append(s[: b * size].reshape((b, size) + s.shape[1:]).mean(axis=1))
    means = np.concatenate(batch)
    mean = sum(s.sum(axis=0) for s in segments) / total
    if len(means) < 2:
        return mean, np.zeros_like(mean)
    return mean, means.std(axis=0, ddof=1) / math.sqrt(len(means))


def surface_rate(prob, se, area):
    """tau = -log(prob)/area with delta-method error se/(prob*area)."""
    if prob <= 0:
        raise ValueError("rate undefined at probability 0")
    return -math.log(prob) / area, se / (prob * area)


def rule_of_three(n):
    """One-sided 95% upper bound on a probability with zero hits in n trials."""
    return min(1.0, 3.0 / n)


def rate_result(name, params, prob, se, n, area, derived_name, **kw):
    """EstimatorResult for a rare-event probability and its surface rate.

    Zero observed events give a bound flag; the derived value is then the
    lower bound -log(3/n)/area rather than an infinite rate.
    """
    if prob > 0:
        tau, tau_se = surface_rate(prob, se, area)
        return EstimatorResult(name, params, n, prob, se, derived_name, tau, tau_se, **kw)
    bound = -math.log(rule_of_three(n)) / area
    return EstimatorResult(name, params, n, prob, se, derived_name + "_lower", bound, 0.0,
                           flag=FLAG_BOUND, **kw)
