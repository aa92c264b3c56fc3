"""Greedy iterative trimming baseline.

Starting from the maximum-width configuration, repeatedly lower the single
layer whose one-step reduction least increases a proxy error estimate, until
the modeled latency meets the target.  The procedure is myopic: it compares
error increases only, never the latency each trim buys, and it commits one
step at a time, so it can walk past globally better configurations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import TargetUnreachableError
from .latency import LatencyTable, predict
from .space import Config, SearchSpace

#: Maps a channel configuration to a validation-error estimate (lower better).
ProxyEvaluator = Callable[[Config], float]


@dataclass(frozen=True)
class GreedyStep:
    config: Config
    proxy_error: float
    predicted_latency_ms: float


@dataclass(frozen=True)
class GreedyResult:
    config: Config
    steps: tuple[GreedyStep, ...]
    proxy_calls: int

    def to_dict(self) -> dict:
        return {
            "config": list(self.config[1:-1]),
            "config_full": list(self.config),
            "proxy_calls": self.proxy_calls,
            "trajectory": [
                {
                    "config": list(s.config[1:-1]),
                    "proxy_error": s.proxy_error,
                    "predicted_latency_ms": s.predicted_latency_ms,
                }
                for s in self.steps
            ],
        }


def greedy_trim(
    proxy: ProxyEvaluator,
    table: LatencyTable,
    target_ms: float,
    space: SearchSpace,
) -> GreedyResult:
    """Trim one layer at a time until the modeled latency meets the target.

    Each round evaluates, for every interior boundary not already at its
    minimum, the configuration with that boundary lowered to its next-smaller
    choice, and commits the candidate with the smallest proxy error (ties to
    the lowest boundary index).  Stops at the first feasible configuration.
    Proxy evaluations are memoized by configuration.
    """
    min_lat = predict(table, space.min_config)
    if min_lat > target_ms:
        raise TargetUnreachableError(target_ms, min_lat)

    current = space.max_config
    lat = predict(table, current)
    if lat <= target_ms:
        return GreedyResult(config=current, steps=(), proxy_calls=0)

    cache: dict[Config, float] = {}

    def evaluate(config: Config) -> float:
        if config not in cache:
            cache[config] = float(proxy(config))
        return cache[config]

    steps: list[GreedyStep] = []
    while lat > target_ms:
        best_k, best_cand, best_err = None, None, None
        for k in range(1, space.n_boundaries - 1):
            choices = space.choice_sets[k]
            pos = choices.index(current[k])
            if pos == 0:
                continue
            cand = current[:k] + (choices[pos - 1],) + current[k + 1:]
            err = evaluate(cand)
            if best_err is None or err < best_err:
                best_k, best_cand, best_err = k, cand, err
        if best_cand is None:
            # precheck guarantees the all-min configuration is feasible
            raise TargetUnreachableError(target_ms, lat)
        current = best_cand
        lat = predict(table, current)
        steps.append(GreedyStep(config=current, proxy_error=best_err,
                                predicted_latency_ms=lat))

    return GreedyResult(config=current, steps=tuple(steps), proxy_calls=len(cache))
