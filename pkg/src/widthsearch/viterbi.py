"""Exact chain decoding and Lagrangian width search.

The search objective decomposes along the layer chain: per-choice error
estimates act as unary terms on interior boundaries, and the latency model
contributes pairwise terms on adjacent boundaries, weighted by a multiplier.
Minimizing such an energy exactly is a min-sum dynamic program over the
chain; a latency *constraint* is handled by binary search on the multiplier,
exploiting concavity of the dual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import TargetUnreachableError
from .latency import LatencyTable, predict
from .space import Config
from .stats import ErrorStats

DEFAULT_GAMMA_TOL = 1e-6
_MAX_BISECTIONS = 200


@dataclass(frozen=True)
class ChainEnergy:
    """Unary terms on interior boundaries plus weighted pairwise terms.

    The energy of a configuration with choice indices ``i_0..i_n`` is

        sum_k unaries[k-1][i_k]  +  gamma * sum_j pairwise[j][i_j, i_{j+1}]

    with ``k`` ranging over interior boundaries and ``j`` over layers.
    """

    choice_sets: tuple[tuple[int, ...], ...]
    unaries: tuple[np.ndarray, ...]
    pairwise: tuple[np.ndarray, ...]
    gamma: float = 1.0

    def __post_init__(self):
        n_b = len(self.choice_sets)
        if len(self.unaries) != max(n_b - 2, 0):
            raise ValueError(
                f"need {n_b - 2} unary vectors for {n_b} boundaries, "
                f"got {len(self.unaries)}"
            )
        if len(self.pairwise) != n_b - 1:
            raise ValueError(f"need {n_b - 1} pairwise tables, got {len(self.pairwise)}")
        for k, u in enumerate(self.unaries):
            if u.shape != (len(self.choice_sets[k + 1]),):
                raise ValueError(f"unary {k} has shape {u.shape}")
            if not np.all(np.isfinite(u)):
                raise ValueError(f"unary {k} has undefined (non-finite) entries")
        for j, p in enumerate(self.pairwise):
            want = (len(self.choice_sets[j]), len(self.choice_sets[j + 1]))
            if p.shape != want:
                raise ValueError(f"pairwise {j} has shape {p.shape}, want {want}")
            if not np.all(np.isfinite(p)):
                raise ValueError(f"pairwise {j} has non-finite entries")
        if not (self.gamma >= 0 and np.isfinite(self.gamma)):
            raise ValueError("gamma must be finite and nonnegative")

    def node_potentials(self) -> list[np.ndarray]:
        phi = [np.zeros(len(s)) for s in self.choice_sets]
        for k, u in enumerate(self.unaries):
            phi[k + 1] = u
        return phi

    def value(self, config: Sequence[int]) -> float:
        """Energy of one configuration."""
        idx = [self.choice_sets[k].index(c) for k, c in enumerate(config)]
        total = 0.0
        for k, u in enumerate(self.unaries):
            total += u[idx[k + 1]]
        for j, p in enumerate(self.pairwise):
            total += self.gamma * p[idx[j], idx[j + 1]]
        return float(total)

    def unary_sum(self, config: Sequence[int]) -> float:
        total = 0.0
        for k, u in enumerate(self.unaries):
            total += u[self.choice_sets[k + 1].index(config[k + 1])]
        return float(total)


def chain_energy(stats: ErrorStats | Sequence[np.ndarray], table: LatencyTable,
                 gamma: float) -> ChainEnergy:
    """Combine served error estimates with a latency table."""
    if isinstance(stats, ErrorStats):
        unaries = stats.unaries()
    else:
        unaries = tuple(np.asarray(u, dtype=np.float64) for u in stats)
    return ChainEnergy(
        choice_sets=table.choice_sets,
        unaries=unaries,
        pairwise=table.entries,
        gamma=float(gamma),
    )


def decode(energy: ChainEnergy) -> tuple[Config, float]:
    """Exact global minimizer of a chain energy.

    Runs a backward min-sum sweep to get suffix-optimal values, then walks
    forward picking, at each boundary, the smallest channel count that
    attains the optimum.  This yields the lexicographically smallest
    minimizer under ties, in O(sum_j |C_j| * |C_{j+1}|) time.
    """
    sets = energy.choice_sets
    n_layers = len(energy.pairwise)
    phi = energy.node_potentials()

    beta = [np.zeros(len(s)) for s in sets]
    for j in range(n_layers - 1, -1, -1):
        cost = energy.gamma * energy.pairwise[j] + (phi[j + 1] + beta[j + 1])[None, :]
        beta[j] = cost.min(axis=1)

    head = phi[0] + beta[0]
    a = int(np.argmin(head))
    value = float(head[a])
    indices = [a]
    for j in range(n_layers):
        vals = energy.gamma * energy.pairwise[j][a] + phi[j + 1] + beta[j + 1]
        a = int(np.argmin(vals))
        indices.append(a)
    config = tuple(sets[k][i] for k, i in enumerate(indices))
    return config, value


@dataclass(frozen=True)
class SearchResult:
    """Outcome of a latency-constrained width search."""

    config: Config
    gamma: float
    modeled_latency_ms: float
    unary_sum: float
    energy: float
    dual_trace: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "config": list(self.config[1:-1]),
            "config_full": list(self.config),
            "gamma": self.gamma,
            "modeled_latency_ms": self.modeled_latency_ms,
            "unary_sum": self.unary_sum,
            "energy": self.energy,
            "dual_trace": [[g, lat] for g, lat in self.dual_trace],
        }


def default_gamma_max(unaries: Sequence[np.ndarray], table: LatencyTable) -> float:
    """Bracket for the multiplier search.

    Scaled so the latency term dominates any unary spread by a factor 1e6;
    falls back to 1.0 when the spread or the table degenerates.
    """
    values = np.concatenate([np.asarray(u).ravel() for u in unaries]) if unaries else np.zeros(1)
    spread = float(values.max() - values.min()) if values.size else 0.0
    positive = [float(m[m > 0].min()) for m in table.entries if np.any(m > 0)]
    if spread <= 0 or not positive:
        return 1.0
    return max(1e6 * spread / min(positive), 1.0)


def min_latency(table: LatencyTable) -> tuple[Config, float]:
    """Configuration with the smallest modeled latency (pairwise-only decode)."""
    unaries = tuple(np.zeros(len(s)) for s in table.choice_sets[1:-1])
    energy = ChainEnergy(
        choice_sets=table.choice_sets, unaries=unaries, pairwise=table.entries, gamma=1.0
    )
    config, value = decode(energy)
    return config, value


def lagrangian_search(
    stats: ErrorStats | Sequence[np.ndarray],
    table: LatencyTable,
    target_ms: float,
    gamma_max: float | None = None,
    tol: float = DEFAULT_GAMMA_TOL,
) -> SearchResult:
    """Find the best configuration whose modeled latency meets the target.

    Binary search over the multiplier: decoding at the midpoint tells us on
    which side of the target the unconstrained minimizer lands, and the dual
    is concave, so the bracket halves each step.  Among all feasible decodes
    encountered, the one with the smallest unary sum is returned; if the
    unpenalized decode is already feasible it wins immediately with a zero
    multiplier.

    Raises :class:`TargetUnreachableError` when even the top of the bracket
    cannot push the decoded latency below the target; the error reports the
    minimum latency the model can reach at all.
    """
    if target_ms <= 0:
        raise ValueError("target_ms must be positive")
    if isinstance(stats, ErrorStats):
        unaries = stats.unaries()
    else:
        unaries = tuple(np.asarray(u, dtype=np.float64) for u in stats)
    if gamma_max is None:
        gamma_max = default_gamma_max(unaries, table)
    if gamma_max <= 0:
        raise ValueError("gamma_max must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")

    def decode_at(gamma: float):
        energy = chain_energy(unaries, table, gamma)
        config, value = decode(energy)
        lat = predict(table, config)
        usum = energy.unary_sum(config)
        return config, value, lat, usum

    trace: list[tuple[float, float]] = []
    best = None  # (unary_sum, latency, config, gamma)

    def consider(gamma, config, lat, usum):
        nonlocal best
        trace.append((gamma, lat))
        if lat <= target_ms:
            key = (usum, lat, config)
            if best is None or key < (best[0], best[1], best[2]):
                best = (usum, lat, config, gamma)

    config0, _, lat0, usum0 = decode_at(0.0)
    consider(0.0, config0, lat0, usum0)
    if lat0 <= target_ms:
        return SearchResult(
            config=config0,
            gamma=0.0,
            modeled_latency_ms=lat0,
            unary_sum=usum0,
            energy=usum0,
            dual_trace=tuple(trace),
        )

    config_hi, _, lat_hi, usum_hi = decode_at(gamma_max)
    consider(gamma_max, config_hi, lat_hi, usum_hi)
    if lat_hi > target_ms:
        _, floor = min_latency(table)
        raise TargetUnreachableError(target_ms, floor, gamma_max=gamma_max)

    lo, hi = 0.0, gamma_max
    for _ in range(_MAX_BISECTIONS):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        config_m, _, lat_m, usum_m = decode_at(mid)
        consider(mid, config_m, lat_m, usum_m)
        if lat_m > target_ms:
            lo = mid
        else:
            hi = mid

    usum, lat, config, gamma = best
    return SearchResult(
        config=config,
        gamma=gamma,
        modeled_latency_ms=lat,
        unary_sum=usum,
        energy=usum + gamma * lat,
        dual_trace=tuple(trace),
    )
