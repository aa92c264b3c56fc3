"""Smoothed min-sum message passing, marginal sampling, and annealing.

Replacing the min in the chain dynamic program with a temperature-scaled
soft-min ``smin_T(v) = -T log sum exp(-v/T)`` turns the decoder into a
forward-backward pass whose per-boundary outputs are, at ``T = 1``, exactly
the marginals of the Gibbs distribution over configurations induced by the
chain energy.  As ``T`` drops the marginals concentrate on the min-sum path,
which is what drives the adaptive sampling loop: draw training
configurations from the marginals while annealing the temperature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import FileFormatError
from .space import Config
from .viterbi import ChainEnergy


def _smin(values: np.ndarray, temperature: float, axis: int) -> np.ndarray:
    return -temperature * logsumexp(-values / temperature, axis=axis)


@dataclass(frozen=True)
class MarginalSet:
    """Per-boundary channel marginals of the smoothed chain distribution.

    ``log_marginals[k]`` is a normalized log-probability vector over the
    boundary's choices; ``log_pairs[j]`` the joint log-marginal over layer
    ``j``'s adjacent pair, kept for exact joint sampling.
    """

    choice_sets: tuple[tuple[int, ...], ...]
    log_marginals: tuple[np.ndarray, ...]
    log_pairs: tuple[np.ndarray, ...]
    temperature: float

    def probabilities(self, boundary: int) -> np.ndarray:
        return np.exp(self.log_marginals[boundary])

    def interior_probabilities(self) -> list[np.ndarray]:
        return [self.probabilities(k) for k in range(1, len(self.choice_sets) - 1)]

    def entropy(self, boundary: int) -> float:
        lp = self.log_marginals[boundary]
        p = np.exp(lp)
        return float(-(p * np.where(p > 0, lp, 0.0)).sum())

    def argmax_config(self) -> Config:
        return tuple(
            self.choice_sets[k][int(np.argmax(lp))]
            for k, lp in enumerate(self.log_marginals)
        )


def forward_backward(energy: ChainEnergy, temperature: float) -> MarginalSet:
    """Temperature-smoothed forward-backward pass over the chain.

    Messages are ``m(b) = smin_a(m(a) + pair(a, b)) + unary(b)`` with the
    soft-min at temperature ``T``; combining forward and backward messages
    and normalizing in log space yields the per-boundary marginals.  All
    reductions go through log-sum-exp with max subtraction, so very small
    temperatures are safe.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    sets = energy.choice_sets
    n_layers = len(energy.pairwise)
    phi = energy.node_potentials()
    t = float(temperature)

    alpha = [np.zeros(len(s)) for s in sets]
    alpha[0] = phi[0].copy()
    for j in range(n_layers):
        cost = alpha[j][:, None] + energy.gamma * energy.pairwise[j]
        alpha[j + 1] = phi[j + 1] + _smin(cost, t, axis=0)

    beta = [np.zeros(len(s)) for s in sets]
    for j in range(n_layers - 1, -1, -1):
        cost = energy.gamma * energy.pairwise[j] + (phi[j + 1] + beta[j + 1])[None, :]
        beta[j] = _smin(cost, t, axis=1)

    log_marginals = []
    for k in range(len(sets)):
        lp = -(alpha[k] + beta[k]) / t
        log_marginals.append(lp - logsumexp(lp))

    log_pairs = []
    for j in range(n_layers):
        lp = -(
            alpha[j][:, None]
            + energy.gamma * energy.pairwise[j]
            + (phi[j + 1] + beta[j + 1])[None, :]
        ) / t
        log_pairs.append(lp - logsumexp(lp))

    return MarginalSet(
        choice_sets=sets,
        log_marginals=tuple(log_marginals),
        log_pairs=tuple(log_pairs),
        temperature=t,
    )


def _draw(log_probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(np.exp(log_probs))
    cdf[-1] = 1.0
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def sample(marginals: MarginalSet, rng: np.random.Generator,
           mode: str = "independent") -> Config:
    """Draw one configuration from the marginals.

    ``independent`` draws each interior boundary from its own marginal (the
    default); ``joint`` draws an exact sample of the full chain distribution
    by conditional sampling along the pair marginals.  Boundary counts are
    forced either way.  Determinism is the caller's: pass a seeded generator.
    """
    sets = marginals.choice_sets
    n_b = len(sets)
    indices = [0] * n_b
    if mode == "independent":
        for k in range(1, n_b - 1):
            indices[k] = _draw(marginals.log_marginals[k], rng)
    elif mode == "joint":
        for j in range(n_b - 2):
            row = marginals.log_pairs[j][indices[j]]
            cond = row - logsumexp(row)
            indices[j + 1] = _draw(cond, rng)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return tuple(sets[k][i] for k, i in enumerate(indices))


def pair_probabilities(marginals: MarginalSet, layer: int) -> np.ndarray:
    return np.exp(marginals.log_pairs[layer])


def marginals_csv_rows(marginals: MarginalSet) -> list[tuple[int, int, float]]:
    """(boundary, channel, probability) rows for the interior boundaries."""
    rows = []
    for k in range(1, len(marginals.choice_sets) - 1):
        probs = marginals.probabilities(k)
        for channel, p in zip(marginals.choice_sets[k], probs):
            rows.append((k, channel, float(p)))
    return rows


# ---------------------------------------------------------------------------
# Annealing


@dataclass(frozen=True)
class AnnealSchedule:
    """Piecewise-exponential temperature decay through fixed knots."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.knots:
            raise ValueError("schedule needs at least one knot")
        epochs = [e for e, _ in self.knots]
        if any(a >= b for a, b in zip(epochs, epochs[1:])):
            raise ValueError("knot epochs must be strictly increasing")
        if any(t <= 0 for _, t in self.knots):
            raise ValueError("temperatures must be positive")

    def temperature_at(self, epoch: float) -> float:
        return temperature_at(self, epoch)


def temperature_at(schedule: AnnealSchedule, epoch: float) -> float:
    """Temperature at a (fractional) epoch.

    Exponential interpolation between knots, clamped at the final knot's
    value; epochs before the first knot are an error because the warmup
    phase samples uniformly and never consults the schedule.
    """
    knots = schedule.knots
    if epoch < knots[0][0]:
        raise ValueError(
            f"epoch {epoch} precedes the schedule start ({knots[0][0]}); "
            "warmup sampling does not use a temperature"
        )
    if epoch >= knots[-1][0]:
        return knots[-1][1]
    for (e0, t0), (e1, t1) in zip(knots, knots[1:]):
        if epoch == e0:
            return t0
        if e0 < epoch < e1:
            frac = (epoch - e0) / (e1 - e0)
            return t0 * (t1 / t0) ** frac
    return knots[-1][1]


#: Knot layout after warmup: drop to 1e-2 within one epoch, then decay slowly.
_DEFAULT_OFFSETS = ((0.0, 1.0), (1.0, 1e-2), (5.0, 1e-3), (15.0, 5e-4))


def default_schedule(start_epoch: float = 5.0) -> AnnealSchedule:
    """The stock schedule, anchored so its first knot sits at warmup end."""
    return AnnealSchedule(
        knots=tuple((start_epoch + off, temp) for off, temp in _DEFAULT_OFFSETS)
    )


def schedule_to_dict(schedule: AnnealSchedule) -> list[dict]:
    return [{"epoch": e, "temperature": t} for e, t in schedule.knots]


def schedule_from_dict(doc) -> AnnealSchedule:
    try:
        knots = tuple((float(k["epoch"]), float(k["temperature"])) for k in doc)
        return AnnealSchedule(knots=knots)
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"bad schedule document: {exc}") from exc


def load_schedule(path: str | Path) -> AnnealSchedule:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from exc
    return schedule_from_dict(doc)
