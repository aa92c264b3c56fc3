"""Adaptive width search: biased sampling with temperature annealing.

After a uniform warmup, each epoch re-searches the latency multiplier on the
current error snapshot, builds the smoothed chain marginals at the scheduled
temperature, and draws that epoch's training configurations from them.  As
the temperature anneals, sampling concentrates on the constraint-feasible,
low-error region, so the per-choice statistics are refined exactly where the
final decision will be made.  The run ends with a multiplier search on the
last snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .latency import LatencyTable
from .smoothing import AnnealSchedule, default_schedule, forward_backward, sample, temperature_at
from .space import Config, SearchSpace
from .stats import ErrorStats
from .sim import SyntheticLoss
from .viterbi import ChainEnergy, SearchResult, chain_energy, lagrangian_search


@dataclass(frozen=True)
class AowsRunConfig:
    """Settings for one adaptive run.

    ``total_epochs == warmup_epochs`` degenerates to a plain one-shot search
    on uniformly sampled statistics.  ``schedule=None`` anchors the stock
    annealing schedule at warmup end.  All randomness flows from ``seed``.
    """

    target_ms: float
    warmup_epochs: int
    total_epochs: int
    samples_per_epoch: int
    schedule: AnnealSchedule | None = None
    gamma_policy: str = "per_epoch"  # or "fixed"
    gamma_fixed: float | None = None
    gamma_max: float | None = None
    gamma_tol: float = 1e-6
    sample_mode: str = "independent"  # or "joint"
    marginal_update: str = "iteration"  # or "epoch"
    seed: int = 0

    def __post_init__(self):
        if self.target_ms <= 0:
            raise ValueError("target_ms must be positive")
        if self.warmup_epochs < 1:
            raise ValueError("need at least one warmup epoch")
        if self.total_epochs < self.warmup_epochs:
            raise ValueError("total_epochs must be >= warmup_epochs")
        if self.samples_per_epoch < 1:
            raise ValueError("samples_per_epoch must be positive")
        if self.gamma_policy not in ("per_epoch", "fixed"):
            raise ValueError("gamma_policy must be 'per_epoch' or 'fixed'")
        if self.gamma_policy == "fixed" and self.gamma_fixed is None:
            raise ValueError("gamma_policy='fixed' requires gamma_fixed")
        if self.sample_mode not in ("independent", "joint"):
            raise ValueError("sample_mode must be 'independent' or 'joint'")
        if self.marginal_update not in ("iteration", "epoch"):
            raise ValueError("marginal_update must be 'iteration' or 'epoch'")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    phase: str  # "warmup" or "adaptive"
    gamma: float | None
    temperature: float | None
    entropies: tuple[float, ...] | None
    mean_gap: float


@dataclass(frozen=True)
class AowsResult:
    result: SearchResult
    epochs: tuple[EpochRecord, ...]
    stats: ErrorStats


def uniform_config(space: SearchSpace, rng: np.random.Generator) -> Config:
    """One configuration with each interior choice drawn uniformly."""
    config = [space.input_channels]
    for k in range(1, space.n_boundaries - 1):
        choices = space.choice_sets[k]
        config.append(choices[int(rng.integers(len(choices)))])
    config.append(space.output_channels)
    return tuple(config)


def run_aows(
    run: AowsRunConfig,
    oracle: SyntheticLoss,
    table: LatencyTable,
    space: SearchSpace,
) -> AowsResult:
    """Execute the adaptive sampling loop and return the final search result.

    Fully deterministic given the run seed and the oracle's own seed: the
    sampler uses a child stream of ``run.seed`` and the oracle draws from its
    own stream in call order.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(run.seed), 0xA0)))
    schedule = run.schedule or default_schedule(start_epoch=float(run.warmup_epochs))
    stats = ErrorStats(space)
    records: list[EpochRecord] = []

    def search_now() -> SearchResult:
        return lagrangian_search(
            stats, table, run.target_ms,
            gamma_max=run.gamma_max, tol=run.gamma_tol,
        )

    for epoch in range(run.warmup_epochs):
        gaps = []
        for _ in range(run.samples_per_epoch):
            config = uniform_config(space, rng)
            loss, max_loss = oracle.observe(config)
            stats.record(config, loss, max_loss)
            gaps.append(loss - max_loss)
        stats.finalize_epoch()
        records.append(EpochRecord(
            epoch=epoch, phase="warmup", gamma=None, temperature=None,
            entropies=None, mean_gap=float(np.mean(gaps)),
        ))

    for epoch in range(run.warmup_epochs, run.total_epochs):
        if run.gamma_policy == "fixed":
            gamma = float(run.gamma_fixed)
        else:
            gamma = search_now().gamma
        energy = chain_energy(stats, table, gamma)
        t_start = temperature_at(schedule, float(epoch))
        marginals = forward_backward(energy, t_start)
        entropies = tuple(
            marginals.entropy(k) for k in range(1, space.n_boundaries - 1)
        )
        gaps = []
        for s in range(run.samples_per_epoch):
            if run.marginal_update == "iteration" and s > 0:
                t = temperature_at(schedule, epoch + s / run.samples_per_epoch)
                marginals = forward_backward(energy, t)
            config = sample(marginals, rng, mode=run.sample_mode)
            loss, max_loss = oracle.observe(config)
            stats.record(config, loss, max_loss)
            gaps.append(loss - max_loss)
        stats.finalize_epoch()
        records.append(EpochRecord(
            epoch=epoch, phase="adaptive", gamma=gamma, temperature=t_start,
            entropies=entropies, mean_gap=float(np.mean(gaps)),
        ))

    final = search_now()
    return AowsResult(result=final, epochs=tuple(records), stats=stats)
