"""Synthetic stand-ins for hardware benchmarking and network evaluation.

Everything that would normally need a device or a trained network is replaced
here by seeded oracles: a hidden ground-truth latency table with optional
multiplicative measurement noise, and a loss oracle whose gap to the
maximum-width configuration has a known decomposable expectation (per-choice
quality curves plus optional adjacent-pair couplings).  Both are deterministic
given their seeds, which makes every downstream experiment replayable.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FileFormatError
from .latency import BenchmarkSample, LatencyTable, predict
from .space import Config, SearchSpace, require_valid


class SyntheticDevice:
    """A device oracle: hidden monotone truth table plus measurement noise."""

    def __init__(self, truth: LatencyTable, noise: float = 0.0, seed: int = 0):
        if noise < 0:
            raise ValueError("noise must be nonnegative")
        self.truth = truth
        self.noise = float(noise)
        self.seed = int(seed)
        self._rng = np.random.default_rng(np.random.SeedSequence(self.seed))

    def measure(self, config: Sequence[int]) -> BenchmarkSample:
        """One noisy whole-network latency measurement."""
        config = tuple(int(c) for c in config)
        lat = predict(self.truth, config)
        if self.noise > 0:
            lat *= 1.0 + self.noise * self._rng.standard_normal()
        return BenchmarkSample(config=config, latency_ms=float(lat))

    @classmethod
    def random(cls, space: SearchSpace, seed: int = 0, noise: float = 0.0,
               scale: float = 1.0) -> "SyntheticDevice":
        """Device with a random truth table, strictly monotone per layer.

        Entries are two-dimensional cumulative sums of positive increments,
        so latency always grows with either channel count.
        """
        gen = np.random.default_rng(np.random.SeedSequence((int(seed), 0xD0)))
        entries = []
        for i in range(space.n_layers):
            shape = (len(space.choice_sets[i]), len(space.choice_sets[i + 1]))
            inc = gen.uniform(0.02, 0.10, size=shape) * scale
            mat = np.cumsum(np.cumsum(inc, axis=0), axis=1)
            mat += gen.uniform(0.01, 0.05) * scale
            entries.append(mat)
        truth = LatencyTable(choice_sets=space.choice_sets, entries=tuple(entries))
        return cls(truth=truth, noise=noise, seed=seed)


class SyntheticLoss:
    """Loss oracle honoring the max-configuration baseline.

    ``observe`` returns a (loss, max_loss) pair drawn from one shared latent
    sample, so the gap carries the signal: its expectation is the sum of the
    per-choice curves ``g`` at the configuration's interior choices plus any
    adjacent-pair couplings ``h``.  Curves are normalized so the gap at the
    maximum configuration has zero mean.
    """

    def __init__(
        self,
        space: SearchSpace,
        g: Sequence[Sequence[float]],
        h: Sequence[np.ndarray] | None = None,
        noise: float = 0.0,
        base_loss: float = 2.0,
        base_spread: float = 0.0,
        seed: int = 0,
    ):
        self.space = space
        n_interior = space.n_boundaries - 2
        if len(g) != n_interior:
            raise ValueError(f"need {n_interior} quality curves, got {len(g)}")
        self.g = []
        for k, curve in enumerate(g):
            arr = np.asarray(curve, dtype=np.float64).copy()
            if arr.shape != (len(space.choice_sets[k + 1]),):
                raise ValueError(f"curve {k} has wrong length")
            arr -= arr[-1]  # zero at the maximum choice
            self.g.append(arr)
        self.h = None
        if h is not None:
            self.h = []
            for j, mat in enumerate(h):
                arr = np.asarray(mat, dtype=np.float64).copy()
                want = (len(space.choice_sets[j]), len(space.choice_sets[j + 1]))
                if arr.shape != want:
                    raise ValueError(f"coupling {j} has shape {arr.shape}, want {want}")
                arr -= arr[-1, -1]
                self.h.append(arr)
        self.noise = float(noise)
        self.base_loss = float(base_loss)
        self.base_spread = float(base_spread)
        self.seed = int(seed)
        self._rng = np.random.default_rng(np.random.SeedSequence((self.seed, 0x105)))

    def expected_gap(self, config: Sequence[int]) -> float:
        """Noise-free loss gap of a configuration; the true search objective."""
        config = require_valid(config, self.space)
        total = 0.0
        for k, curve in enumerate(self.g):
            total += curve[self.space.choice_index(k + 1, config[k + 1])]
        if self.h is not None:
            a = self.space.choice_index(0, config[0])
            for j, mat in enumerate(self.h):
                b = self.space.choice_index(j + 1, config[j + 1])
                total += mat[a, b]
                a = b
        return float(total)

    def observe(self, config: Sequence[int]) -> tuple[float, float]:
        """(loss, max_loss) from one latent draw; gap = expected gap + noise."""
        base = self.base_loss
        if self.base_spread > 0:
            base += self.base_spread * self._rng.standard_normal()
        gap = self.expected_gap(config)
        if self.noise > 0:
            gap += self.noise * self._rng.standard_normal()
        return float(base + gap), float(base)

    def proxy(self):
        """Deterministic error proxy for greedy trimming."""
        return self.expected_gap

    @classmethod
    def random(
        cls,
        space: SearchSpace,
        seed: int = 0,
        noise: float = 0.0,
        coupling: float = 0.0,
        unary_scale: float = 1.0,
        base_loss: float = 2.0,
        base_spread: float = 0.0,
    ) -> "SyntheticLoss":
        """Random oracle: decreasing quality curves, optional mild couplings."""
        gen = np.random.default_rng(np.random.SeedSequence((int(seed), 0x10c)))
        g = []
        for k in range(1, space.n_boundaries - 1):
            n = len(space.choice_sets[k])
            inc = gen.uniform(0.2, 1.0, size=n - 1) * unary_scale / max(n - 1, 1)
            curve = np.concatenate([np.cumsum(inc[::-1])[::-1], [0.0]])
            g.append(curve)
        h = None
        if coupling > 0:
            h = []
            for j in range(space.n_layers):
                shape = (len(space.choice_sets[j]), len(space.choice_sets[j + 1]))
                h.append(gen.normal(0.0, coupling, size=shape))
        return cls(space, g=g, h=h, noise=noise, base_loss=base_loss,
                   base_spread=base_spread, seed=seed)


# ---------------------------------------------------------------------------
# Scenario files


def load_scenario(doc_or_path, space: SearchSpace) -> tuple[SyntheticDevice, SyntheticLoss]:
    """Build (device, loss) oracles from a scenario document or file.

    The document has two sections.  ``device`` either embeds a truth table
    (``entries`` keyed like a latency-table file) or gives ``scale`` for a
    random one; ``loss`` either embeds explicit ``g`` (and optional ``h``)
    arrays or gives ``coupling``/``unary_scale`` for a random oracle.  Both
    sections take ``seed`` and ``noise``.
    """
    if isinstance(doc_or_path, (str, Path)):
        try:
            doc = json.loads(Path(doc_or_path).read_text())
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{doc_or_path}: not valid JSON ({exc})") from exc
    else:
        doc = doc_or_path
    try:
        dev_doc = doc.get("device", {})
        if "entries" in dev_doc:
            from .latency import table_from_dict

            truth = table_from_dict(dev_doc["entries"], space)
            device = SyntheticDevice(
                truth=truth,
                noise=float(dev_doc.get("noise", 0.0)),
                seed=int(dev_doc.get("seed", 0)),
            )
        else:
            device = SyntheticDevice.random(
                space,
                seed=int(dev_doc.get("seed", 0)),
                noise=float(dev_doc.get("noise", 0.0)),
                scale=float(dev_doc.get("scale", 1.0)),
            )
        loss_doc = doc.get("loss", {})
        common = {
            "noise": float(loss_doc.get("noise", 0.0)),
            "base_loss": float(loss_doc.get("base_loss", 2.0)),
            "base_spread": float(loss_doc.get("base_spread", 0.0)),
            "seed": int(loss_doc.get("seed", 0)),
        }
        if "g" in loss_doc:
            h = loss_doc.get("h")
            if h is not None:
                h = [np.asarray(mat, dtype=np.float64) for mat in h]
            loss = SyntheticLoss(space, g=loss_doc["g"], h=h, **common)
        else:
            loss = SyntheticLoss.random(
                space,
                coupling=float(loss_doc.get("coupling", 0.0)),
                unary_scale=float(loss_doc.get("unary_scale", 1.0)),
                **common,
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"bad scenario document: {exc}") from exc
    return device, loss
