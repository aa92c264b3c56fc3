"""Running per-channel error statistics.

Each observation of a sampled configuration contributes its loss gap to the
maximum-width configuration (available for free under sandwich-rule style
evaluation) to every interior channel choice the configuration used.  Served
estimates are epoch snapshots: :meth:`ErrorStats.finalize_epoch` publishes the
current epoch's means and falls back to the previous snapshot for choices the
epoch never visited.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FileFormatError, UndefinedDeltaError
from .space import SearchSpace, require_valid


class ErrorStats:
    """Per-layer, per-choice loss-gap accumulators with epoch snapshots.

    Concurrent recording requires external serialization; the contract is
    only that final sums equal some serial order of the calls.
    """

    def __init__(self, space: SearchSpace):
        self.space = space
        sizes = [len(s) for s in space.choice_sets[1:-1]]
        self._cur_sum = [np.zeros(n) for n in sizes]
        self._cur_count = [np.zeros(n, dtype=np.int64) for n in sizes]
        self._snap_delta = [np.full(n, np.nan) for n in sizes]
        self._snap_count = [np.zeros(n, dtype=np.int64) for n in sizes]
        self.epochs_completed = 0

    @property
    def n_interior(self) -> int:
        return len(self._cur_sum)

    def record(self, config: Sequence[int], loss: float, max_loss: float) -> None:
        """Add one observation's gap to every interior choice it used."""
        config = require_valid(config, self.space)
        gap = float(loss) - float(max_loss)
        if not np.isfinite(gap):
            raise ValueError(f"non-finite loss gap ({loss} - {max_loss})")
        for k in range(self.n_interior):
            idx = self.space.choice_index(k + 1, config[k + 1])
            self._cur_sum[k][idx] += gap
            self._cur_count[k][idx] += 1

    def finalize_epoch(self) -> None:
        """Publish this epoch's means; keep stale values for unvisited choices."""
        for k in range(self.n_interior):
            seen = self._cur_count[k] > 0
            self._snap_delta[k][seen] = self._cur_sum[k][seen] / self._cur_count[k][seen]
            self._snap_count[k] = self._cur_count[k].copy()
            self._cur_sum[k][:] = 0.0
            self._cur_count[k][:] = 0
        self.epochs_completed += 1

    def delta(self, boundary: int, channel: int) -> float:
        """Served error estimate for one interior choice."""
        k = boundary - 1
        if not 0 <= k < self.n_interior:
            raise ValueError(f"boundary {boundary} is not interior")
        idx = self.space.choice_index(boundary, channel)
        value = self._snap_delta[k][idx]
        if np.isnan(value):
            raise UndefinedDeltaError(boundary, channel)
        return float(value)

    def unaries(self) -> tuple[np.ndarray, ...]:
        """Served estimates as one array per interior boundary.

        Raises :class:`UndefinedDeltaError` naming the first choice that has
        never been observed in any epoch.
        """
        for k, arr in enumerate(self._snap_delta):
            holes = np.flatnonzero(np.isnan(arr))
            if holes.size:
                channel = self.space.choice_sets[k + 1][int(holes[0])]
                raise UndefinedDeltaError(k + 1, channel)
        return tuple(arr.copy() for arr in self._snap_delta)

    def epoch_counts(self) -> tuple[np.ndarray, ...]:
        """Visit counts of the last completed epoch."""
        return tuple(c.copy() for c in self._snap_count)

    def pending_counts(self) -> tuple[np.ndarray, ...]:
        """Visit counts accumulated since the last snapshot."""
        return tuple(c.copy() for c in self._cur_count)

    @classmethod
    def from_deltas(cls, space: SearchSpace, deltas: Sequence[Sequence[float]],
                    counts: Sequence[Sequence[int]] | None = None) -> "ErrorStats":
        """Stats object serving fixed estimates (useful for tests and replays)."""
        stats = cls(space)
        if len(deltas) != stats.n_interior:
            raise ValueError(f"need {stats.n_interior} delta vectors, got {len(deltas)}")
        for k, vec in enumerate(deltas):
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != stats._snap_delta[k].shape:
                raise ValueError(f"delta vector {k} has wrong length")
            stats._snap_delta[k] = arr.copy()
            if counts is not None:
                stats._snap_count[k] = np.asarray(counts[k], dtype=np.int64).copy()
        stats.epochs_completed = 1
        return stats


def stats_to_dict(stats: ErrorStats) -> dict:
    boundaries = []
    for k in range(stats.n_interior):
        delta = stats._snap_delta[k]
        boundaries.append(
            {
                "boundary": k + 1,
                "channels": list(stats.space.choice_sets[k + 1]),
                "sum": [float(v) for v in stats._cur_sum[k]],
                "count": [int(v) for v in stats._cur_count[k]],
                "delta": [None if np.isnan(v) else float(v) for v in delta],
            }
        )
    return {"epochs_completed": stats.epochs_completed, "boundaries": boundaries}


def stats_from_dict(doc: dict, space: SearchSpace) -> ErrorStats:
    stats = ErrorStats(space)
    try:
        for entry in doc["boundaries"]:
            k = int(entry["boundary"]) - 1
            if list(entry["channels"]) != list(space.choice_sets[k + 1]):
                raise ValueError(f"channel list mismatch at boundary {k + 1}")
            stats._cur_sum[k] = np.asarray(entry["sum"], dtype=np.float64)
            stats._cur_count[k] = np.asarray(entry["count"], dtype=np.int64)
            stats._snap_delta[k] = np.asarray(
                [np.nan if v is None else float(v) for v in entry["delta"]]
            )
        stats.epochs_completed = int(doc.get("epochs_completed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"bad stats document: {exc}") from exc
    return stats


def save_stats(stats: ErrorStats, path: str | Path) -> None:
    Path(path).write_text(json.dumps(stats_to_dict(stats), indent=2) + "\n")


def load_stats(path: str | Path, space: SearchSpace) -> ErrorStats:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from exc
    return stats_from_dict(doc, space)
