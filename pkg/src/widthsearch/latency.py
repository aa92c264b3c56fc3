"""Black-box per-layer latency model.

Whole-network latency is modeled as a sum of per-layer terms, each a function
of the layer's input and output channel counts.  The terms are unknown table
entries; measuring complete networks at many channel configurations yields a
sparse linear system over those entries, optionally regularized by a soft
prior that latency should not decrease when channel counts grow.  The fit
minimizes

    ||A x - l||^2 + lam * || max(V x, 0) ||_1

where each row of ``A`` selects the one entry per layer used by a measured
configuration and each row of ``V`` encodes one monotonicity difference.
Individual entries may be unidentifiable (per-layer constant shifts cancel in
every row), but whole-configuration predictions are well-defined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import lsmr

from .errors import CoverageError, FileFormatError, FitConvergenceError, InputError
from .space import Config, SearchSpace, layer_flops, require_valid

# continuation floor for the hinge majorizer weights |t| <= t^2/(2w) + w/2
_IRLS_FLOOR_START = 1e-2
_IRLS_FLOOR_DECAY = 0.2
_IRLS_FLOOR_MIN = 1e-12


@dataclass(frozen=True)
class BenchmarkSample:
    """One whole-network latency measurement."""

    config: Config
    latency_ms: float


@dataclass(frozen=True)
class LatencyTable:
    """Per-layer latency contributions over adjacent channel-count pairs.

    ``entries[i]`` has shape ``(|C_i|, |C_{i+1}|)``.  ``coverage`` marks, when
    the table came from a partial fit, which entries were actually constrained
    by at least one sample; zero-filled entries carry ``False``.
    """

    choice_sets: tuple[tuple[int, ...], ...]
    entries: tuple[np.ndarray, ...]
    coverage: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if len(self.entries) != len(self.choice_sets) - 1:
            raise ValueError("need one entry matrix per layer")
        for i, mat in enumerate(self.entries):
            want = (len(self.choice_sets[i]), len(self.choice_sets[i + 1]))
            if mat.shape != want:
                raise ValueError(f"layer {i} table has shape {mat.shape}, want {want}")
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"layer {i} table has non-finite entries")
            mat.flags.writeable = False

    @property
    def n_layers(self) -> int:
        return len(self.entries)

    def index(self, boundary: int, channel: int) -> int:
        try:
            return self.choice_sets[boundary].index(channel)
        except ValueError:
            raise ValueError(
                f"channel {channel} is not a choice at boundary {boundary}"
            ) from None


def predict(table: LatencyTable, config: Sequence[int]) -> float:
    """Modeled latency of one configuration: the sum of its table entries."""
    if len(config) != len(table.choice_sets):
        raise ValueError(
            f"configuration length {len(config)} does not match "
            f"{len(table.choice_sets)} boundaries"
        )
    total = 0.0
    a = table.index(0, config[0])
    for i, mat in enumerate(table.entries):
        b = table.index(i + 1, config[i + 1])
        total += mat[a, b]
        a = b
    return float(total)


def predict_batch(table: LatencyTable, configs: Sequence[Sequence[int]]) -> np.ndarray:
    """Vectorized :func:`predict` over many configurations."""
    configs = np.asarray(configs, dtype=np.int64)
    if configs.ndim != 2 or configs.shape[1] != len(table.choice_sets):
        raise ValueError("configs must be (n, n_boundaries)")
    out = np.zeros(len(configs))
    idx = np.empty_like(configs)
    for k, choices in enumerate(table.choice_sets):
        arr = np.asarray(choices, dtype=np.int64)
        pos = np.searchsorted(arr, configs[:, k])
        pos = np.clip(pos, 0, len(arr) - 1)
        if not np.all(arr[pos] == configs[:, k]):
            raise ValueError(f"some configs use channels outside boundary {k}'s choices")
        idx[:, k] = pos
    for i, mat in enumerate(table.entries):
        out += mat[idx[:, i], idx[:, i + 1]]
    return out


def flops_table(space: SearchSpace) -> LatencyTable:
    """The analytic FLOPs cost expressed in latency-table form.

    FLOPs decompose over adjacent channel pairs exactly like the latency
    model, so predictions from this table equal direct FLOPs computation.
    """
    entries = []
    for i, params in enumerate(space.params):
        c_in = np.asarray(space.choice_sets[i], dtype=np.float64)
        c_out = np.asarray(space.choice_sets[i + 1], dtype=np.float64)
        mat = np.empty((len(c_in), len(c_out)))
        for a, ci in enumerate(space.choice_sets[i]):
            for b, co in enumerate(space.choice_sets[i + 1]):
                mat[a, b] = layer_flops(params, ci, co)
        entries.append(mat)
    return LatencyTable(choice_sets=space.choice_sets, entries=tuple(entries))


# ---------------------------------------------------------------------------
# Linear system assembly


@dataclass(frozen=True)
class LinearSystem:
    """Sparse encoding of measurements and monotonicity differences.

    Each row of ``a`` holds exactly one 1 per layer; each row of ``v`` holds a
    single +1/-1 pair expressing that a smaller channel count must not cost
    more than the next larger one at the same co-index.
    """

    a: sparse.csr_matrix
    l: np.ndarray
    v: sparse.csr_matrix
    choice_sets: tuple[tuple[int, ...], ...]
    layer_offsets: tuple[int, ...]

    @property
    def n_variables(self) -> int:
        return self.a.shape[1]


def _column_layout(choice_sets) -> tuple[int, ...]:
    offsets = [0]
    for i in range(len(choice_sets) - 1):
        offsets.append(offsets[-1] + len(choice_sets[i]) * len(choice_sets[i + 1]))
    return tuple(offsets)


def _column(offsets, choice_sets, layer: int, a: int, b: int) -> int:
    return offsets[layer] + a * len(choice_sets[layer + 1]) + b


def assemble(samples: Sequence[BenchmarkSample], space: SearchSpace) -> LinearSystem:
    """Build the measurement system ``A x = l`` and monotonicity rows ``V``."""
    if not samples:
        raise InputError("cannot assemble a system from zero samples")
    sets = space.choice_sets
    offsets = _column_layout(sets)
    n_vars = offsets[-1]
    n_layers = space.n_layers

    rows, cols = [], []
    l = np.empty(len(samples))
    for j, sample in enumerate(samples):
        config = require_valid(sample.config, space)
        a = space.choice_index(0, config[0])
        for i in range(n_layers):
            b = space.choice_index(i + 1, config[i + 1])
            rows.append(j)
            cols.append(_column(offsets, sets, i, a, b))
            a = b
        l[j] = sample.latency_ms
    a_mat = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(samples), n_vars)
    )

    v_rows, v_cols, v_vals = [], [], []
    r = 0
    for i in range(n_layers):
        n_in, n_out = len(sets[i]), len(sets[i + 1])
        # consecutive input counts at a fixed output count
        for b in range(n_out):
            for a in range(n_in - 1):
                v_rows += [r, r]
                v_cols += [
                    _column(offsets, sets, i, a, b),
                    _column(offsets, sets, i, a + 1, b),
                ]
                v_vals += [1.0, -1.0]
                r += 1
        # consecutive output counts at a fixed input count
        for a in range(n_in):
            for b in range(n_out - 1):
                v_rows += [r, r]
                v_cols += [
                    _column(offsets, sets, i, a, b),
                    _column(offsets, sets, i, a, b + 1),
                ]
                v_vals += [1.0, -1.0]
                r += 1
    v_mat = sparse.csr_matrix((v_vals, (v_rows, v_cols)), shape=(r, n_vars))

    return LinearSystem(a=a_mat, l=l, v=v_mat, choice_sets=sets, layer_offsets=offsets)


# ---------------------------------------------------------------------------
# Fitting


@dataclass(frozen=True)
class FitOptions:
    """Solver options: monotonicity weight, tolerance, iteration budget."""

    lam: float = 0.0
    tol: float = 1e-8
    max_iters: int = 500

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass(frozen=True)
class FitResult:
    table: LatencyTable
    objective: float
    objective_history: tuple[float, ...]
    iterations: int
    hinge_mass: float


def _objective(a, l, v, lam, x) -> float:
    res = a @ x - l
    obj = float(res @ res)
    if lam > 0 and v.shape[0]:
        obj += lam * float(np.maximum(v @ x, 0.0).sum())
    return obj


def _solve_ls(a, b, x0=None):
    out = lsmr(a, b, x0=x0, atol=1e-13, btol=1e-13, maxiter=20 * (a.shape[1] + 10))
    return out[0]


def _solve_subproblem(h0, c0, v, w, lam, half_lam_vt1):
    """Exact minimizer of the quadratic majorizer via dense normal equations."""
    from scipy import linalg as dense_linalg

    h = h0 + (lam / 2.0) * (v.T @ sparse.diags(1.0 / w) @ v).toarray()
    c = c0 - half_lam_vt1
    ridge = 1e-12 * max(np.mean(np.diag(h)), 1.0)
    for _ in range(4):
        try:
            return dense_linalg.solve(h + ridge * np.eye(h.shape[0]), c,
                                      assume_a="pos")
        except dense_linalg.LinAlgError:
            ridge *= 100.0
    return np.linalg.lstsq(h, c, rcond=None)[0]


_POLISH_SIZE_LIMIT = 2500
_POLISH_ROUNDS = 12


def _kkt_solve(h0, c0, v, positive, active, lam):
    """Stationary point for a fixed hinge sign pattern.

    Rows in ``positive`` contribute their full linear slope, rows in
    ``active`` are pinned to zero via multipliers, the rest are free.
    """
    n = h0.shape[0]
    k = int(active.sum())
    if n + k > _POLISH_SIZE_LIMIT:
        return None, None
    rhs_x = c0.copy()
    if positive.any():
        rhs_x = rhs_x - lam * np.asarray(v[positive].sum(axis=0)).ravel()
    if k == 0:
        return np.linalg.lstsq(h0, rhs_x, rcond=None)[0], np.zeros(0)
    vz = v[active].toarray()
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = h0
    kkt[:n, n:] = vz.T
    kkt[n:, :n] = vz
    rhs = np.concatenate([rhs_x, np.zeros(k)])
    try:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    except np.linalg.LinAlgError:
        return None, None
    return sol[:n], sol[n:]


def _polish(h0, c0, v, t, lam, kappa, t_scale):
    """Exact Newton step on the piecewise-quadratic objective.

    Seeds a sign pattern from the current hinge arguments, then refines it:
    pinned rows with out-of-range multipliers are released to the side the
    dual indicates, and free rows that land on the wrong side get pinned.
    Lands exactly on the optimum once the pattern matches the true active
    set; the caller only accepts the result if the objective improves.
    """
    tol = 1e-12 * max(t_scale, 1.0)
    positive = t > kappa
    active = np.abs(t) <= kappa
    seen = set()
    best = None
    for _ in range(_POLISH_ROUNDS):
        key = (positive.tobytes(), active.tobytes())
        if key in seen:
            break
        seen.add(key)
        x, mu = _kkt_solve(h0, c0, v, positive, active, lam)
        if x is None:
            return best
        best = x
        t_new = v @ x
        mu_full = np.zeros(v.shape[0])
        mu_full[active] = mu
        release_neg = active & (mu_full < -tol)
        release_pos = active & (mu_full > lam + tol)
        pin_from_free = ~positive & ~active & (t_new > tol)
        pin_from_pos = positive & (t_new < -tol)
        if not (release_neg.any() or release_pos.any()
                or pin_from_free.any() or pin_from_pos.any()):
            break
        active = (active & ~release_neg & ~release_pos) | pin_from_free | pin_from_pos
        positive = (positive & ~pin_from_pos) | release_pos
    return best


def fit(system: LinearSystem, opts: FitOptions = FitOptions(),
        allow_partial: bool = False) -> FitResult:
    """Fit the latency table by penalized least squares.

    The hinge penalty is minimized by a majorize-minimize loop: each hinge
    term is upper-bounded by a quadratic touching it at the current iterate,
    and the resulting weighted least-squares subproblem is solved with LSMR.
    The objective is nonincreasing across iterations by construction; with
    ``lam = 0`` the fit reduces to one ordinary least-squares solve.

    Raises :class:`CoverageError` if some table entry is touched by no sample,
    unless ``allow_partial`` is set, in which case untouched entries are
    zero-filled and flagged in the returned table's ``coverage`` masks.
    """
    sets = system.choice_sets
    offsets = system.layer_offsets
    n_vars = system.n_variables

    touched = system.a.getnnz(axis=0) > 0
    if not touched.all():
        if not allow_partial:
            missing = [
                _unflatten(sets, offsets, int(col))
                for col in np.flatnonzero(~touched)
            ]
            raise CoverageError(missing)
        keep = np.flatnonzero(touched)
        a = system.a[:, keep]
        v = system.v[:, keep]
        # drop monotonicity rows that reference an unidentified entry
        full_rows = np.asarray((system.v != 0).sum(axis=1)).ravel()
        kept_rows = np.asarray((v != 0).sum(axis=1)).ravel()
        v = v[kept_rows == full_rows]
    else:
        keep = None
        a, v = system.a, system.v

    l = system.l
    lam = opts.lam

    x = _solve_ls(a, l)
    history = [_objective(a, l, v, lam, x)]
    iterations = 0

    if lam > 0 and v.shape[0]:
        h0 = 2.0 * (a.T @ a).toarray()
        c0 = 2.0 * (a.T @ l)
        half_lam_vt1 = (lam / 2.0) * np.asarray(v.sum(axis=0)).ravel()
        t_scale = max(float(np.abs(v @ x).max()), 1e-6)
        floor = _IRLS_FLOOR_START * t_scale
        floor_min = _IRLS_FLOOR_MIN * t_scale
        converged = False
        for iterations in range(1, opts.max_iters + 1):
            t = v @ x
            w = np.maximum(np.abs(t), floor)
            candidates = [_solve_subproblem(h0, c0, v, w, lam, half_lam_vt1)]
            for kappa in (1e-3, 1e-6):
                candidates.append(_polish(h0, c0, v, t, lam, kappa * t_scale, t_scale))
            best_x, best_obj = None, history[-1]
            for cand in candidates:
                if cand is None:
                    continue
                obj = _objective(a, l, v, lam, cand)
                if obj < best_obj:
                    best_x, best_obj = cand, obj
            at_floor = floor <= floor_min
            floor = max(floor * _IRLS_FLOOR_DECAY, floor_min)
            if best_x is None:
                # nothing improves; confirm once at the terminal floor
                if at_floor:
                    converged = True
                    break
                floor = floor_min
                continue
            drop = history[-1] - best_obj
            x = best_x
            history.append(best_obj)
            if drop <= opts.tol * max(1.0, best_obj):
                if at_floor:
                    converged = True
                    break
                floor = floor_min
        if not converged:
            res = a @ x - l
            raise FitConvergenceError(
                iterations, history[-1], float(np.linalg.norm(res))
            )

    if keep is not None:
        full = np.zeros(n_vars)
        full[keep] = x
        x = full

    entries, coverage = [], []
    for i in range(len(sets) - 1):
        shape = (len(sets[i]), len(sets[i + 1]))
        block = slice(offsets[i], offsets[i + 1])
        entries.append(x[block].reshape(shape).copy())
        coverage.append(touched[block].reshape(shape).copy())
    table = LatencyTable(
        choice_sets=sets,
        entries=tuple(entries),
        coverage=None if touched.all() else tuple(coverage),
    )
    hinge = float(np.maximum(system.v @ x, 0.0).sum()) if system.v.shape[0] else 0.0
    return FitResult(
        table=table,
        objective=history[-1],
        objective_history=tuple(history),
        iterations=iterations,
        hinge_mass=hinge,
    )


def _unflatten(sets, offsets, col: int) -> tuple[int, int, int]:
    for i in range(len(offsets) - 1):
        if col < offsets[i + 1]:
            rel = col - offsets[i]
            n_out = len(sets[i + 1])
            a, b = divmod(rel, n_out)
            return (i, sets[i][a], sets[i + 1][b])
    raise IndexError(col)


def fit_with_validation(
    samples: Sequence[BenchmarkSample],
    space: SearchSpace,
    lambdas: Sequence[float] = (0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0),
    val_fraction: float = 0.25,
    seed: int = 0,
    tol: float = 1e-8,
    max_iters: int = 500,
    allow_partial: bool = False,
) -> tuple[FitResult, dict]:
    """Pick the monotonicity weight on a held-out split, then refit on all data.

    Selection minimizes held-out relative RMSE; among weights within 1% of
    the best, the largest wins (prefer the stronger prior when it is free).
    """
    if len(samples) < 4:
        raise InputError("need at least 4 samples to hold out a validation split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_val = max(1, int(round(val_fraction * len(samples))))
    val_idx = set(order[:n_val].tolist())
    train = [s for j, s in enumerate(samples) if j not in val_idx]
    val = [s for j, s in enumerate(samples) if j in val_idx]

    train_sys = assemble(train, space)
    val_configs = [s.config for s in val]
    val_lat = np.array([s.latency_ms for s in val])

    scores = {}
    for lam in lambdas:
        try:
            result = fit(train_sys, FitOptions(lam=lam, tol=tol, max_iters=max_iters),
                         allow_partial=True)
        except FitConvergenceError:
            scores[lam] = float("inf")
            continue
        pred = predict_batch(result.table, val_configs)
        scores[lam] = float(np.sqrt(np.mean(((pred - val_lat) / val_lat) ** 2)))

    best_rmse = min(scores.values())
    candidates = [lam for lam, s in scores.items() if s <= best_rmse * 1.01]
    best_lam = max(candidates)

    full_sys = assemble(list(samples), space)
    result = fit(full_sys, FitOptions(lam=best_lam, tol=tol, max_iters=max_iters),
                 allow_partial=allow_partial)
    report = {
        "selected_lambda": best_lam,
        "validation_rmse": scores,
        "n_train": len(train),
        "n_val": len(val),
    }
    return result, report


# ---------------------------------------------------------------------------
# Benchmark planning


def zero_counts(space: SearchSpace) -> tuple[np.ndarray, ...]:
    """Fresh visit counters, one integer per latency-table entry."""
    return tuple(
        np.zeros((len(space.choice_sets[i]), len(space.choice_sets[i + 1])), dtype=np.int64)
        for i in range(space.n_layers)
    )


def record_visit(counts: Sequence[np.ndarray], config: Sequence[int],
                 space: SearchSpace) -> None:
    """Increment the per-entry counters along one benchmarked configuration."""
    config = require_valid(config, space)
    a = space.choice_index(0, config[0])
    for i in range(space.n_layers):
        b = space.choice_index(i + 1, config[i + 1])
        counts[i][a, b] += 1
        a = b


def plan_next(counts: Sequence[np.ndarray], space: SearchSpace) -> Config:
    """Choose the next configuration to benchmark.

    Returns the configuration traversing as many least-visited table entries
    as possible (exact chain decoding of a pairwise energy that pays -1 per
    minimum-count entry on the path), so at least one least-visited entry is
    always covered.  Ties resolve to the smallest channel counts.
    """
    from .viterbi import ChainEnergy, decode

    m = min(int(c.min()) for c in counts)
    pairwise = tuple(-(c == m).astype(np.float64) for c in counts)
    unaries = tuple(
        np.zeros(len(space.choice_sets[k])) for k in range(1, space.n_boundaries - 1)
    )
    energy = ChainEnergy(
        choice_sets=space.choice_sets, unaries=unaries, pairwise=pairwise, gamma=1.0
    )
    config, _ = decode(energy)
    return config


# ---------------------------------------------------------------------------
# Persistence


def table_to_dict(table: LatencyTable) -> dict:
    doc = {}
    for i, mat in enumerate(table.entries):
        layer = {}
        for a, ci in enumerate(table.choice_sets[i]):
            for b, co in enumerate(table.choice_sets[i + 1]):
                layer[f"{ci},{co}"] = float(mat[a, b])
        doc[str(i)] = layer
    return doc


def table_from_dict(doc: dict, space: SearchSpace) -> LatencyTable:
    sets = space.choice_sets
    entries = []
    try:
        for i in range(space.n_layers):
            layer = doc[str(i)]
            mat = np.empty((len(sets[i]), len(sets[i + 1])))
            for a, ci in enumerate(sets[i]):
                for b, co in enumerate(sets[i + 1]):
                    mat[a, b] = float(layer[f"{ci},{co}"])
            entries.append(mat)
    except KeyError as exc:
        raise FileFormatError(f"latency table is missing entry {exc}") from exc
    return LatencyTable(choice_sets=sets, entries=tuple(entries))


def save_table(table: LatencyTable, path: str | Path) -> None:
    Path(path).write_text(json.dumps(table_to_dict(table), indent=2, sort_keys=True) + "\n")


def load_table(path: str | Path, space: SearchSpace) -> LatencyTable:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from exc
    return table_from_dict(doc, space)


def load_samples(path: str | Path, space: SearchSpace) -> list[BenchmarkSample]:
    """Read line-delimited benchmark records with interior channel vectors."""
    samples = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            config = space.expand_interior(rec["config"])
            samples.append(BenchmarkSample(config=config, latency_ms=float(rec["latency_ms"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"{path}:{lineno}: bad sample record ({exc})") from exc
    return samples


def save_samples(samples: Sequence[BenchmarkSample], space: SearchSpace,
                 path: str | Path) -> None:
    lines = []
    for s in samples:
        interior = list(s.config[1:-1])
        lines.append(json.dumps({"config": interior, "latency_ms": s.latency_ms}))
    Path(path).write_text("\n".join(lines) + "\n")
