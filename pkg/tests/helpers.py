"""Shared fixtures-by-hand: small spaces, random instances, and independent
brute-force oracles the fast implementations are checked against."""

from __future__ import annotations

import numpy as np

from widthsearch import (
    ChainEnergy,
    LatencyTable,
    LayerParams,
    SearchSpace,
    predict,
)


def make_space(interior_sets, input_channels=2, output_channels=2, params=None):
    """Chain space from explicit interior choice sets; trivial layer shapes."""
    n_layers = len(interior_sets) + 1
    if params is None:
        params = [LayerParams(8, 8, 1, 1) for _ in range(n_layers)]
    layers = []
    for i in range(n_layers):
        if i < len(interior_sets):
            layers.append((params[i], list(interior_sets[i])))
        else:
            layers.append((params[i], [output_channels]))
    return SearchSpace.from_layers(layers, input_channels, output_channels)


def random_space(rng: np.random.Generator, max_layers=6, max_choices=5) -> SearchSpace:
    n_interior = int(rng.integers(1, max_layers))
    sets = []
    for _ in range(n_interior):
        n = int(rng.integers(2, max_choices + 1))
        choices = rng.choice(np.arange(4, 260, 4), size=n, replace=False)
        sets.append(sorted(int(c) for c in choices))
    return make_space(sets)


def random_energy(rng: np.random.Generator, space: SearchSpace,
                  gamma: float | None = None) -> ChainEnergy:
    unaries = tuple(
        rng.uniform(0.0, 1.0, size=len(space.choice_sets[k]))
        for k in range(1, space.n_boundaries - 1)
    )
    pairwise = tuple(
        rng.uniform(0.05, 1.0, size=(len(space.choice_sets[i]), len(space.choice_sets[i + 1])))
        for i in range(space.n_layers)
    )
    if gamma is None:
        gamma = float(rng.uniform(0.0, 2.0))
    return ChainEnergy(choice_sets=space.choice_sets, unaries=unaries,
                       pairwise=pairwise, gamma=gamma)


def random_table(rng: np.random.Generator, space: SearchSpace,
                 monotone: bool = True) -> LatencyTable:
    entries = []
    for i in range(space.n_layers):
        shape = (len(space.choice_sets[i]), len(space.choice_sets[i + 1]))
        if monotone:
            inc = rng.uniform(0.02, 0.1, size=shape)
            mat = np.cumsum(np.cumsum(inc, axis=0), axis=1)
        else:
            mat = rng.uniform(0.05, 1.0, size=shape)
        entries.append(mat)
    return LatencyTable(choice_sets=space.choice_sets, entries=tuple(entries))


# ---------------------------------------------------------------------------
# enumeration oracles


def all_index_rows(choice_sets) -> np.ndarray:
    """Every index combination, one row each, in lexicographic order."""
    sizes = [len(s) for s in choice_sets]
    grids = np.meshgrid(*[np.arange(n) for n in sizes], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def all_energies(energy: ChainEnergy) -> tuple[np.ndarray, np.ndarray]:
    rows = all_index_rows(energy.choice_sets)
    values = np.zeros(len(rows))
    for k, u in enumerate(energy.unaries):
        values += u[rows[:, k + 1]]
    for j, p in enumerate(energy.pairwise):
        values += energy.gamma * p[rows[:, j], rows[:, j + 1]]
    return rows, values


def rows_to_config(energy_or_sets, row) -> tuple[int, ...]:
    sets = getattr(energy_or_sets, "choice_sets", energy_or_sets)
    return tuple(sets[k][i] for k, i in enumerate(row))


def brute_force_decode(energy: ChainEnergy):
    """Exhaustive minimizer; first row under lexicographic order wins ties."""
    rows, values = all_energies(energy)
    idx = int(np.argmin(values))
    return rows_to_config(energy, rows[idx]), float(values[idx])


def brute_force_marginals(energy: ChainEnergy, temperature: float):
    """Exact Gibbs marginals by full enumeration of the partition function."""
    rows, values = all_energies(energy)
    w = np.exp(-(values - values.min()) / temperature)
    w /= w.sum()
    out = []
    for k, choices in enumerate(energy.choice_sets):
        out.append(np.bincount(rows[:, k], weights=w, minlength=len(choices)))
    return out


def brute_force_pair_marginals(energy: ChainEnergy, temperature: float, layer: int):
    rows, values = all_energies(energy)
    w = np.exp(-(values - values.min()) / temperature)
    w /= w.sum()
    n_in = len(energy.choice_sets[layer])
    n_out = len(energy.choice_sets[layer + 1])
    flat = rows[:, layer] * n_out + rows[:, layer + 1]
    return np.bincount(flat, weights=w, minlength=n_in * n_out).reshape(n_in, n_out)


def trap_instance():
    """Instance where myopic trimming walks past the constrained optimum.

    Trimming the third interior boundary costs the most error but buys 20x
    the latency of the cheap trims; a target just under the max latency can
    only be met by taking it.  Greedy trims the two cheap boundaries first
    (smallest error increase), pays for them, and then has to take the big
    trim anyway: error 0.09 against the optimum's 0.05 at (16, 16, 8).
    """
    space = make_space([[8, 16], [8, 16], [8, 16]], input_channels=4, output_channels=4)
    entries = (
        np.array([[0.5, 0.7]]),
        np.array([[0.5, 0.7], [0.5, 0.7]]),
        np.array([[0.5, 4.5], [0.5, 4.5]]),
        np.array([[0.5], [0.5]]),
    )
    table = LatencyTable(choice_sets=space.choice_sets, entries=entries)
    g = [[0.02, 0.0], [0.02, 0.0], [0.05, 0.0]]
    target_ms = 2.5
    optimum = (4, 16, 16, 8, 4)
    return space, table, g, target_ms, optimum


def brute_force_constrained(unaries, table: LatencyTable, target_ms: float):
    """argmin of the unary sum over configurations meeting the latency target.

    Returns (config, unary_sum) or None when no configuration is feasible.
    """
    sets = table.choice_sets
    rows = all_index_rows(sets)
    usum = np.zeros(len(rows))
    for k, u in enumerate(unaries):
        usum += np.asarray(u)[rows[:, k + 1]]
    lat = np.zeros(len(rows))
    for j, p in enumerate(table.entries):
        lat += p[rows[:, j], rows[:, j + 1]]
    feasible = lat <= target_ms
    if not feasible.any():
        return None
    usum = np.where(feasible, usum, np.inf)
    idx = int(np.argmin(usum))
    return rows_to_config(sets, rows[idx]), float(usum[idx])
