import numpy as np
import pytest

from helpers import make_space, random_space, random_table

from widthsearch import (
    BenchmarkSample,
    CoverageError,
    FitOptions,
    InputError,
    SyntheticDevice,
    assemble,
    enumerate_configs,
    fit,
    fit_with_validation,
    plan_next,
    predict,
    predict_batch,
    record_visit,
    uniform_config,
    zero_counts,
)


def plan_samples(device, space, rounds=1):
    """Benchmark along planned configurations until every entry is visited."""
    counts = zero_counts(space)
    samples = []
    while min(int(c.min()) for c in counts) < rounds:
        config = plan_next(counts, space)
        record_visit(counts, config, space)
        samples.append(device.measure(config))
    return samples


def test_assemble_single_sample_structure():
    space = make_space([[4, 8]], input_channels=3, output_channels=5)
    sample = BenchmarkSample(config=(3, 8, 5), latency_ms=1.5)
    system = assemble([sample], space)
    assert system.a.shape == (1, 1 * 2 + 2 * 1)
    row = system.a.toarray()[0]
    assert row.sum() == 2  # one entry per layer
    assert system.l[0] == 1.5


def test_assemble_monotonicity_row_counts():
    # 2x2 interior table: two fixed-output pairs plus two fixed-input pairs
    space = make_space([[4, 8], [4, 8]])
    sample = BenchmarkSample(config=(2, 4, 4, 2), latency_ms=1.0)
    system = assemble([sample], space)
    per_layer = []
    offsets = system.layer_offsets
    v = system.v.toarray()
    for i in range(space.n_layers):
        block = v[:, offsets[i]:offsets[i + 1]]
        per_layer.append(int((block != 0).any(axis=1).sum()))
    assert per_layer == [1, 4, 1]
    # every row is one +1 and one -1
    assert np.all(np.sort(v[v.any(axis=1)], axis=1)[:, 0] == -1)
    assert np.all((v != 0).sum(axis=1) == 2)


def test_assemble_keeps_duplicate_samples():
    space = make_space([[4, 8]])
    sample = BenchmarkSample(config=(2, 4, 2), latency_ms=1.0)
    system = assemble([sample, sample], space)
    assert system.a.shape[0] == 2
    assert np.array_equal(system.a.toarray()[0], system.a.toarray()[1])


def test_assemble_rejects_empty_and_invalid():
    space = make_space([[4, 8]])
    with pytest.raises(InputError):
        assemble([], space)
    with pytest.raises(ValueError):
        assemble([BenchmarkSample(config=(2, 5, 2), latency_ms=1.0)], space)


def test_predict_zero_table_and_simple_sum():
    space = make_space([[4, 8]])
    zero = random_table(np.random.default_rng(0), space)
    zero = zero.__class__(
        choice_sets=zero.choice_sets,
        entries=tuple(np.zeros_like(m) for m in zero.entries),
    )
    assert predict(zero, (2, 4, 2)) == 0.0
    mats = (np.array([[0.5, 0.7]]), np.array([[1.5], [2.5]]))
    table = zero.__class__(choice_sets=space.choice_sets, entries=mats)
    assert predict(table, (2, 4, 2)) == 2.0
    assert predict(table, (2, 8, 2)) == pytest.approx(0.7 + 2.5)


def test_predict_batch_matches_scalar():
    rng = np.random.default_rng(1)
    space = random_space(rng)
    table = random_table(rng, space)
    configs = [uniform_config(space, rng) for _ in range(40)]
    batch = predict_batch(table, configs)
    for config, value in zip(configs, batch):
        assert value == pytest.approx(predict(table, config), rel=1e-12)


def test_per_layer_shift_leaves_predictions_unchanged():
    rng = np.random.default_rng(2)
    space = random_space(rng, max_layers=4)
    table = random_table(rng, space)
    entries = [m.copy() for m in table.entries]
    entries[0] = entries[0] + 0.37
    entries[-1] = entries[-1] - 0.37
    shifted = table.__class__(choice_sets=table.choice_sets, entries=tuple(entries))
    for _ in range(50):
        config = uniform_config(space, rng)
        assert predict(shifted, config) == pytest.approx(predict(table, config), rel=1e-12)


def split_samples(samples, frac, seed):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_val = max(1, int(round(frac * len(samples))))
    val_idx = set(order[:n_val].tolist())
    train = [s for j, s in enumerate(samples) if j not in val_idx]
    val = [s for j, s in enumerate(samples) if j in val_idx]
    return train, val


def heldout_rmse(table, val):
    pred = predict_batch(table, [s.config for s in val])
    measured = np.array([s.latency_ms for s in val])
    return float(np.sqrt(np.mean(((pred - measured) / measured) ** 2)))


def test_fit_exact_recovery_noiseless():
    space = make_space([[4, 8, 16], [8, 16, 24, 32], [4, 8, 16]])
    device = SyntheticDevice.random(space, seed=5, noise=0.0)
    samples = plan_samples(device, space, rounds=3)
    train, val = split_samples(samples, 0.25, seed=0)
    result = fit(assemble(train, space), FitOptions(lam=0.0), allow_partial=True)
    assert heldout_rmse(result.table, val) <= 1e-6


def test_fit_noisy_recovery_within_tolerance():
    space = make_space([[4, 8, 16], [8, 16, 24, 32], [4, 8, 16]])
    device = SyntheticDevice.random(space, seed=6, noise=0.01)
    samples = plan_samples(device, space, rounds=4)
    train, val = split_samples(samples, 0.25, seed=0)
    result = fit(assemble(train, space), FitOptions(lam=0.0), allow_partial=True)
    assert heldout_rmse(result.table, val) <= 0.03


def test_fit_strong_prior_drives_hinge_to_zero_without_hurting_rmse():
    space = make_space([[4, 8, 16], [8, 16, 24], [4, 8]])
    device = SyntheticDevice.random(space, seed=7, noise=0.02)
    samples = plan_samples(device, space, rounds=4)
    train, val = split_samples(samples, 0.25, seed=0)
    system = assemble(train, space)
    base = fit(system, FitOptions(lam=0.0), allow_partial=True)
    strong = fit(system, FitOptions(lam=1000.0), allow_partial=True)
    x = np.concatenate([m.ravel() for m in strong.table.entries])
    assert strong.hinge_mass <= 1e-6 * np.abs(x).sum()
    assert heldout_rmse(strong.table, val) <= heldout_rmse(base.table, val) * 1.2


def test_fit_objective_history_is_monotone():
    space = make_space([[4, 8, 16], [8, 16, 24]])
    device = SyntheticDevice.random(space, seed=8, noise=0.05)
    samples = plan_samples(device, space, rounds=3)
    result = fit(assemble(samples, space), FitOptions(lam=50.0))
    hist = np.array(result.objective_history)
    assert np.all(np.diff(hist) <= 1e-9 * np.maximum(1.0, hist[:-1]))


def test_fit_hinge_mass_vanishes_as_lambda_doubles():
    space = make_space([[4, 8, 16], [8, 16, 24]])
    device = SyntheticDevice.random(space, seed=9, noise=0.05)
    samples = plan_samples(device, space, rounds=3)
    system = assemble(samples, space)
    masses = []
    lam = 1.0
    for _ in range(8):
        masses.append(fit(system, FitOptions(lam=lam)).hinge_mass)
        lam *= 2.0
    assert masses[-1] <= 1e-8 or masses[-1] <= masses[0] * 1e-3


def test_fit_lambda_zero_is_least_squares():
    space = make_space([[4, 8]])
    samples = [
        BenchmarkSample((2, 4, 2), 1.0),
        BenchmarkSample((2, 8, 2), 2.0),
        BenchmarkSample((2, 4, 2), 1.2),
    ]
    result = fit(assemble(samples, space), FitOptions(lam=0.0))
    assert predict(result.table, (2, 4, 2)) == pytest.approx(1.1, abs=1e-9)
    assert predict(result.table, (2, 8, 2)) == pytest.approx(2.0, abs=1e-9)


def test_fit_coverage_error_and_allow_partial():
    space = make_space([[4, 8]])
    samples = [BenchmarkSample((2, 4, 2), 1.0)]
    system = assemble(samples, space)
    with pytest.raises(CoverageError) as err:
        fit(system, FitOptions())
    assert (0, 2, 8) in err.value.missing
    result = fit(system, FitOptions(), allow_partial=True)
    assert result.table.coverage is not None
    assert not result.table.coverage[0][0, 1]  # the (2, 8) entry was never seen
    assert result.table.entries[0][0, 1] == 0.0
    assert predict(result.table, (2, 4, 2)) == pytest.approx(1.0, abs=1e-9)


def test_fit_with_validation_prefers_prior_on_monotone_truth():
    space = make_space([[4, 8, 16], [8, 16, 24, 32], [4, 8, 16]])
    device = SyntheticDevice.random(space, seed=11, noise=0.01)
    samples = plan_samples(device, space, rounds=4)
    result, report = fit_with_validation(samples, space, seed=1)
    assert report["selected_lambda"] > 0
    x = np.concatenate([m.ravel() for m in result.table.entries])
    assert result.hinge_mass <= 1e-6 * np.abs(x).sum()


def test_plan_next_all_zero_counts_covers_every_layer():
    space = make_space([[4, 8], [4, 8, 16]])
    counts = zero_counts(space)
    config = plan_next(counts, space)
    # every edge on the path has the minimum count, so the energy is -n
    from widthsearch import ChainEnergy, decode

    pairwise = tuple(-(c == 0).astype(float) for c in counts)
    unaries = tuple(np.zeros(len(s)) for s in space.choice_sets[1:-1])
    _, value = decode(ChainEnergy(space.choice_sets, unaries, pairwise, 1.0))
    assert value == -space.n_layers
    assert config == space.min_config  # lexicographic tie-break


def test_plan_next_targets_single_uncovered_entry():
    space = make_space([[4, 8], [4, 8]])
    counts = zero_counts(space)
    for config in enumerate_configs(space, cap=100):
        record_visit(counts, config, space)
    counts[1][1, 0] -= 1  # make (8 -> 4) at the middle layer the unique minimum
    config = plan_next(counts, space)
    assert config[1] == 8 and config[2] == 4


def test_plan_next_reaches_full_coverage():
    space = make_space([[4, 8, 16], [8, 16, 24, 32], [4, 8, 16], [4, 8]])
    counts = zero_counts(space)
    n_entries = sum(c.size for c in counts)
    min_counts = []
    for _ in range(n_entries):
        config = plan_next(counts, space)
        record_visit(counts, config, space)
        min_counts.append(min(int(c.min()) for c in counts))
        if min_counts[-1] >= 1:
            break
    assert min_counts[-1] >= 1
    assert np.all(np.diff(min_counts) >= 0)
