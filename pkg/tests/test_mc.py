import math

import numpy as np
import pytest

from src.core.errors import ConfigError
from src.core.grid import uniform_density
from src.core.kernel import new_kernel
from src.core.linearize import evolve_exact
from src.core.mc import (
    RING, EmpiricalCdf, McEnsemble, SamplerSpec, aggregate_replicas, empirical_rescaled, init_ensemble,
    ks_distance, ks_two_sample, run_replicas, run_until, step,
)

UNIFORM = SamplerSpec(kind="uniform", low=1.0, high=2.0)


def _sample_reference(reference, n, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    cum = np.maximum.accumulate(reference.cdf())
    cum = cum / cum[-1]
    y = np.interp(rng.random(n), cum, reference.y)
    return EmpiricalCdf(y=np.sort(y), F=np.arange(1, n + 1) / n, cutoff=1.0)


def test_constant_sampler():
    ens = init_ensemble(4, SamplerSpec(kind="constant", value=1.5), seed=0)
    assert ens.lengths.tolist() == [1.5] * 4
    assert ens.total_length() == 6.0
    assert ens.cutoff == 1.0


def test_uniform_sampler_mean():
    ens = init_ensemble(100000, UNIFORM, seed=3)
    assert abs(ens.lengths.mean() - 1.5) <= 0.005


@pytest.mark.parametrize('kwargs', [
    {"kind": "constant", "value": 0.5},
    {"kind": "uniform", "low": 0.5, "high": 2.0},
    {"kind": "exponential", "scale": 0.0},
    {"kind": "lognormal"},
])
def test_sampler_rejects_values_below_one(kwargs):
    with pytest.raises(ConfigError):
        SamplerSpec(**kwargs)


def test_sampler_parse():
    assert SamplerSpec.parse("uniform:1,3") == SamplerSpec(kind="uniform", low=1.0, high=3.0)
    assert SamplerSpec.parse("constant:2").value == 2.0
    assert SamplerSpec.parse("exponential").scale == 1.0
    with pytest.raises(ConfigError):
        SamplerSpec.parse("uniform:1")


def test_seed_reproduces_ensemble():
    a = init_ensemble(1000, UNIFORM, seed=7)
    b = init_ensemble(1000, UNIFORM, seed=7)
    assert a.lengths.tobytes() == b.lengths.tobytes()
    assert a.rng_algorithm == "numpy.random.Philox"


def test_seed_reproduces_event_log(square):
    logs = []
    for _ in range(2):
        ens = init_ensemble(2000, UNIFORM, seed=11)
        run_until(ens, square, 3.0)
        logs.append(ens.events)
    assert logs[0] == logs[1]


def test_forced_merge(square):
    ens = McEnsemble.from_lengths([1.0, 2.0, 3.0])
    run_until(ens, square, 2.0, min_population=1)
    assert ens.lengths.tolist() == [6.0]
    assert ens.events == [(1.0, 2, 6.0)]
    assert ens.cutoff == 6.0


def test_population_and_length_bookkeeping(square):
    ens = init_ensemble(20000, UNIFORM, seed=1)
    run_until(ens, square, 4.0)
    assert ens.count == ens.initial_count - sum(j for _, j, _ in ens.events)
    assert ens.event_count == len(ens.events)
    assert abs(ens.total_length() - ens.initial_total) / ens.initial_total <= 1e-9
    assert abs(ens.rounding_drift()) <= 1e-9 * ens.initial_total


def test_cutoff_is_monotone(square):
    ens = init_ensemble(5000, UNIFORM, seed=2)
    run_until(ens, square, 3.0)
    minima = [m for m, _, _ in ens.events]
    assert all(b >= a for a, b in zip(minima, minima[1:]))
    assert np.min(ens.lengths) == ens.cutoff >= 3.0


def test_mixed_kernel_partner_counts():
    k = new_kernel([0.5, 0.5])
    ens = init_ensemble(5000, UNIFORM, seed=4)
    run_until(ens, k, 2.0)
    counts = {j for _, j, _ in ens.events}
    assert counts == {1, 2}


def test_ring_merges_nearest_neighbours(square):
    ens = McEnsemble.from_lengths([1.0, 5.0, 2.0, 7.0, 3.0], variant=RING)
    assert step(ens, square)
    assert sorted(ens.lengths.tolist()) == [2.0, 7.0, 9.0]
    assert ens.next_id[0] == 2 and ens.next_id[2] == 3 and ens.next_id[3] == 0
    assert ens.prev_id[0] == 3


def test_ring_one_sided_merge_uses_either_side(identity):
    outcomes = set()
    for seed in range(20):
        ens = McEnsemble.from_lengths([1.0, 5.0, 2.0, 7.0, 3.0], seed=seed, variant=RING)
        step(ens, identity)
        outcomes.add(tuple(sorted(ens.lengths.tolist())))
    assert outcomes <= {(2.0, 3.0, 6.0, 7.0), (2.0, 4.0, 5.0, 7.0)}
    assert len(outcomes) == 2


def test_early_stop_below_population_floor(square):
    ens = init_ensemble(150, UNIFORM, seed=5)
    run_until(ens, square, 1e6)
    assert ens.stopped_early
    assert ens.count < 100
    assert "below floor" in ens.stop_reason


def test_target_must_exceed_cutoff(square):
    ens = init_ensemble(200, UNIFORM, seed=0)
    with pytest.raises(ConfigError):
        run_until(ens, square, 1.0)


def test_unknown_variant():
    with pytest.raises(ConfigError):
        McEnsemble.from_lengths([1.0, 2.0], variant="lattice")


def test_empirical_cdf_step_at_one(star1):
    ens = McEnsemble.from_lengths([1.0] * 10)
    emp = empirical_rescaled(ens)
    assert np.all(emp.y == 1.0)
    assert emp.F[-1] == 1.0
    assert ks_distance(emp, star1) >= 0.5


def test_ks_against_own_samples(star1):
    emp = _sample_reference(star1, 100000, seed=0)
    assert ks_distance(emp, star1) <= 0.01


def test_ks_two_sample_self_distance(star1):
    a = _sample_reference(star1, 100000, seed=1)
    b = _sample_reference(star1, 100000, seed=2)
    assert ks_two_sample(a, b) <= 0.01


def test_ks_needs_unit_mass_reference(star1):
    emp = _sample_reference(star1, 100, seed=0)
    with pytest.raises(ConfigError):
        ks_distance(emp, star1.with_values(0.5 * star1.values))


def test_replicas_fold(square, star1):
    results = run_replicas(square, 2000, UNIFORM, [0, 1], 2.0, star1, processes=1)
    summary = aggregate_replicas(results)
    assert summary["replicas"] == 2
    assert [r.seed for r in results] == [0, 1]
    assert summary["ks_max"] >= summary["ks_mean"]
    assert math.isfinite(summary["ks_stderr"])


@pytest.mark.slow
def test_mean_field_follows_kinetic_solution(square, grid):
    ens = init_ensemble(200000, UNIFORM, seed=0)
    run_until(ens, square, 8.0, record_events=False)
    assert not ens.stopped_early
    kinetic = evolve_exact(square, uniform_density(grid), float(np.log(ens.cutoff)))
    assert ks_distance(empirical_rescaled(ens), kinetic) <= 0.02
    assert abs(ens.total_length() - ens.initial_total) / ens.initial_total <= 1e-9


@pytest.mark.slow
def test_mean_field_attractor(square, star1):
    ens = init_ensemble(400000, UNIFORM, seed=0)
    run_until(ens, square, 16.0, record_events=False)
    assert not ens.stopped_early
    assert ks_distance(empirical_rescaled(ens), star1) <= 0.02
