import math

import numpy as np
import pytest

from cfp.birthdeath import build_chain, marginal_evolve
from cfp.errors import DomainError
from cfp.exact import invariant_closed_form
from cfp.gibbs import GibbsModel
from cfp.kernels import SolvableKernel, kernel_tables, product_kernel
from cfp.models import SimConfig
from cfp.simulate import (
    Channels,
    gelation_scan,
    parse_initial,
    run_ssa,
    simulate_trajectory,
    trajectory_seed,
)


def _config(**overrides) -> SimConfig:
    values = dict(N=6, kernel="test", T=1.0, snapshots=[0.5, 1.0], trajectories=40, base_seed=7)
    values.update(overrides)
    return SimConfig(**values)


def test_parse_initial_forms():
    np.testing.assert_array_equal(parse_initial("singletons", 4), [0, 4, 0, 0, 0])
    np.testing.assert_array_equal(parse_initial("eta-star", 4), [0, 0, 0, 0, 1])
    np.testing.assert_array_equal(parse_initial("1^1 3^1", 4), [0, 1, 0, 1, 0])
    with pytest.raises(DomainError):
        parse_initial("1^2", 4)
    with pytest.raises(DomainError):
        parse_initial("5^1", 4)


def test_sim_config_validates_snapshots():
    with pytest.raises(ValueError):
        _config(snapshots=[2.0])
    with pytest.raises(ValueError):
        _config(snapshots=[1.0, 0.5])
    with pytest.raises(ValueError):
        _config(snapshots=[])


def test_channel_rates_match_state_rates(half_kernel):
    n = 6
    channels = Channels.from_tables(*kernel_tables(half_kernel, n), n)
    counts = parse_initial("1^2 2^2", n)
    rates = channels.rates(counts)
    coag_11 = next(c for c in range(rates.size) if channels.kind[c] == 0 and channels.i[c] == channels.j[c] == 1)
    assert rates[coag_11] == pytest.approx(float(half_kernel.psi(1, 1)))
    frag_11 = next(c for c in range(rates.size) if channels.kind[c] == 1 and channels.i[c] == channels.j[c] == 1)
    assert rates[frag_11] == pytest.approx(2 * float(half_kernel.phi(1, 1)))


def test_trajectory_conserves_mass(half_kernel):
    n = 10
    channels = Channels.from_tables(*kernel_tables(half_kernel, n), n)
    rng = np.random.default_rng(trajectory_seed(3, 0))
    states, events, absorbed = simulate_trajectory(
        channels, parse_initial("singletons", n), np.array([0.1, 1.0, 5.0]), rng, recompute_every=7
    )
    assert len(states) == 3
    assert events > 0 and not absorbed
    for counts in states:
        assert int(np.dot(np.arange(n + 1), counts)) == n
        assert np.all(counts >= 0)


def test_pure_coagulation_parks_in_single_block(coagulation_only):
    stats = run_ssa(_config(T=50.0, snapshots=[50.0]), coagulation_only)
    assert stats.absorbed == 40
    snap = stats.snapshots[0]
    assert snap.level_probs["1"] == 1.0
    assert snap.largest_block.mean == 6.0


def test_runs_are_reproducible(half_kernel):
    first = run_ssa(_config(), half_kernel)
    second = run_ssa(_config(), half_kernel)
    assert first.model_dump() == second.model_dump()
    other = run_ssa(_config(base_seed=8), half_kernel)
    assert other.model_dump() != first.model_dump()


def test_worker_count_does_not_change_results(half_kernel):
    serial = run_ssa(_config(workers=1), half_kernel)
    parallel = run_ssa(_config(workers=2), half_kernel)
    assert serial.snapshots == parallel.snapshots
    assert serial.events == parallel.events


def test_large_sizes_use_level_summaries():
    stats = run_ssa(_config(N=40, trajectories=10), product_kernel())
    snap = stats.snapshots[-1]
    assert snap.conditional is None
    assert sum(s.count for s in snap.conditional_summary.values()) == 10


def test_two_state_decay():
    c, t, m = 2.0, 0.4, 4000
    stats = run_ssa(_config(N=2, T=t, snapshots=[t], trajectories=m, init="singletons"), SolvableKernel(0, 2, 0))
    expected = math.exp(-c * t)
    stderr = math.sqrt(expected * (1 - expected) / m)
    assert abs(stats.snapshots[0].level_probs["2"] - expected) < 4 * stderr


SLOW_TIMES = [0.5, 1.0, 2.0]
SLOW_TRAJECTORIES = 100_000


@pytest.fixture(scope="module")
def gibbs_start_run():
    kernel = SolvableKernel(0, 2, 1)
    cfg = _config(N=6, init="eta-star", T=2.0, snapshots=SLOW_TIMES, trajectories=SLOW_TRAJECTORIES, base_seed=42, workers=4)
    return kernel, run_ssa(cfg, kernel)


@pytest.mark.slow
def test_conditional_laws_match_gibbs(gibbs_start_run):
    kernel, stats = gibbs_start_run
    model = GibbsModel.for_kernel(kernel, 6)
    for snap in stats.snapshots:
        for r in range(2, 6):
            if snap.level_probs[str(r)] * SLOW_TRAJECTORIES < 5000:
                continue
            observed = snap.conditional[str(r)]
            tv = 0.5 * sum(abs(observed.get(eta.text(), 0.0) - float(p)) for eta, p in model.rho[r].items())
            assert tv < 0.02, (snap.t, r, tv)


@pytest.mark.slow
def test_level_laws_match_marginal_chain(gibbs_start_run):
    _, stats = gibbs_start_run
    m = SLOW_TRAJECTORIES
    expected = marginal_evolve(build_chain(0, 2, 1, 6), {1: 1.0}, SLOW_TIMES)
    for k, snap in enumerate(stats.snapshots):
        for r in range(1, 7):
            p = float(expected[k, r - 1])
            stderr = max(math.sqrt(p * (1 - p) / m), 1 / m)
            assert abs(snap.level_probs[str(r)] - p) < 3 * stderr, (snap.t, r)


@pytest.mark.slow
def test_conditional_laws_do_not_drift(gibbs_start_run):
    _, stats = gibbs_start_run
    m = SLOW_TRAJECTORIES
    early, late = stats.snapshots[1], stats.snapshots[2]
    for r in range(2, 6):
        n1 = early.level_probs[str(r)] * m
        n2 = late.level_probs[str(r)] * m
        if min(n1, n2) < 5000:
            continue
        for state, q1 in early.conditional[str(r)].items():
            q2 = late.conditional[str(r)].get(state, 0.0)
            q = (q1 * n1 + q2 * n2) / (n1 + n2)
            stderr = math.sqrt(q * (1 - q) * (1 / n1 + 1 / n2))
            assert abs(q1 - q2) < 4 * stderr + 1e-12, (r, state)


@pytest.mark.slow
def test_largest_block_matches_stationary_law(constant_kernel):
    n, m = 6, 20000
    stats = run_ssa(_config(N=n, init="singletons", T=5.0, snapshots=[5.0], trajectories=m, base_seed=3), constant_kernel)
    nu, _ = invariant_closed_form(constant_kernel, n)
    expected = sum(float(p) * eta.largest_block for eta, p in nu.items())
    observed = stats.snapshots[0].largest_block
    assert abs(observed.mean - expected) < 3 * observed.stderr


def test_gelation_scan_rows():
    report = gelation_scan(0, 2, 1, [4, 6], trajectories=30, base_seed=1)
    assert report.weight_class == "expansive"
    assert [row.N for row in report.rows] == [4, 6]
    for row in report.rows:
        assert 1.0 <= row.mean_largest <= row.N
        assert row.threshold_scale == pytest.approx(math.sqrt(row.N))
