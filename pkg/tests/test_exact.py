import math
from fractions import Fraction

import numpy as np
import pytest

from cfp.errors import CapacityError, DomainError
from cfp.exact import (
    DistributionVector,
    absorbing_states,
    admissible_initial,
    build_generator,
    classify_weights,
    conditional_snapshot,
    evolve,
    factorization_deviation,
    geometric_grid,
    growth_constant,
    induced_rates,
    invariant_closed_form,
    is_irreducible,
    point_mass,
    stationary_measure,
    weight_asymptotics,
)
from cfp.gibbs import GibbsModel
from cfp.kernels import SolvableKernel, example_kernel, level_rates
from cfp.partitions import Partition


def test_two_state_generator(constant_kernel):
    gen = build_generator(constant_kernel, 2)
    assert gen.states == (Partition((2, 0)), Partition((0, 1)))
    np.testing.assert_allclose(gen.matrix.toarray(), [[-2.0, 2.0], [1.0, -1.0]])


def test_generator_rows_sum_to_zero(half_kernel):
    gen = build_generator(half_kernel, 8)
    np.testing.assert_allclose(np.asarray(gen.matrix.sum(axis=1)).ravel(), 0.0, atol=1e-12)
    for i in range(gen.size):
        assert float(gen.exact_diagonal(i)) == pytest.approx(gen.matrix[i, i])


def test_generator_same_size_coagulation_entry(constant_kernel):
    gen = build_generator(constant_kernel, 4)
    i = gen.index[Partition((0, 2, 0, 0))]
    j = gen.index[Partition.single_block(4)]
    assert gen.rates[(i, j)] == 2


def test_absorbing_state_under_pure_coagulation(coagulation_only):
    gen = build_generator(coagulation_only, 5)
    top = gen.index[Partition.single_block(5)]
    assert gen.matrix[top, top] == 0
    assert absorbing_states(gen) == [Partition.single_block(5)]
    assert not is_irreducible(gen)


def test_evolve_identity_at_zero(half_kernel):
    gen = build_generator(half_kernel, 6)
    start = point_mass(gen, Partition.singletons(6))
    (d,) = evolve(gen, start, [0.0])
    np.testing.assert_allclose(d.probs, start.probs)


@pytest.mark.parametrize("method", ["uniformization", "ode"])
def test_two_state_pure_coagulation_decay(method):
    c = 3
    gen = build_generator(SolvableKernel(0, c, 0), 2)
    times = [0.1, 0.5, 1.0, 2.0]
    path = evolve(gen, point_mass(gen, Partition((2, 0))), times, method=method)
    for t, d in zip(times, path):
        assert d.probs[0] == pytest.approx(math.exp(-c * t), abs=1e-9)


def test_uniformization_agrees_with_ode(additive_kernel):
    gen = build_generator(additive_kernel, 7)
    start = point_mass(gen, Partition.singletons(7))
    times = [0.05, 0.3, 1.5]
    uni = evolve(gen, start, times)
    ode = evolve(gen, start, times, method="ode")
    for u, o in zip(uni, ode):
        np.testing.assert_allclose(u.probs, o.probs, atol=1e-8)


def test_long_time_limit_is_stationary(constant_kernel):
    gen = build_generator(constant_kernel, 6)
    pi = stationary_measure(gen, constant_kernel).distribution.probs
    (d,) = evolve(gen, point_mass(gen, Partition.single_block(6)), [60.0])
    assert 0.5 * np.abs(d.probs - pi).sum() < 1e-8


def test_evolve_rejects_bad_input(constant_kernel):
    gen = build_generator(constant_kernel, 3)
    bad = DistributionVector(0.0, np.full(gen.size, 0.5), gen.states)
    with pytest.raises(DomainError):
        evolve(gen, bad, [1.0])
    with pytest.raises(DomainError):
        evolve(gen, point_mass(gen, Partition.singletons(3)), [-1.0])
    with pytest.raises(DomainError):
        evolve(gen, point_mass(gen, Partition.singletons(3)), [1.0], method="euler")


def test_point_mass_snapshot(constant_kernel):
    gen = build_generator(constant_kernel, 5)
    snap = conditional_snapshot(point_mass(gen, Partition.single_block(5)))
    assert snap.level_mass[1] == 1.0
    assert snap.q == {1: {Partition.single_block(5): 1.0}}
    assert snap.absent == (2, 3, 4, 5)
    record = snap.to_record()
    assert record.Q == {"1": {"5^1": 1.0}}
    assert record.absent_levels == [2, 3, 4, 5]


@pytest.mark.parametrize("a, b", [(0, 2), (1, 0), (1, 1), (Fraction(1, 2), 3)])
def test_factorization_is_preserved(a, b):
    n = 7
    kernel = SolvableKernel(a, b, 1)
    model = GibbsModel.for_kernel(kernel, n)
    gen = build_generator(kernel, n)
    starts = [
        point_mass(gen, Partition.single_block(n)),
        point_mass(gen, Partition.singletons(n)),
        admissible_initial(gen, model, {2: 0.3, 4: 0.7}),
    ]
    times = [0.0] + geometric_grid(5.0, 8)
    for start in starts:
        for d in evolve(gen, start, times):
            assert factorization_deviation(conditional_snapshot(d), model) < 1e-6


def test_factorization_breaks_for_inhomogeneous_kernel():
    n = 5
    gen = build_generator(example_kernel(3), n)
    probs = np.zeros(gen.size)
    first, second = Partition((2, 0, 1, 0, 0)), Partition((1, 2, 0, 0, 0))
    probs[gen.index[first]] = probs[gen.index[second]] = 0.5
    (d,) = evolve(gen, DistributionVector(0.0, probs, gen.states), [1.0])
    q3 = conditional_snapshot(d).q[3]
    expected = 1.0 / (1.0 + math.exp(-1.0))
    assert q3[first] == pytest.approx(expected, abs=1e-8)
    assert abs(q3[first] - 0.5) > 1e-3


def test_induced_rates_follow_level_totals(half_kernel):
    n = 6
    gen = build_generator(half_kernel, n)
    totals = level_rates(half_kernel, n)
    (d,) = evolve(gen, point_mass(gen, Partition.singletons(n)), [0.4])
    for r, (lam, mu) in induced_rates(gen, d).items():
        assert lam == pytest.approx(float(totals[r].frag_total))
        assert mu == pytest.approx(float(totals[r].coag_total))


def test_invariant_measure_by_hand(constant_kernel):
    nu, c_n = invariant_closed_form(constant_kernel, 3)
    assert c_n == Fraction(13, 6)
    assert nu == {
        Partition((3, 0, 0)): Fraction(1, 13),
        Partition((1, 1, 0)): Fraction(6, 13),
        Partition((0, 0, 1)): Fraction(6, 13),
    }


def test_invariant_measure_scales_with_fragmentation_rate():
    kernel = SolvableKernel(0, 2, 3)
    nu, c_n = invariant_closed_form(kernel, 3)
    assert c_n == Fraction(33, 2)
    assert nu == {
        Partition((3, 0, 0)): Fraction(3, 11),
        Partition((1, 1, 0)): Fraction(6, 11),
        Partition((0, 0, 1)): Fraction(2, 11),
    }
    result = stationary_measure(build_generator(kernel, 3), kernel)
    np.testing.assert_allclose(result.distribution.probs, [3 / 11, 6 / 11, 2 / 11], atol=1e-12)


@pytest.mark.parametrize("a, b, phi11", [(0, 2, 1), (1, 0, 1), (1, 1, 2), (0, 2, 3), (Fraction(1, 2), 3, Fraction(1, 3))])
def test_stationary_measure_matches_closed_form(a, b, phi11):
    kernel = SolvableKernel(a, b, phi11)
    result = stationary_measure(build_generator(kernel, 8), kernel)
    assert result.ergodic
    assert result.max_deviation < 1e-10
    assert result.balance_deviation < 1e-10


def test_stationary_measure_pure_coagulation(coagulation_only):
    result = stationary_measure(build_generator(coagulation_only, 4), coagulation_only)
    assert not result.ergodic
    assert result.absorbing == (Partition.single_block(4),)
    with pytest.raises(DomainError):
        invariant_closed_form(coagulation_only, 4)


def test_growth_constants():
    assert growth_constant(0, 2) == 1.0
    assert growth_constant(1, 0) == pytest.approx(math.e)
    assert classify_weights(0, 2) == (0.0, "expansive")
    assert classify_weights(1, 0) == (-1.5, "convergent")


def test_weight_asymptotics_constant_weights():
    report = weight_asymptotics(0, 2, 50)
    assert report.weight_class == "expansive"
    assert all(row.normalized == pytest.approx(1.0) for row in report.rows)


@pytest.mark.parametrize("a, b", [(1, 0), (1, 1), (Fraction(1, 2), 3), (2, -3)])
def test_weight_ratio_tends_to_growth_constant(a, b):
    report = weight_asymptotics(a, b, 400)
    assert report.weight_class == "convergent"
    assert report.rows[-2].ratio == pytest.approx(report.growth_constant, rel=1e-2)


def test_weight_asymptotics_limits():
    with pytest.raises(CapacityError):
        weight_asymptotics(1, 0, 401)
    with pytest.raises(DomainError):
        weight_asymptotics(1, -3, 10)
