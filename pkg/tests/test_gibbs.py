import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from cfp.errors import CapacityError, DomainError, StochasticityError
from cfp.gibbs import (
    GibbsModel,
    bell_direct,
    bell_product,
    closed_form_weight,
    coag_walk_prob,
    coag_walk_solve,
    frag_rate,
    frag_walk_prob,
    frag_walk_solve,
    gibbs_walk_tables,
    rescale_weights,
    verify_fixed_point,
    verify_walks,
    walk_tables_from_kernel,
    weights,
    weights_closed_form,
    weights_recursion,
)
from cfp.kernels import SolvableKernel, deterministic_chain_kernel
from cfp.partitions import Partition, coagulation_moves, fragmentation_moves, level_slice

rationals = st.fractions(min_value=0, max_value=4, max_denominator=6)


def test_constant_weights_are_one():
    assert weights_closed_form(0, 2, 10).values == (Fraction(1),) * 10


def test_additive_weights():
    seq = weights(1, 0, 8)
    assert seq[3] == Fraction(3, 2)
    assert seq[4] == Fraction(8, 3)
    for k in range(1, 9):
        assert seq[k] == Fraction(k ** (k - 1), math.factorial(k))


def test_recursion_first_steps():
    seq = weights_recursion(0, 2, 3)
    assert seq[2] == 1
    seq = weights_recursion(1, 0, 3)
    assert (seq[2], seq[3]) == (1, Fraction(3, 2))


@settings(max_examples=40, deadline=None)
@given(a=rationals, b=st.fractions(min_value=-3, max_value=4, max_denominator=6))
def test_closed_form_matches_recursion(a, b):
    if 2 * a + b <= 0:
        with pytest.raises(DomainError):
            closed_form_weight(a, b, 2)
        return
    closed = weights_closed_form(a, b, 14)
    assert closed.values == weights_recursion(a, b, 14).values
    assert closed[1] == 1
    assert all(v > 0 for v in closed.values)


def test_weight_table_cap():
    with pytest.raises(CapacityError):
        weights(1, 1, 65)
    assert weights(1, 1, 70, cap=70).K == 70
    with pytest.raises(DomainError):
        weights(1, 1, 3)[4]


def test_bell_examples():
    ones = weights(0, 2, 4)
    assert bell_direct(ones, 4, 2) == Fraction(3, 2)
    assert bell_product(0, 2, 4, 2) == Fraction(3, 2)
    for n in range(1, 9):
        assert bell_direct(weights(1, 1, n), n, n) == Fraction(1, math.factorial(n))


@pytest.mark.parametrize("a, b", [(0, 2), (1, 0), (1, 1), (Fraction(1, 2), 3), (2, -3)])
def test_bell_identity(a, b):
    model = GibbsModel.build(a, b, 9)
    assert model.bell == tuple(bell_product(a, b, 9, r) for r in range(1, 10))


def test_rho_level_constant_weights():
    model = GibbsModel.build(0, 2, 4)
    assert model.rho_level(2) == {
        Partition((1, 0, 1, 0)): Fraction(2, 3),
        Partition((0, 2, 0, 0)): Fraction(1, 3),
    }
    assert model.rho_level(4) == {Partition.singletons(4): 1}
    assert model.rho_level(1) == {Partition.single_block(4): 1}
    with pytest.raises(DomainError):
        model.rho_level(5)


def test_rho_invariant_under_rescaling():
    seq = weights(1, 1, 7)
    base = GibbsModel.from_weights(seq, 7)
    scaled = GibbsModel.from_weights(rescale_weights(seq, Fraction(5, 3)), 7)
    assert all(base.rho[r] == scaled.rho[r] for r in range(1, 8))


def test_coag_walk_examples(constant_kernel):
    only = coagulation_moves(Partition((2, 0)))
    assert [coag_walk_prob(constant_kernel, m) for m in only] == [1]
    probs = {m.target: coag_walk_prob(constant_kernel, m) for m in coagulation_moves(Partition((2, 1, 0, 0)))}
    assert probs == {Partition((1, 0, 1, 0)): Fraction(2, 3), Partition((0, 2, 0, 0)): Fraction(1, 3)}
    (move,) = coagulation_moves(Partition((0, 2, 0, 0)))
    assert coag_walk_prob(constant_kernel, move) == 1


def test_coag_walk_undefined_without_coagulation():
    kernel = SolvableKernel(0, 0, 1, frag_a=0, frag_b=2)
    move = coagulation_moves(Partition.singletons(3))[0]
    with pytest.raises(DomainError):
        coag_walk_prob(kernel, move)


def test_frag_walk_examples():
    ones = weights(0, 2, 4)
    probs = {m.target: frag_walk_prob(ones, m) for m in fragmentation_moves(Partition.single_block(4))}
    assert probs == {Partition((1, 0, 1, 0)): Fraction(2, 3), Partition((0, 2, 0, 0)): Fraction(1, 3)}
    assert sum(frag_walk_prob(ones, m) for m in fragmentation_moves(Partition((2, 1, 0, 0)))) == 1
    with pytest.raises(DomainError):
        frag_walk_prob(ones, coagulation_moves(Partition.singletons(4))[0])


def test_frag_rate_matches_kernel(half_kernel):
    seq = weights(half_kernel.a, half_kernel.b, 8)
    for eta in level_slice(8, 3):
        for m in fragmentation_moves(eta):
            assert frag_rate(half_kernel, seq, m) == eta[m.i + m.j] * half_kernel.phi(m.i, m.j)


@pytest.mark.parametrize("a, b", [(0, 2), (1, 0), (1, 1), (Fraction(1, 2), 3)])
def test_walk_rows_are_stochastic(a, b):
    tables = gibbs_walk_tables(GibbsModel.build(a, b, 8))
    for r, level in tables.items():
        for eta, row in level.items():
            assert sum(row.values()) == 1
            assert all(zeta.block_count == r + 1 for zeta in row)


def test_frag_walk_solve_tiny():
    model = GibbsModel.build(0, 2, 2)
    dist = frag_walk_solve(gibbs_walk_tables(model), 2)
    assert dist == {1: {Partition((0, 1)): 1}, 2: {Partition((2, 0)): 1}}


def test_frag_walk_solve_rejects_substochastic_rows():
    tables = gibbs_walk_tables(GibbsModel.build(0, 2, 3))
    row = tables[1][Partition.single_block(3)]
    target = next(iter(row))
    row[target] = row[target] / 2
    with pytest.raises(StochasticityError):
        frag_walk_solve(tables, 3)


@pytest.mark.parametrize("a, b", [(0, 2), (1, 0), (1, 1), (Fraction(1, 2), 3)])
def test_walks_reproduce_rho(a, b):
    model = GibbsModel.build(a, b, 8)
    for pushed in (frag_walk_solve(gibbs_walk_tables(model), 8), coag_walk_solve(SolvableKernel(a, b, 1), 8)):
        for r, level in model.rho.items():
            assert {eta: pushed[r].get(eta, 0) for eta in level} == level


@pytest.mark.parametrize("a, b", [(0, 2), (1, 0), (1, 1), (Fraction(1, 2), 3)])
def test_fixed_point_systems_hold(a, b):
    kernel = SolvableKernel(a, b, 1)
    model = GibbsModel.for_kernel(kernel, 8)
    report = verify_fixed_point(model, kernel)
    assert report.passed, report.issues[:3]
    assert {c.name for c in report.checks} == {"coagulation-balance", "fragmentation-balance", "detailed-balance"}
    assert all(c.checked > 0 for c in report.checks)
    assert verify_walks(model, kernel).passed


def test_deterministic_chain_is_not_gibbs():
    n = 6
    kernel = deterministic_chain_kernel(1)
    dist = frag_walk_solve(walk_tables_from_kernel(kernel, n), n)
    for r in range(1, n + 1):
        zeta = Partition.from_parts([n - r + 1] + [1] * (r - 1), n)
        assert dist[r] == {zeta: 1}
    report = verify_fixed_point(GibbsModel.build(0, 2, n), kernel)
    assert not report.passed
    assert any(c.name == "fragmentation-balance" and c.violations for c in report.checks)


def test_boundary_kernel_uses_fragmentation_weights():
    kernel = SolvableKernel(0, 0, 1, frag_a=1, frag_b=0)
    model = GibbsModel.for_kernel(kernel, 5)
    assert model.weights.a == 1 and model.weights.b == 0
