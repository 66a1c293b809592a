import pickle
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from cfp.errors import DomainError, KernelFileError
from cfp.kernels import (
    FunctionKernel,
    SolvableKernel,
    TabulatedKernel,
    check_homogeneity,
    deterministic_chain_kernel,
    example_kernel,
    induced_v,
    kernel_tables,
    level_rates,
    product_kernel,
    rate_summary,
    state_rate,
)
from cfp.partitions import Partition, coagulation_moves, enumerate_partitions, fragmentation_moves, level_slice, moves


def _one(i, j):
    return 1


def test_state_rate_same_size_pairs():
    kernel = FunctionKernel(_one, _one)
    move = coagulation_moves(Partition.singletons(4))[0]
    assert (move.i, move.j) == (1, 1)
    assert state_rate(kernel, move) == 6


def test_state_rate_solvable_example(additive_kernel):
    move = coagulation_moves(Partition((1, 0, 1, 0)))[0]
    assert state_rate(additive_kernel, move) == 4


def test_state_rate_single_block_fragment(constant_kernel):
    for move in fragmentation_moves(Partition.single_block(5)):
        assert state_rate(constant_kernel, move) == constant_kernel.phi(move.i, move.j)


def test_rate_summary_level_totals(constant_kernel):
    for eta in level_slice(4, 2):
        summary = rate_summary(constant_kernel, eta)
        assert summary.coag_total == 2
        assert summary.frag_total == 2
    assert rate_summary(constant_kernel, Partition.singletons(4)).frag_total == 0
    assert rate_summary(constant_kernel, Partition.single_block(4)).coag_total == 0


def test_gibbs_fragmentation_rates(constant_kernel):
    assert constant_kernel.phi(1, 2) == 2
    assert constant_kernel.phi(1, 3) == 2
    assert constant_kernel.phi(2, 2) == 1
    assert constant_kernel.phi(1, 1) == 1
    assert induced_v(constant_kernel, 1) == 0
    assert induced_v(constant_kernel, 3) == 2
    assert induced_v(constant_kernel, 4) == 3


@pytest.mark.parametrize("a, b, phi11", [(0, 2, 1), (1, 0, 1), (1, 1, 1), (Fraction(1, 2), 3, 2)])
def test_induced_v_is_linear(a, b, phi11):
    kernel = SolvableKernel(a, b, phi11)
    for k in range(2, 9):
        assert induced_v(kernel, k) == phi11 * (k - 1)


@pytest.mark.parametrize("a, b, phi11", [(0, 2, 1), (1, 0, 1), (1, 1, 1), (Fraction(1, 2), 3, 1), (1, 0, 0)])
def test_solvable_kernels_are_homogeneous(a, b, phi11):
    report = check_homogeneity(SolvableKernel(a, b, phi11), 8)
    assert report.homogeneous
    assert report.violation_count == 0


@settings(max_examples=40, deadline=None)
@given(
    a=st.fractions(min_value=0, max_value=3, max_denominator=4),
    b=st.fractions(min_value=0, max_value=3, max_denominator=4),
    phi11=st.fractions(min_value=0, max_value=2, max_denominator=3),
    n=st.integers(min_value=2, max_value=12),
)
def test_solvable_homogeneity_across_sizes(a, b, phi11, n):
    if 2 * a + b == 0:
        b = Fraction(1)
    report = check_homogeneity(SolvableKernel(a, b, phi11), n)
    assert report.homogeneous, report.inhomogeneous_levels


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=10), st.data())
def test_state_rates_ignore_label_order(n, data):
    eta = data.draw(st.sampled_from(enumerate_partitions(n)))
    for kernel in (SolvableKernel(Fraction(1, 2), 3, 2), product_kernel()):
        for m in moves(eta):
            assert state_rate(kernel, m.swapped()) == state_rate(kernel, m)


def test_level_rates_match_enumeration(half_kernel):
    n = 7
    closed = level_rates(half_kernel, n)
    for r in range(1, n + 1):
        for eta in level_slice(n, r):
            assert rate_summary(half_kernel, eta) == closed[r]


def test_example_kernel_homogeneity_threshold():
    assert 3 not in check_homogeneity(example_kernel(2), 5).inhomogeneous_levels
    report = check_homogeneity(example_kernel(3), 5)
    assert 3 in report.inhomogeneous_levels
    pairs = {(tuple(w.eta), tuple(w.eta_prime)) for w in report.witnesses if w.r == 3}
    assert ((2, 0, 1, 0, 0), (1, 2, 0, 0, 0)) in pairs or ((1, 2, 0, 0, 0), (2, 0, 1, 0, 0)) in pairs


def test_product_kernel_inhomogeneous():
    report = check_homogeneity(product_kernel(), 4)
    assert not report.homogeneous
    witness = next(w for w in report.witnesses if w.r == 2 and w.quantity == "coagulation")
    assert {witness.value.exact, witness.value_prime.exact} == {"3", "4"}


def _ij(i, j):
    return i * j


def test_witness_cap_keeps_full_count():
    report = check_homogeneity(product_kernel(), 10, witness_cap=1)
    assert max(Counter(w.r for w in report.witnesses).values()) == 1
    assert report.violation_count > len(report.witnesses)


def test_witness_cap_is_shared_by_both_quantities():
    kernel = FunctionKernel(_ij, _ij)
    uncapped = check_homogeneity(kernel, 6)
    assert {w.quantity for w in uncapped.witnesses if w.r == 3} == {"coagulation", "fragmentation"}
    capped = check_homogeneity(kernel, 6, witness_cap=2)
    assert max(Counter(w.r for w in capped.witnesses).values()) == 2
    assert capped.violation_count == uncapped.violation_count


def test_homogeneity_needs_two():
    with pytest.raises(DomainError):
        check_homogeneity(product_kernel(), 1)


def test_asymmetric_kernel_rejected():
    kernel = FunctionKernel(lambda i, j: i, _one)
    with pytest.raises(DomainError):
        kernel.psi(1, 2)


def test_negative_rate_rejected():
    kernel = FunctionKernel(lambda i, j: -1, _one)
    with pytest.raises(DomainError):
        kernel.psi(1, 1)


def test_solvable_parameter_checks():
    with pytest.raises(DomainError):
        SolvableKernel(-1, 5, 1)
    with pytest.raises(DomainError):
        SolvableKernel(1, -3, 1)
    with pytest.raises(DomainError):
        SolvableKernel(1, 0, -1)


def test_boundary_kernel_needs_fragmentation_weights():
    with pytest.raises(DomainError):
        SolvableKernel(1, -2, 1)
    kernel = SolvableKernel(1, -2, 1, frag_a=0, frag_b=2)
    assert kernel.boundary
    assert kernel.psi(1, 1) == 0
    assert kernel.phi(1, 1) == 1
    assert SolvableKernel(1, -2, 0).boundary


def test_deterministic_chain_rates():
    kernel = deterministic_chain_kernel(1)
    assert kernel.phi(1, 3) == 3
    assert kernel.phi(2, 2) == 0
    assert induced_v(kernel, 4) == 3


def test_tabulated_kernel_from_csv(kernel_csv):
    path = kernel_csv("i,j,psi,phi\n1,1,2,1\n1,2,2,1/2\n2,1,2,1/2\n")
    kernel = TabulatedKernel.from_csv(path)
    assert kernel.psi(2, 1) == 2
    assert kernel.phi(1, 2) == Fraction(1, 2)
    assert kernel.psi(2, 2) == 0
    assert [row["phi"] for row in kernel.to_rows()] == ["1", "1/2"]


@pytest.mark.parametrize(
    "text",
    [
        "i,j,psi\n1,1,1\n",
        "i,j,psi,phi\n1,1,1\n",
        "i,j,psi,phi\n1,1,x,1\n",
        "i,j,psi,phi\n0,1,1,1\n",
        "i,j,psi,phi\n1,1,-1,1\n",
        "i,j,psi,phi\n1,2,1,1\n2,1,3,1\n",
    ],
)
def test_tabulated_kernel_rejects_bad_files(kernel_csv, text):
    with pytest.raises(KernelFileError):
        TabulatedKernel.from_csv(kernel_csv(text))


def test_tabulated_kernel_missing_file(tmp_path):
    with pytest.raises(KernelFileError):
        TabulatedKernel.from_csv(str(tmp_path / "missing.csv"))


def test_kernel_tables_symmetric(half_kernel):
    psi, phi = kernel_tables(half_kernel, 6)
    assert psi.shape == (7, 7)
    assert psi[2, 3] == psi[3, 2] == pytest.approx(float(half_kernel.psi(2, 3)))
    assert phi[1, 5] == pytest.approx(float(half_kernel.phi(1, 5)))
    assert psi[4, 4] == 0


def test_kernels_pickle(half_kernel):
    for kernel in (half_kernel, example_kernel(2), deterministic_chain_kernel(1), product_kernel()):
        kernel.psi(1, 1)
        clone = pickle.loads(pickle.dumps(kernel))
        assert clone.describe() == kernel.describe()
        assert clone.psi(2, 3) == kernel.psi(2, 3)
        assert clone.phi(1, 3) == kernel.phi(1, 3)
