"""
End-to-end verification of one solvable kernel at one size.

Collects the exact identities (weights, Bell polynomials, homogeneity, flow
balances, walk pushforwards) and the numerical oracles (factorization of the
transient law, level marginals, stationary measure, spectral gap bounds)
into a single VerificationReport.
"""

import logging
from typing import Callable, List

import numpy as np

from cfp.birthdeath import build_chain, level_marginal, marginal_evolve, spectral_gap
from cfp.config import GAP_SLACK, STATIONARY_TOL
from cfp.errors import CFPError
from cfp.exact import (
    build_generator,
    conditional_snapshot,
    evolve,
    factorization_deviation,
    geometric_grid,
    point_mass,
    stationary_measure,
)
from cfp.gibbs import GibbsModel, verify_fixed_point, verify_walks, weights
from cfp.kernels import SolvableKernel, check_homogeneity
from cfp.models import VerificationCheck, VerificationIssue, VerificationReport
from cfp.partitions import Partition

logger = logging.getLogger(__name__)

FACTORIZATION_TOL = 1e-6
MARGINAL_TOL = 1e-8
WEIGHT_CHECK_K = 60


def _numeric(report: VerificationReport, name: str, value: float, tol: float, r: int = 0) -> None:
    ok = value < tol
    report.checks.append(VerificationCheck(name=name, checked=1, violations=0 if ok else 1))
    if not ok:
        report.passed = False
        report.issues.append(VerificationIssue(check=name, r=r, state=[], lhs=repr(value), rhs=f"< {tol}"))


def _guard(report: VerificationReport, name: str, fn: Callable[[], None]) -> None:
    try:
        fn()
    except CFPError as e:
        logger.warning(f"{name} failed: {e}")
        report.checks.append(VerificationCheck(name=name, checked=1, violations=1))
        report.issues.append(VerificationIssue(check=name, r=0, state=[], lhs=str(e), rhs="no error"))
        report.passed = False


def run_suite(kernel: SolvableKernel, n: int) -> VerificationReport:
    """All identities and oracles for kernel at size n."""
    logger.info(f"Verification suite for {kernel.describe()} at N={n}")
    report = VerificationReport(N=n, kernel=kernel.describe())
    a, b = (kernel.frag_a, kernel.frag_b) if kernel.boundary else (kernel.a, kernel.b)

    def exact_identities() -> None:
        weights(a, b, max(n, WEIGHT_CHECK_K), cap=max(n, WEIGHT_CHECK_K))
        report.checks.append(VerificationCheck(name="weights", checked=max(n, WEIGHT_CHECK_K)))
        model = GibbsModel.build(a, b, n)
        report.checks.append(VerificationCheck(name="bell", checked=n))
        homogeneity = check_homogeneity(kernel, n)
        report.checks.append(VerificationCheck(
            name="homogeneity", checked=1, violations=homogeneity.violation_count,
        ))
        if not homogeneity.homogeneous:
            report.passed = False
        merged = report.merge(verify_fixed_point(model, kernel)).merge(verify_walks(model, kernel))
        report.checks, report.issues, report.passed = merged.checks, merged.issues, merged.passed

    _guard(report, "exact-identities", exact_identities)
    if n < 2 or not report.passed:
        return report

    def dynamics() -> None:
        model = GibbsModel.for_kernel(kernel, n)
        gen = build_generator(kernel, n, max_n=n)
        chain = build_chain(kernel.a, kernel.b, kernel.phi11, n)
        if chain.ergodic:
            gap = spectral_gap(chain, with_optimal=False)
            outside = max(0.0, gap.lower - gap.numerical_gap, gap.numerical_gap - gap.upper)
            _numeric(report, "gap-bounds", outside, GAP_SLACK)
            horizon = 10.0 / gap.numerical_gap
        else:
            horizon = 10.0 / max(float(kernel.death_rate(n, n)), 1.0)
        times = [0.0] + geometric_grid(horizon, 20)

        for label, start in (("single-block", Partition.single_block(n)), ("singletons", Partition.singletons(n))):
            path = evolve(gen, point_mass(gen, start), times)
            worst = max(factorization_deviation(conditional_snapshot(d), model) for d in path)
            _numeric(report, f"factorization:{label}", worst, FACTORIZATION_TOL)

            b0 = np.zeros(n)
            b0[start.block_count - 1] = 1.0
            marginal = marginal_evolve(chain, b0, times)
            exact_levels = level_marginal(np.array([d.probs for d in path]), gen.levels(), n)
            _numeric(report, f"marginal:{label}", float(np.max(np.abs(marginal - exact_levels))), MARGINAL_TOL)

        stationary = stationary_measure(gen, kernel)
        if stationary.ergodic:
            _numeric(report, "stationary", stationary.max_deviation or 0.0, STATIONARY_TOL)
            _numeric(report, "reversibility", stationary.balance_deviation or 0.0, STATIONARY_TOL)

    _guard(report, "dynamics", dynamics)
    if report.passed:
        logger.info(f"N={n}: all {sum(c.checked for c in report.checks)} checks passed")
    return report


def run_suites(kernels: List[SolvableKernel], max_n: int) -> List[VerificationReport]:
    """Suite for every kernel and every size 2..max_n."""
    return [run_suite(kernel, n) for kernel in kernels for n in range(2, max_n + 1)]
