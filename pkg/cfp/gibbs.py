"""
Gibbs weights, partial Bell polynomials and level distributions.

For the solvable family the conditional law of the state given its block
count r is

    rho_r(eta) = B_{N,r}^{-1} prod_k a_k^{n_k} / n_k!

with weights a_k fixed by the coagulation parameters (a, b). This module
builds those objects in exact arithmetic, derives the coagulation and
fragmentation random walks between adjacent levels and checks the flow
identities that make rho_r a fixed point of the dynamics.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple, Union

from cfp.config import WEIGHT_TABLE_CAP, WITNESS_CAP
from cfp.errors import CapacityError, CFPError, DomainError, StochasticityError
from cfp.kernels import Kernel, SolvableKernel, level_rates, state_rate
from cfp.models import VerificationCheck, VerificationIssue, VerificationReport
from cfp.partitions import (
    Move,
    MoveKind,
    Partition,
    coagulation_moves,
    fragmentation_moves,
    level_slice,
)
from cfp.serialize import format_rational

logger = logging.getLogger(__name__)

Number = Union[int, Fraction]

# level r -> source state -> target state -> probability
WalkTables = Dict[int, Dict[Partition, Dict[Partition, Fraction]]]
LevelDistributions = Dict[int, Dict[Partition, Fraction]]


# ============================
# Weights
# ============================

def _check_weight_params(a: Fraction, b: Fraction) -> None:
    if a < 0 or 2 * a + b <= 0:
        raise DomainError(f"Weights need a >= 0 and 2a+b > 0, got a={a}, b={b}")


def closed_form_weight(a: Number, b: Number, k: int) -> Fraction:
    """a_k = (1/k!) prod_{r=2..k} (k a + b r / 2), a_1 = 1."""
    a, b = Fraction(a), Fraction(b)
    _check_weight_params(a, b)
    if k < 1:
        raise DomainError(f"Weight index k={k} must be >= 1")
    value = Fraction(1)
    for r in range(2, k + 1):
        value *= k * a + b * r / 2
    return value / math.factorial(k)


@dataclass(frozen=True)
class WeightSequence:
    """a_1..a_K for the parameters (a, b); scale != 1 after rescaling."""

    a: Fraction
    b: Fraction
    values: Tuple[Fraction, ...]
    scale: Fraction = Fraction(1)

    def __getitem__(self, k: int) -> Fraction:
        if not 1 <= k <= len(self.values):
            raise DomainError(f"Weight a_{k} outside the table 1..{len(self.values)}")
        return self.values[k - 1]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def K(self) -> int:
        return len(self.values)

    def pair_sum(self, k: int) -> Fraction:
        """sum over ordered pairs l + m = k of a_l a_m."""
        return sum((self[l] * self[k - l] for l in range(1, k)), Fraction(0))


def _check_table_size(K: int, cap: Optional[int]) -> None:
    limit = WEIGHT_TABLE_CAP if cap is None else cap
    if K < 1:
        raise DomainError(f"K={K} must be >= 1")
    if K > limit:
        raise CapacityError(f"K={K} exceeds the weight table cap {limit}")


def weights_closed_form(a: Number, b: Number, K: int, cap: Optional[int] = None) -> WeightSequence:
    a, b = Fraction(a), Fraction(b)
    _check_weight_params(a, b)
    _check_table_size(K, cap)
    return WeightSequence(a, b, tuple(closed_form_weight(a, b, k) for k in range(1, K + 1)))


def weights_recursion(a: Number, b: Number, K: int, cap: Optional[int] = None) -> WeightSequence:
    """a_k = (a k + b) sum_{i+j=k} a_i a_j / (2 (k - 1)), ordered pairs."""
    a, b = Fraction(a), Fraction(b)
    _check_weight_params(a, b)
    _check_table_size(K, cap)
    values: List[Fraction] = [Fraction(1)]
    for k in range(2, K + 1):
        pairs = sum((values[i - 1] * values[k - i - 1] for i in range(1, k)), Fraction(0))
        values.append((a * k + b) * pairs / (2 * (k - 1)))
    return WeightSequence(a, b, tuple(values))


def weights(a: Number, b: Number, K: int, cap: Optional[int] = None) -> WeightSequence:
    """Weight table computed both ways; the two must agree exactly."""
    closed = weights_closed_form(a, b, K, cap)
    recursive = weights_recursion(a, b, K, cap)
    if closed.values != recursive.values:
        k = next(k for k in range(1, K + 1) if closed[k] != recursive[k])
        raise CFPError(
            f"Weight identity broken at k={k} for a={a}, b={b}: "
            f"closed form {closed[k]} != recursion {recursive[k]}"
        )
    return closed


def rescale_weights(seq: WeightSequence, c: Number) -> WeightSequence:
    """a_k -> C^k a_k; leaves every rho_r unchanged."""
    c = Fraction(c)
    if c <= 0:
        raise DomainError(f"Rescaling constant must be positive, got {c}")
    values = tuple(c ** k * v for k, v in enumerate(seq.values, start=1))
    return WeightSequence(seq.a, seq.b, values, seq.scale * c)


# ============================
# Bell polynomials
# ============================

def gibbs_factor(seq: WeightSequence, eta: Partition) -> Fraction:
    """prod_k a_k^{n_k} / n_k!"""
    value = Fraction(1)
    for k, count in enumerate(eta.counts, start=1):
        if count:
            value *= seq[k] ** count / math.factorial(count)
    return value


def bell_direct(seq: WeightSequence, n: int, r: int) -> Fraction:
    if n > seq.K:
        raise DomainError(f"N={n} needs weights up to a_{n}, table has {seq.K}")
    return sum((gibbs_factor(seq, eta) for eta in level_slice(n, r)), Fraction(0))


def bell_product(a: Number, b: Number, n: int, r: int) -> Fraction:
    """B_{N,r} = prod_{l=r+1..N} mu_{l,N} / (N! (N-r)!)."""
    a, b = Fraction(a), Fraction(b)
    _check_weight_params(a, b)
    if not 1 <= r <= n:
        raise DomainError(f"Level r={r} outside 1..{n}")
    value = Fraction(1)
    for l in range(r + 1, n + 1):
        value *= Fraction(l - 1, 2) * (2 * a * n + l * b)
    return value / (math.factorial(n) * math.factorial(n - r))


# ============================
# Level distributions
# ============================

@dataclass(frozen=True, eq=False)
class GibbsModel:
    """Gibbs level distributions rho_1..rho_N for one weight table."""

    n: int
    weights: WeightSequence
    bell: Tuple[Fraction, ...]
    rho: Dict[int, Dict[Partition, Fraction]] = field(repr=False)

    @classmethod
    def from_weights(cls, seq: WeightSequence, n: int) -> "GibbsModel":
        bell: List[Fraction] = []
        rho: Dict[int, Dict[Partition, Fraction]] = {}
        for r in range(1, n + 1):
            factors = {eta: gibbs_factor(seq, eta) for eta in level_slice(n, r)}
            total = sum(factors.values(), Fraction(0))
            bell.append(total)
            rho[r] = {eta: f / total for eta, f in factors.items()}
        return cls(n=n, weights=seq, bell=tuple(bell), rho=rho)

    @classmethod
    def build(cls, a: Number, b: Number, n: int) -> "GibbsModel":
        """Model for (a, b) with the Bell identity checked on every level."""
        logger.info(f"Building Gibbs model a={a}, b={b}, N={n}")
        model = cls.from_weights(weights(a, b, n, cap=max(n, WEIGHT_TABLE_CAP)), n)
        for r in range(1, n + 1):
            product = bell_product(a, b, n, r)
            if model.bell[r - 1] != product:
                raise CFPError(
                    f"Bell identity broken at N={n}, r={r}: direct {model.bell[r - 1]} != product {product}"
                )
        return model

    @classmethod
    def for_kernel(cls, kernel: SolvableKernel, n: int) -> "GibbsModel":
        """Weights of the coagulation parameters, or of the fragmentation ones when coagulation is off."""
        if kernel.boundary:
            return cls.build(kernel.frag_a, kernel.frag_b, n)
        return cls.build(kernel.a, kernel.b, n)

    def bell_at(self, r: int) -> Fraction:
        return self.bell[r - 1]

    def rho_level(self, r: int) -> Dict[Partition, Fraction]:
        if not 1 <= r <= self.n:
            raise DomainError(f"Level r={r} outside 1..{self.n}")
        return dict(self.rho[r])


def rho_level(model: GibbsModel, r: int) -> Dict[Partition, Fraction]:
    return model.rho_level(r)


# ============================
# Random walks between levels
# ============================

def coag_walk_prob(kernel: SolvableKernel, move: Move) -> Fraction:
    """P_C(zeta -> eta) = K(zeta -> eta) / mu_{r+1,N}."""
    if move.kind is not MoveKind.COAGULATE:
        raise DomainError(f"{move.label} is not a coagulation")
    zeta = move.source
    mu = kernel.death_rate(zeta.block_count, zeta.n)
    if mu == 0:
        raise DomainError(f"Coagulation walk undefined: mu_{zeta.block_count},{zeta.n} = 0")
    return state_rate(kernel, move) / mu


def frag_rate(kernel: SolvableKernel, seq: WeightSequence, move: Move) -> Fraction:
    """Gibbs fragmentation rate F(eta -> eta_(i,j)) for the weights seq."""
    if move.kind is not MoveKind.FRAGMENT:
        raise DomainError(f"{move.label} is not a fragmentation")
    eta, i, j = move.source, move.i, move.j
    if eta.apply(move) != move.target:
        raise DomainError(f"{move.label} from {eta} does not lead to {move.target}")
    a, b = seq.a, seq.b
    if i == j:
        return kernel.phi11 * seq[i] ** 2 * eta[2 * i] / (2 * seq[2 * i]) * (2 * a * i + b)
    return kernel.phi11 * seq[i] * seq[j] * eta[i + j] / seq[i + j] * (a * (i + j) + b)


def frag_walk_prob(seq: WeightSequence, move: Move) -> Fraction:
    """Linear block selection times the Gibbs split of the chosen block.

    P_F = (k-1) n_k / (N-r) * split(i, j), k = i + j, where the split is
    a_i a_j / S_k for i != j and (a_i^2 / 2) / S_k for i == j, with
    S_k = (1/2) sum_{l+m=k} a_l a_m.
    """
    if move.kind is not MoveKind.FRAGMENT:
        raise DomainError(f"{move.label} is not a fragmentation")
    eta, i, j = move.source, move.i, move.j
    r, n = eta.block_count, eta.n
    if r == n:
        raise DomainError(f"Fragmentation walk undefined at level r=N={n}")
    k = i + j
    selection = Fraction((k - 1) * eta[k], n - r)
    half_sum = seq.pair_sum(k) / 2
    split = seq[i] * seq[j] / half_sum
    if i == j:
        split /= 2
    return selection * split


def gibbs_walk_tables(model: GibbsModel) -> WalkTables:
    """P_F rows for every state of levels 1..N-1 from the model's weights."""
    tables: WalkTables = {}
    for r in range(1, model.n):
        tables[r] = {
            eta: {m.target: frag_walk_prob(model.weights, m) for m in fragmentation_moves(eta)}
            for eta in level_slice(model.n, r)
        }
    return tables


def walk_tables_from_kernel(kernel: Kernel, n: int) -> WalkTables:
    """P_F(eta -> zeta) = F(eta -> zeta) / sum of F out of eta, any kernel."""
    tables: WalkTables = {}
    for r in range(1, n):
        level: Dict[Partition, Dict[Partition, Fraction]] = {}
        for eta in level_slice(n, r):
            rates = {m.target: state_rate(kernel, m) for m in fragmentation_moves(eta)}
            total = sum(rates.values(), Fraction(0))
            level[eta] = {} if total == 0 else {
                zeta: rate / total for zeta, rate in rates.items() if rate
            }
        tables[r] = level
    return tables


def _check_row(r: int, eta: Partition, row: Dict[Partition, Fraction]) -> None:
    if any(p < 0 for p in row.values()):
        raise StochasticityError(f"Negative probability in the row of {eta} at level {r}")
    total = sum(row.values(), Fraction(0))
    if total != 1:
        raise StochasticityError(f"Row of {eta} at level {r} sums to {total}, not 1")
    for zeta in row:
        if zeta.block_count != r + 1:
            raise StochasticityError(f"Row of {eta} leads to {zeta}, outside level {r + 1}")


def frag_walk_solve(tables: WalkTables, n: int) -> LevelDistributions:
    """Push the point mass at the single block up through the fragmentation walk.

    Args:
        tables: Row-stochastic P_F per level 1..N-1
        n: Partitioned integer

    Returns:
        The reached distribution on every level 1..N
    """
    dist: LevelDistributions = {1: {Partition.single_block(n): Fraction(1)}}
    for r in range(1, n):
        level_table = tables.get(r, {})
        nxt: Dict[Partition, Fraction] = {}
        for eta, mass in dist[r].items():
            if mass == 0:
                continue
            row = level_table.get(eta, {})
            _check_row(r, eta, row)
            for zeta, p in row.items():
                nxt[zeta] = nxt.get(zeta, Fraction(0)) + mass * p
        dist[r + 1] = nxt
    return dist


def coag_walk_solve(kernel: Kernel, n: int) -> LevelDistributions:
    """Push the point mass at all singletons down through the coagulation walk.

    Each state moves along its coagulations with probability K / (total
    coagulation outflow at that state).
    """
    dist: LevelDistributions = {n: {Partition.singletons(n): Fraction(1)}}
    for r in range(n, 1, -1):
        nxt: Dict[Partition, Fraction] = {}
        for zeta, mass in dist[r].items():
            if mass == 0:
                continue
            rates = {m.target: state_rate(kernel, m) for m in coagulation_moves(zeta)}
            total = sum(rates.values(), Fraction(0))
            if total == 0:
                raise StochasticityError(f"{zeta} has no coagulation outflow")
            for eta, rate in rates.items():
                nxt[eta] = nxt.get(eta, Fraction(0)) + mass * rate / total
        dist[r - 1] = nxt
    return dist


# ============================
# Fixed-point verification
# ============================

def _record(
    report: VerificationReport,
    check: VerificationCheck,
    ok: bool,
    issue: VerificationIssue,
) -> None:
    check.checked += 1
    if not ok:
        check.violations += 1
        report.passed = False
        if len(report.issues) < WITNESS_CAP:
            report.issues.append(issue)


def verify_fixed_point(model: GibbsModel, kernel: Kernel) -> VerificationReport:
    """Check the coagulation and fragmentation flow balances of rho exactly.

    For each level r < N and each state:
      coagulation:   mu_{r+1} rho_r(eta) = sum_zeta rho_{r+1}(zeta) K(zeta -> eta)
      fragmentation: lambda_r rho_{r+1}(zeta) = sum_eta rho_r(eta) F(eta -> zeta)
      detailed balance: rho_r(eta) P_F(eta -> zeta) = rho_{r+1}(zeta) P_C(zeta -> eta)

    Level totals come from level_rates, so non-solvable homogeneous kernels
    (for instance the deterministic chain rule) can be tested against a Gibbs
    model as well. Detailed balance is skipped where mu_{r+1} = 0.
    """
    n = model.n
    logger.info(f"Verifying fixed-point systems for {kernel.describe()} at N={n}")
    totals = level_rates(kernel, n)
    report = VerificationReport(N=n, kernel=kernel.describe())
    eq1 = VerificationCheck(name="coagulation-balance")
    eq2 = VerificationCheck(name="fragmentation-balance")
    balance = VerificationCheck(name="detailed-balance")

    for r in range(1, n):
        mu = totals[r + 1].coag_total
        lam = totals[r].frag_total
        lower, upper = model.rho[r], model.rho[r + 1]

        inflow: Dict[Partition, Fraction] = {eta: Fraction(0) for eta in lower}
        for zeta, p in upper.items():
            for m in coagulation_moves(zeta):
                inflow[m.target] += p * state_rate(kernel, m)
        for eta, p in lower.items():
            lhs = mu * p
            _record(report, eq1, lhs == inflow[eta], VerificationIssue(
                check=eq1.name, r=r, state=list(eta.counts),
                lhs=format_rational(lhs), rhs=format_rational(inflow[eta]),
            ))

        outflow: Dict[Partition, Fraction] = {zeta: Fraction(0) for zeta in upper}
        for eta, p in lower.items():
            for m in fragmentation_moves(eta):
                outflow[m.target] += p * state_rate(kernel, m)
        for zeta, p in upper.items():
            lhs = lam * p
            _record(report, eq2, lhs == outflow[zeta], VerificationIssue(
                check=eq2.name, r=r, state=list(zeta.counts),
                lhs=format_rational(lhs), rhs=format_rational(outflow[zeta]),
            ))

        if mu == 0:
            continue
        for zeta, p in upper.items():
            for m in coagulation_moves(zeta):
                eta = m.target
                forward = lower[eta] * _frag_walk_between(model.weights, eta, zeta)
                backward = p * state_rate(kernel, m) / mu
                _record(report, balance, forward == backward, VerificationIssue(
                    check=balance.name, r=r, state=list(eta.counts), other=list(zeta.counts),
                    lhs=format_rational(forward), rhs=format_rational(backward),
                ))

    report.checks = [eq1, eq2, balance]
    if report.passed:
        logger.info(f"All fixed-point identities hold at N={n}")
    else:
        logger.warning(
            f"Fixed-point identities violated at N={n}: "
            + ", ".join(f"{c.name}={c.violations}" for c in report.checks if c.violations)
        )
    return report


def _frag_walk_between(seq: WeightSequence, eta: Partition, zeta: Partition) -> Fraction:
    """P_F(eta -> zeta) summed over the fragmentations of eta that reach zeta."""
    total = Fraction(0)
    for m in fragmentation_moves(eta):
        if m.target == zeta:
            total += frag_walk_prob(seq, m)
    return total


def verify_walks(model: GibbsModel, kernel: Kernel) -> VerificationReport:
    """Both walk pushforwards must reproduce rho_r exactly."""
    n = model.n
    report = VerificationReport(N=n, kernel=kernel.describe())
    up = VerificationCheck(name="fragmentation-walk")
    down = VerificationCheck(name="coagulation-walk")
    pushed_up = frag_walk_solve(gibbs_walk_tables(model), n)
    pushed_down = coag_walk_solve(kernel, n) if level_rates(kernel, n)[n].coag_total > 0 else None
    for r in range(1, n + 1):
        for eta, p in model.rho[r].items():
            got = pushed_up[r].get(eta, Fraction(0))
            _record(report, up, got == p, VerificationIssue(
                check=up.name, r=r, state=list(eta.counts),
                lhs=format_rational(got), rhs=format_rational(p),
            ))
            if pushed_down is not None:
                got = pushed_down[r].get(eta, Fraction(0))
                _record(report, down, got == p, VerificationIssue(
                    check=down.name, r=r, state=list(eta.counts),
                    lhs=format_rational(got), rhs=format_rational(p),
                ))
    report.checks = [up, down]
    return report
