"""
Full Kolmogorov dynamics on Omega_N.

The generator is assembled in exact arithmetic (rows checked to sum to zero)
and converted to a float sparse matrix for propagation. Distributions are
aligned with the enumeration order of cfp.partitions.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.special import gammaln

from cfp import markov
from cfp.config import ASYMPTOTICS_MAX_K, LEVEL_MASS_FLOOR, STATIONARY_TOL
from cfp.errors import CapacityError, CFPError, DomainError, SolverError
from cfp.gibbs import GibbsModel, gibbs_factor, weights_closed_form
from cfp.kernels import Kernel, SolvableKernel, rate_summary, state_rate
from cfp.models import AsymptoticsReport, AsymptoticsRow, SnapshotRecord
from cfp.partitions import Partition, enumerate_partitions, moves

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Generator:
    """Rate matrix of the process on Omega_N."""

    n: int
    kernel: str
    states: Tuple[Partition, ...]
    index: Dict[Partition, int] = field(repr=False)
    rates: Dict[Tuple[int, int], Fraction] = field(repr=False)
    coag_out: np.ndarray = field(repr=False)
    frag_out: np.ndarray = field(repr=False)
    matrix: sparse.csr_matrix = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def levels(self) -> np.ndarray:
        """Block count of every state, aligned with states."""
        return np.array([s.block_count for s in self.states])

    def exact_diagonal(self, i: int) -> Fraction:
        return -sum((v for (src, _), v in self.rates.items() if src == i), Fraction(0))


@dataclass(frozen=True, eq=False)
class DistributionVector:
    """Probabilities over Omega_N at time t."""

    t: float
    probs: np.ndarray
    states: Tuple[Partition, ...] = field(repr=False)

    def as_dict(self) -> Dict[Partition, float]:
        return {s: float(p) for s, p in zip(self.states, self.probs)}


@dataclass(frozen=True)
class ConditionalSnapshot:
    """Level masses b(r) and conditional laws Q_r at time t."""

    t: float
    level_mass: Dict[int, float]
    q: Dict[int, Dict[Partition, float]]
    absent: Tuple[int, ...] = ()

    def to_record(self) -> SnapshotRecord:
        return SnapshotRecord(
            t=self.t,
            level_mass={str(r): m for r, m in sorted(self.level_mass.items())},
            Q={
                str(r): {eta.text(): p for eta, p in table.items()}
                for r, table in sorted(self.q.items())
            },
            absent_levels=list(self.absent),
        )


# ============================
# Generator
# ============================

def build_generator(kernel: Kernel, n: int, max_n: Optional[int] = None) -> Generator:
    """Assemble the generator of the process on Omega_N.

    Args:
        kernel: Rate functions
        n: Partitioned integer
        max_n: Override of the exact-mode cap

    Returns:
        Generator with exact off-diagonal rates and a float CSR matrix
    """
    states = tuple(enumerate_partitions(n, max_n))
    index = {s: i for i, s in enumerate(states)}
    logger.info(f"Building generator for {kernel.describe()} on {len(states)} states (N={n})")

    rates: Dict[Tuple[int, int], Fraction] = {}
    coag_out = np.zeros(len(states))
    frag_out = np.zeros(len(states))
    rows, cols, vals = [], [], []
    for i, eta in enumerate(states):
        row_total = Fraction(0)
        for move in moves(eta):
            rate = state_rate(kernel, move)
            if rate == 0:
                continue
            j = index[move.target]
            rates[(i, j)] = rates.get((i, j), Fraction(0)) + rate
            row_total += rate
        summary = rate_summary(kernel, eta)
        if summary.total != row_total:
            raise CFPError(f"Outflow at {eta} is {row_total}, rate summary says {summary.total}")
        coag_out[i] = float(summary.coag_total)
        frag_out[i] = float(summary.frag_total)
        rows.append(i)
        cols.append(i)
        vals.append(-float(row_total))
    for (i, j), rate in rates.items():
        rows.append(i)
        cols.append(j)
        vals.append(float(rate))

    matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return Generator(
        n=n,
        kernel=kernel.describe(),
        states=states,
        index=index,
        rates=rates,
        coag_out=coag_out,
        frag_out=frag_out,
        matrix=matrix,
    )


def point_mass(gen: Generator, eta: Partition) -> DistributionVector:
    if eta not in gen.index:
        raise DomainError(f"{eta} is not a state of Omega_{gen.n}")
    probs = np.zeros(gen.size)
    probs[gen.index[eta]] = 1.0
    return DistributionVector(0.0, probs, gen.states)


def admissible_initial(
    gen: Generator, model: GibbsModel, level_masses: Mapping[int, float]
) -> DistributionVector:
    """rho(eta) = rho_r(eta) m_r, a start inside the factorized class."""
    total = sum(level_masses.values())
    if any(m < 0 for m in level_masses.values()) or abs(total - 1.0) > 1e-12:
        raise DomainError(f"Level masses must be a distribution, got {dict(level_masses)}")
    probs = np.zeros(gen.size)
    for r, mass in level_masses.items():
        for eta, p in model.rho_level(r).items():
            probs[gen.index[eta]] = float(p) * mass
    return DistributionVector(0.0, probs, gen.states)


def _validate_start(rho0: DistributionVector, gen: Generator) -> None:
    if rho0.probs.shape != (gen.size,):
        raise DomainError(f"Initial vector has shape {rho0.probs.shape}, expected ({gen.size},)")
    if np.any(rho0.probs < 0) or abs(rho0.probs.sum() - 1.0) > 1e-12:
        raise DomainError("Initial vector is not a probability distribution")


def evolve(
    gen: Generator,
    rho0: DistributionVector,
    times: Sequence[float],
    method: str = "uniformization",
) -> List[DistributionVector]:
    """p(t) = rho0 exp(Q t) at each requested time."""
    _validate_start(rho0, gen)
    logger.info(f"Evolving N={gen.n} over {len(times)} times with {method}")
    result = markov.propagate(gen.matrix, rho0.probs, times, method=method)
    return [DistributionVector(float(t), row, gen.states) for t, row in zip(times, result)]


def geometric_grid(t_max: float, count: int = 20, t_min: Optional[float] = None) -> List[float]:
    """count geometrically spaced times ending at t_max."""
    if t_max <= 0 or count < 1:
        raise DomainError(f"Grid needs t_max > 0 and count >= 1, got {t_max}, {count}")
    start = t_max * 1e-3 if t_min is None else t_min
    return [float(t) for t in np.geomspace(start, t_max, count)]


def conditional_snapshot(d: DistributionVector, floor: float = LEVEL_MASS_FLOOR) -> ConditionalSnapshot:
    """Split p(t) into level masses and conditional laws per level."""
    mass: Dict[int, float] = {}
    for eta, p in zip(d.states, d.probs):
        mass[eta.block_count] = mass.get(eta.block_count, 0.0) + float(p)
    q: Dict[int, Dict[Partition, float]] = {}
    absent: List[int] = []
    for r in sorted(mass):
        if mass[r] > floor:
            q[r] = {}
        else:
            absent.append(r)
    for eta, p in zip(d.states, d.probs):
        r = eta.block_count
        if r in q:
            q[r][eta] = float(p) / mass[r]
    return ConditionalSnapshot(d.t, mass, q, tuple(absent))


def factorization_deviation(snapshot: ConditionalSnapshot, model: GibbsModel) -> float:
    """max over present levels and states of |Q_r(eta) - rho_r(eta)|."""
    worst = 0.0
    for r, table in snapshot.q.items():
        for eta, p in model.rho_level(r).items():
            worst = max(worst, abs(table.get(eta, 0.0) - float(p)))
    return worst


def induced_rates(gen: Generator, d: DistributionVector) -> Dict[int, Tuple[float, float]]:
    """Birth and death rates (lambda_r(t), mu_r(t)) seen by the block count.

    Each is the conditional mean of the state's fragmentation or coagulation
    outflow given r; constant in t only when the kernel is homogeneous or the
    conditional law does not move.
    """
    result: Dict[int, Tuple[float, float]] = {}
    levels = gen.levels()
    for r in range(1, gen.n + 1):
        mask = levels == r
        mass = float(d.probs[mask].sum())
        if mass <= LEVEL_MASS_FLOOR:
            continue
        lam = float(d.probs[mask] @ gen.frag_out[mask]) / mass
        mu = float(d.probs[mask] @ gen.coag_out[mask]) / mass
        result[r] = (lam, mu)
    return result


# ============================
# Long-time behaviour
# ============================

def is_irreducible(gen: Generator) -> bool:
    return markov.is_irreducible(gen.matrix)


def absorbing_states(gen: Generator) -> List[Partition]:
    return [gen.states[i] for i in markov.absorbing_indices(gen.matrix)]


def full_spectral_gap(gen: Generator) -> float:
    """Slowest nonzero relaxation rate of the full generator."""
    return markov.relaxation_gap(gen.matrix)


def invariant_closed_form(kernel: SolvableKernel, n: int) -> Tuple[Dict[Partition, Fraction], Fraction]:
    """nu_N(eta) = c_N^{-1} phi11^r prod a_k^{n_k} / n_k! and c_N, r the block count."""
    if kernel.phi11 == 0 or kernel.boundary:
        raise DomainError(f"{kernel.describe()} is not ergodic, no invariant measure in closed form")
    if (kernel.frag_a, kernel.frag_b) != (kernel.a, kernel.b):
        raise DomainError("Closed form needs fragmentation weights equal to the coagulation weights")
    seq = weights_closed_form(kernel.a, kernel.b, n, cap=n)
    scaled = {}
    for eta in enumerate_partitions(n, max_n=n):
        scaled[eta] = gibbs_factor(seq, eta) * kernel.phi11 ** eta.block_count
    c_n = sum(scaled.values(), Fraction(0))
    return {eta: v / c_n for eta, v in scaled.items()}, c_n


@dataclass(frozen=True)
class StationaryResult:
    ergodic: bool
    distribution: Optional[DistributionVector] = None
    absorbing: Tuple[Partition, ...] = ()
    closed_form: Optional[Dict[Partition, Fraction]] = None
    partition_function: Optional[Fraction] = None
    max_deviation: Optional[float] = None
    balance_deviation: Optional[float] = None


def detailed_balance_deviation(gen: Generator, pi: np.ndarray) -> float:
    """max over neighbor pairs of |pi(i) q(i,j) - pi(j) q(j,i)|."""
    worst = 0.0
    for (i, j), rate in gen.rates.items():
        back = gen.rates.get((j, i), Fraction(0))
        worst = max(worst, abs(pi[i] * float(rate) - pi[j] * float(back)))
    return worst


def stationary_measure(gen: Generator, kernel: Optional[Kernel] = None) -> StationaryResult:
    """Stationary law from the generator null space.

    Returns the absorbing states instead when the chain is not irreducible.
    For a solvable kernel the closed-form invariant measure is computed too
    and must agree within STATIONARY_TOL per state.
    """
    if not is_irreducible(gen):
        absorbing = tuple(absorbing_states(gen))
        logger.warning(f"N={gen.n} {gen.kernel} is not ergodic; absorbing states {[str(s) for s in absorbing]}")
        return StationaryResult(ergodic=False, absorbing=absorbing)

    pi = markov.null_vector(gen.matrix)
    result = StationaryResult(
        ergodic=True,
        distribution=DistributionVector(math.inf, pi, gen.states),
        balance_deviation=detailed_balance_deviation(gen, pi),
    )
    if not isinstance(kernel, SolvableKernel) or (kernel.frag_a, kernel.frag_b) != (kernel.a, kernel.b):
        return result

    closed, c_n = invariant_closed_form(kernel, gen.n)
    deviation = max(abs(pi[gen.index[eta]] - float(p)) for eta, p in closed.items())
    if deviation > STATIONARY_TOL:
        raise SolverError(
            "Null-space solution disagrees with the closed-form invariant measure",
            {"max_deviation": deviation, "N": gen.n, "kernel": gen.kernel},
        )
    return StationaryResult(
        ergodic=True,
        distribution=result.distribution,
        closed_form=closed,
        partition_function=c_n,
        max_deviation=deviation,
        balance_deviation=result.balance_deviation,
    )


# ============================
# Weight asymptotics
# ============================

def growth_constant(a: float, b: float) -> float:
    """Limit of a_{k+1}/a_k."""
    if a == 0:
        return b / 2
    if b == 0:
        return a * math.e
    c = 2 * a / abs(b)
    if b > 0:
        return (b / 2) * (1 + c) ** (1 + c) / c ** c
    return (abs(b) / 2) * c ** c / (c - 1) ** (c - 1)


def classify_weights(a: float, b: float) -> Tuple[float, str]:
    """Exponent alpha of a_k ~ C^k k^alpha and the resulting class."""
    if a > 0:
        return -1.5, "convergent"
    return 0.0, "expansive"


def log_weights(a: float, b: float, K: int) -> np.ndarray:
    """log a_1..log a_K in float."""
    logs = np.zeros(K)
    for k in range(2, K + 1):
        r = np.arange(2, k + 1)
        logs[k - 1] = np.sum(np.log(k * a + b * r / 2)) - gammaln(k + 1)
    return logs


def weight_asymptotics(a: Union[Fraction, float], b: Union[Fraction, float], K: int) -> AsymptoticsReport:
    """Growth diagnostics of a_k up to K.

    Args:
        a: Coagulation slope, a >= 0
        b: Coagulation offset, 2a + b > 0
        K: Largest weight index (<= ASYMPTOTICS_MAX_K)

    Returns:
        Per-k values, ratios and normalized weights with the weight class
    """
    if K < 1 or K > ASYMPTOTICS_MAX_K:
        raise CapacityError(f"K={K} outside 1..{ASYMPTOTICS_MAX_K}")
    fa, fb = float(a), float(b)
    if fa < 0 or 2 * fa + fb <= 0:
        raise DomainError(f"Weights need a >= 0 and 2a+b > 0, got a={a}, b={b}")

    logs = log_weights(fa, fb, K)
    alpha, weight_class = classify_weights(fa, fb)
    c2 = growth_constant(fa, fb)
    overflow = bool(np.any(logs > np.log(np.finfo(float).max)))
    if overflow:
        logger.info(f"a_k overflows float below K={K}; reporting log values only where needed")

    rows: List[AsymptoticsRow] = []
    for k in range(1, K + 1):
        log_ak = float(logs[k - 1])
        if fa == 0:
            log_norm = log_ak - (k - 1) * math.log(fb / 2)
        else:
            log_norm = log_ak + 1.5 * math.log(k) - k * math.log(c2)
        rows.append(AsymptoticsRow(
            k=k,
            log_a_k=log_ak,
            a_k=math.exp(log_ak) if log_ak < 700 else None,
            ratio=math.exp(logs[k] - log_ak) if k < K else None,
            normalized=math.exp(log_norm) if abs(log_norm) < 700 else None,
        ))
    return AsymptoticsReport(
        a=str(Fraction(a).limit_denominator() if isinstance(a, float) else Fraction(a)),
        b=str(Fraction(b).limit_denominator() if isinstance(b, float) else Fraction(b)),
        K=K,
        alpha=alpha,
        weight_class=weight_class,
        growth_constant=c2,
        log_domain=overflow,
        rows=rows,
    )
