"""
The block-count process as a birth and death chain.

For the solvable family the number of blocks |X_N(t)| is itself Markov with
birth (fragmentation) rates lambda_r = phi11 (N - r) and death (coagulation)
rates mu_r = (r - 1)/2 (2aN + rb).
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, sparse
from scipy.linalg import eigh_tridiagonal

from cfp import markov
from cfp.config import GAP_SLACK, IMAG_TOL
from cfp.errors import DomainError, SolverError
from cfp.kernels import Kernel, SolvableKernel, level_rates
from cfp.models import GapReport

logger = logging.getLogger(__name__)

Number = Union[int, Fraction]


@dataclass(frozen=True)
class BirthDeathChain:
    """Rates on levels 1..N; birth[r-1] = lambda_r, death[r-1] = mu_r."""

    n: int
    birth: Tuple[Fraction, ...]
    death: Tuple[Fraction, ...]
    params: Optional[Tuple[Fraction, Fraction, Fraction]] = None

    def lam(self, r: int) -> Fraction:
        return self.birth[r - 1] if 1 <= r <= self.n else Fraction(0)

    def mu(self, r: int) -> Fraction:
        return self.death[r - 1] if 1 <= r <= self.n else Fraction(0)

    @property
    def ergodic(self) -> bool:
        return all(self.lam(r) > 0 for r in range(1, self.n)) and all(
            self.mu(r) > 0 for r in range(2, self.n + 1)
        )

    def generator(self) -> sparse.csr_matrix:
        """Tridiagonal rate matrix, row r-1 for level r."""
        n = self.n
        up = [float(self.lam(r)) for r in range(1, n)]
        down = [float(self.mu(r)) for r in range(2, n + 1)]
        diag = [-float(self.lam(r) + self.mu(r)) for r in range(1, n + 1)]
        return sparse.diags([down, diag, up], offsets=[-1, 0, 1], format="csr")


def build_chain(a: Number, b: Number, phi11: Number, n: int) -> BirthDeathChain:
    """Chain of the solvable kernel (a, b, phi11) at size N."""
    kernel = SolvableKernel(a, b, phi11)
    chain = chain_from_kernel(kernel, n)
    return BirthDeathChain(chain.n, chain.birth, chain.death, kernel.params)


def chain_from_kernel(kernel: Kernel, n: int) -> BirthDeathChain:
    """Level totals of any kernel; a faithful marginal only for homogeneous kernels."""
    if n < 1:
        raise DomainError(f"N={n} must be >= 1")
    totals = level_rates(kernel, n)
    birth = tuple(totals[r].frag_total if r < n else Fraction(0) for r in range(1, n + 1))
    death = tuple(totals[r].coag_total if r > 1 else Fraction(0) for r in range(1, n + 1))
    return BirthDeathChain(n, birth, death)


def _level_vector(b0: Union[Sequence[float], Mapping[int, float]], n: int) -> np.ndarray:
    if isinstance(b0, Mapping):
        vec = np.zeros(n)
        for r, m in b0.items():
            if not 1 <= r <= n:
                raise DomainError(f"Level {r} outside 1..{n}")
            vec[r - 1] = m
    else:
        vec = np.asarray(b0, dtype=float)
    if vec.shape != (n,) or np.any(vec < 0) or abs(vec.sum() - 1.0) > 1e-12:
        raise DomainError(f"Initial level law must be a distribution on 1..{n}")
    return vec


def marginal_evolve(
    chain: BirthDeathChain,
    b0: Union[Sequence[float], Mapping[int, float]],
    times: Sequence[float],
    method: str = "uniformization",
) -> np.ndarray:
    """b(r; t) for each time; column r-1 holds level r."""
    start = _level_vector(b0, chain.n)
    return markov.propagate(chain.generator(), start, times, method=method)


def stationary(chain: BirthDeathChain) -> np.ndarray:
    """b(r) proportional to prod_{l<r} lambda_l / mu_{l+1}."""
    if not chain.ergodic:
        raise DomainError("Chain is not ergodic, no unique stationary law")
    weights = [Fraction(1)]
    for r in range(1, chain.n):
        weights.append(weights[-1] * chain.lam(r) / chain.mu(r + 1))
    total = sum(weights, Fraction(0))
    return np.array([float(w / total) for w in weights])


# ============================
# Spectral gap
# ============================

def zeifman_alphas(chain: BirthDeathChain, deltas: Optional[Sequence[float]] = None) -> np.ndarray:
    """alpha_r = lambda_r + mu_{r+1} - delta_{r+1} lambda_{r+1} - mu_r / delta_r, r = 1..N-1.

    deltas holds delta_2..delta_{N-1}; delta_1 and delta_N multiply
    vanishing rates and are taken as 1.
    """
    n = chain.n
    d = np.ones(n + 1)
    if deltas is not None:
        deltas = np.asarray(deltas, dtype=float)
        if deltas.shape != (max(n - 2, 0),):
            raise DomainError(f"Expected {max(n - 2, 0)} deltas, got {deltas.shape[0]}")
        if np.any(deltas <= 0):
            raise DomainError("Deltas must be positive")
        d[2:n] = deltas
    lam = [float(chain.lam(r)) for r in range(0, n + 2)]
    mu = [float(chain.mu(r)) for r in range(0, n + 2)]
    return np.array([
        lam[r] + mu[r + 1] - d[r + 1] * lam[r + 1] - mu[r] / d[r]
        for r in range(1, n)
    ])


def optimal_deltas(chain: BirthDeathChain, sweeps: int = 500, tol: float = 1e-12) -> np.ndarray:
    """Coordinate ascent on min_r alpha_r.

    Each delta_r only enters alpha_{r-1} (decreasing) and alpha_r
    (increasing), so it is set to equalize the two: the positive root of
    lambda_r d^2 + (B - A) d - mu_r = 0. Heuristic; no optimality guarantee.
    """
    if not chain.ergodic:
        raise DomainError("Delta search needs an ergodic chain")
    n = chain.n
    d = np.ones(n + 1)
    lam = [float(chain.lam(r)) for r in range(0, n + 2)]
    mu = [float(chain.mu(r)) for r in range(0, n + 2)]
    for sweep in range(sweeps):
        change = 0.0
        for r in range(2, n):
            a_term = lam[r - 1] + mu[r] - mu[r - 1] / d[r - 1]
            b_term = lam[r] + mu[r + 1] - d[r + 1] * lam[r + 1]
            gap = b_term - a_term
            root = (-gap + np.sqrt(gap * gap + 4 * lam[r] * mu[r])) / (2 * lam[r])
            change = max(change, abs(root - d[r]))
            d[r] = root
        if change < tol:
            logger.debug(f"Delta search converged after {sweep + 1} sweeps")
            break
    return d[2:n]


def _symmetric_gap(chain: BirthDeathChain) -> float:
    n = chain.n
    diag = np.array([-float(chain.lam(r) + chain.mu(r)) for r in range(1, n + 1)])
    off = np.array([np.sqrt(float(chain.lam(r) * chain.mu(r + 1))) for r in range(1, n)])
    values = eigh_tridiagonal(diag, off, eigvals_only=True)
    # values ascending; the top one is the zero eigenvalue
    return float(-values[-2])


def check_spectrum(chain: BirthDeathChain) -> Tuple[bool, np.ndarray]:
    """Eigenvalues of the non-symmetric generator are real and <= 0."""
    values = linalg.eigvals(chain.generator().toarray())
    scale = max(1.0, float(np.abs(values).max()))
    ok = bool(np.all(np.abs(values.imag) < IMAG_TOL * scale) and np.all(values.real < IMAG_TOL * scale))
    return ok, values


def spectral_gap(
    chain: BirthDeathChain,
    with_optimal: bool = True,
    full_gap: Optional[float] = None,
) -> GapReport:
    """Numerical gap with Zeifman bounds for delta = 1 (and optimized deltas).

    Args:
        chain: Ergodic birth and death chain
        with_optimal: Also run the delta search
        full_gap: Relaxation rate of the full process, reported next to the chain gap

    Returns:
        The gap report
    """
    if chain.n < 2 or not chain.ergodic:
        raise DomainError("Spectral gap needs an ergodic chain with N >= 2")
    gap = _symmetric_gap(chain)
    alphas = zeifman_alphas(chain)
    lower, upper = float(alphas.min()), float(alphas.max())
    within = lower - GAP_SLACK <= gap <= upper + GAP_SLACK
    if not within:
        logger.warning(f"Gap {gap} outside Zeifman bounds [{lower}, {upper}]")

    exact = None
    if chain.params is not None and chain.params[1] == 0:
        a, _, phi11 = chain.params
        exact = float(phi11 + a * chain.n)
        if abs(gap - exact) > GAP_SLACK:
            raise SolverError(
                "Numerical gap differs from the closed form",
                {"numerical": gap, "exact": exact, "N": chain.n},
            )

    report = GapReport(
        N=chain.n,
        numerical_gap=gap,
        lower=lower,
        upper=upper,
        exact=exact,
        alphas=[float(x) for x in alphas],
        within_bounds=within,
    )
    if with_optimal and chain.n > 2:
        deltas = optimal_deltas(chain)
        tuned = zeifman_alphas(chain, deltas)
        report.optimal_deltas = [float(x) for x in deltas]
        report.optimal_lower = float(tuned.min())
        report.optimal_upper = float(tuned.max())
    if full_gap is not None:
        report = compare_full_gap(report, full_gap)
    return report


def compare_full_gap(report: GapReport, full_gap: float) -> GapReport:
    """Attach the full-process relaxation rate; a shortfall is logged, not raised."""
    report.full_gap = full_gap
    report.full_gap_difference = full_gap - report.numerical_gap
    if full_gap < report.numerical_gap - 1e-6:
        logger.warning(
            f"Full-process gap {full_gap:.10g} is below the block-count gap {report.numerical_gap:.10g}"
        )
    return report


def level_marginal(probs: np.ndarray, levels: np.ndarray, n: int) -> np.ndarray:
    """Collapse state probabilities (rows) onto levels 1..N."""
    probs = np.atleast_2d(probs)
    out = np.zeros((probs.shape[0], n))
    for r in range(1, n + 1):
        out[:, r - 1] = probs[:, levels == r].sum(axis=1)
    return out
