"""
Numerics shared by the full-state and block-count chains.

Generators are row-conservative rate matrices Q (rows sum to zero) held as
scipy sparse CSR matrices; distributions are row vectors evolving by
dp/dt = p Q.
"""

import logging
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg, sparse
from scipy.integrate import solve_ivp
from scipy.sparse.csgraph import connected_components
from scipy.stats import poisson

from cfp.config import EVOLVE_TOL, MASS_DRIFT_TOL, UNIFORMIZATION_MAX_STEP
from cfp.errors import DomainError, SolverError

logger = logging.getLogger(__name__)

METHODS = ("uniformization", "ode")


def _check_times(times: Sequence[float]) -> np.ndarray:
    grid = np.asarray(times, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("At least one time is required")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise DomainError(f"Times must be finite and nonnegative, got {list(times)}")
    return grid


def _uniformized_step(
    p: np.ndarray, jump: sparse.csr_matrix, rate: float, h: float, tol: float
) -> Tuple[np.ndarray, float]:
    """exp(Q h) applied to p through the Poissonized jump chain."""
    mean = rate * h
    kmax = int(poisson.isf(tol, mean)) + 1
    weights = poisson.pmf(np.arange(kmax + 1), mean)
    term = p.copy()
    result = weights[0] * term
    for k in range(1, kmax + 1):
        term = jump.T @ term
        result += weights[k] * term
    return result, float(1.0 - weights.sum())


def uniformize(
    q: sparse.csr_matrix, p0: np.ndarray, times: Sequence[float], tol: float = EVOLVE_TOL
) -> np.ndarray:
    """Distributions at each time, rows aligned with times.

    Sub-steps keep Lambda*h below UNIFORMIZATION_MAX_STEP so the Poisson
    weights stay representable; each sub-step truncates the series once the
    neglected tail is below tol.
    """
    grid = _check_times(times)
    order = np.argsort(grid, kind="stable")
    rate = float(np.max(-q.diagonal())) if q.shape[0] else 0.0
    out = np.empty((grid.size, p0.size))
    if rate <= 0:
        out[:] = p0
        return out

    jump = sparse.identity(q.shape[0], format="csr") + q / rate
    ordered = np.concatenate(([0.0], grid[order]))
    steps = [max(1, int(np.ceil(rate * dt / UNIFORMIZATION_MAX_STEP))) if dt > 0 else 0
             for dt in np.diff(ordered)]
    # the tolerance budget is shared by all sub-steps
    step_tol = tol / max(1, sum(steps))

    p, tail = p0.astype(float).copy(), 0.0
    for idx, dt, count in zip(order, np.diff(ordered), steps):
        for _ in range(count):
            p, lost = _uniformized_step(p, jump, rate, dt / count, step_tol)
            tail += lost
        out[idx] = p
    logger.debug(f"Uniformization: Lambda={rate:.6g}, horizon={grid.max():.6g}, truncated tail {tail:.3g}")
    return out


def integrate(
    q: sparse.csr_matrix, p0: np.ndarray, times: Sequence[float], tol: float = EVOLVE_TOL
) -> np.ndarray:
    """Adaptive DOP853 solution of dp/dt = p Q, used as a cross-check."""
    grid = _check_times(times)
    horizon = float(grid.max())
    out = np.empty((grid.size, p0.size))
    if horizon == 0:
        out[:] = p0
        return out
    qt = q.T.tocsr()
    solution = solve_ivp(
        lambda _t, p: qt @ p,
        (0.0, horizon),
        p0.astype(float),
        method="DOP853",
        t_eval=np.unique(grid),
        rtol=tol,
        atol=tol * 1e-2,
    )
    if not solution.success:
        raise SolverError("ODE integration failed", {"message": solution.message, "horizon": horizon})
    lookup = {t: solution.y[:, k] for k, t in enumerate(solution.t)}
    for idx, t in enumerate(grid):
        out[idx] = lookup[t]
    return out


def propagate(
    q: sparse.csr_matrix,
    p0: np.ndarray,
    times: Sequence[float],
    method: str = "uniformization",
    tol: float = EVOLVE_TOL,
    mass_tol: float = MASS_DRIFT_TOL,
) -> np.ndarray:
    """Solve the forward equation and enforce probability conservation.

    Raises:
        SolverError: If the mass drifts by more than mass_tol or an entry
            drops below -mass_tol. Small negative round-off is clipped,
            never renormalized.
    """
    if method not in METHODS:
        raise DomainError(f"Unknown propagator '{method}', expected one of {METHODS}")
    solver = uniformize if method == "uniformization" else integrate
    result = solver(q, p0, times, tol)

    drift = float(np.max(np.abs(result.sum(axis=1) - p0.sum())))
    lowest = float(result.min()) if result.size else 0.0
    if drift > mass_tol or lowest < -mass_tol:
        logger.error(f"{method} broke tolerance: drift={drift:.3g}, min={lowest:.3g}")
        raise SolverError(
            f"{method} could not meet the mass tolerance",
            {"drift": drift, "min_entry": lowest, "mass_tol": mass_tol, "states": p0.size},
        )
    np.clip(result, 0.0, None, out=result)
    return result


# ============================
# Structure
# ============================

def is_irreducible(q: sparse.csr_matrix) -> bool:
    """Single strongly connected component of the positive-rate graph."""
    if q.shape[0] <= 1:
        return True
    graph = q.copy().tolil()
    graph.setdiag(0)
    graph = graph.tocsr()
    graph.eliminate_zeros()
    count, _ = connected_components(graph > 0, directed=True, connection="strong")
    return count == 1


def absorbing_indices(q: sparse.csr_matrix) -> List[int]:
    outflow = -q.diagonal()
    return [int(i) for i in np.flatnonzero(outflow <= 0)]


def null_vector(q: sparse.csr_matrix) -> np.ndarray:
    """Normalized left null vector of Q (the stationary law when irreducible)."""
    basis = linalg.null_space(q.toarray().T)
    if basis.shape[1] != 1:
        raise DomainError(f"Generator has a {basis.shape[1]}-dimensional stationary space")
    v = np.clip(basis[:, 0] / basis[:, 0].sum(), 0.0, None)
    return v / v.sum()


def relaxation_gap(q: sparse.csr_matrix, tol: float = 1e-9) -> float:
    """Smallest nonzero -Re(eigenvalue) of a dense generator."""
    values = linalg.eigvals(q.toarray())
    rates = np.sort(-values.real)
    nonzero = rates[rates > tol * max(1.0, float(np.abs(rates).max()))]
    if nonzero.size == 0:
        raise DomainError("Generator has no nonzero eigenvalue")
    return float(nonzero[0])
