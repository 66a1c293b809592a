"""
Gillespie simulation of coagulation-fragmentation processes.

States are plain count arrays (index 0 unused) so N is not limited by the
enumerable range. Reaction channels are the pairs (i, j), i <= j, i + j <= N,
with a positive psi (coagulation) or phi (fragmentation). After an event only
the channels that read a changed count are re-evaluated; every
SSA_FULL_RECOMPUTE_EVERY events the whole propensity vector is rebuilt.
"""

import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from cfp.birthdeath import build_chain, spectral_gap
from cfp.config import LARGEST_BLOCK_QUANTILES, SSA_FULL_RECOMPUTE_EVERY, SSA_TABULATE_MAX_N
from cfp.errors import DomainError, SolverError
from cfp.exact import classify_weights
from cfp.kernels import Kernel, SolvableKernel, kernel_tables
from cfp.models import (
    GelationReport,
    GelationRow,
    LargestBlockStats,
    LevelSummary,
    SimConfig,
    SnapshotStats,
    TrajectoryStats,
)
from cfp.serialize import format_rational

logger = logging.getLogger(__name__)

COAGULATE, FRAGMENT = 0, 1


def trajectory_seed(base_seed: int, index: int) -> np.random.SeedSequence:
    """Seed of trajectory `index`: SeedSequence(base_seed, spawn_key=(index,)).

    Any single trajectory can be replayed without running the others.
    """
    return np.random.SeedSequence(base_seed, spawn_key=(index,))


# ============================
# Reaction channels
# ============================

@dataclass(frozen=True)
class Channels:
    """Flattened reaction channels and their dependency lists."""

    n: int
    kind: np.ndarray
    i: np.ndarray
    j: np.ndarray
    base: np.ndarray
    touching: Tuple[np.ndarray, ...]

    @classmethod
    def from_tables(cls, psi: np.ndarray, phi: np.ndarray, n: int) -> "Channels":
        kind, ii, jj, base = [], [], [], []
        for i in range(1, n):
            for j in range(i, n - i + 1):
                if psi[i, j] > 0:
                    kind.append(COAGULATE)
                    ii.append(i)
                    jj.append(j)
                    base.append(psi[i, j])
                if phi[i, j] > 0:
                    kind.append(FRAGMENT)
                    ii.append(i)
                    jj.append(j)
                    base.append(phi[i, j])
        kind_a, i_a, j_a = np.array(kind, dtype=np.int64), np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64)
        touching = [np.empty(0, dtype=np.int64)]
        for s in range(1, n + 1):
            reads = np.where(kind_a == COAGULATE, (i_a == s) | (j_a == s), i_a + j_a == s)
            touching.append(np.flatnonzero(reads))
        return cls(n, kind_a, i_a, j_a, np.array(base, dtype=float), tuple(touching))

    def rates(self, counts: np.ndarray, idx: Optional[np.ndarray] = None) -> np.ndarray:
        if idx is None:
            idx = np.arange(self.kind.size)
        i, j = self.i[idx], self.j[idx]
        ci, cj, ck = counts[i], counts[j], counts[i + j]
        coag = np.where(i == j, ci * (ci - 1) / 2.0, ci * cj)
        return np.where(self.kind[idx] == COAGULATE, coag, ck) * self.base[idx]


def parse_initial(init: str, n: int) -> np.ndarray:
    """Count array for 'singletons', 'single-block' or a text state like '1^2 3^1'."""
    counts = np.zeros(n + 1, dtype=np.int64)
    key = init.strip().lower()
    if key in ("singletons", "zeta-star"):
        counts[1] = n
    elif key in ("single-block", "eta-star"):
        counts[n] = 1
    else:
        for token in init.split():
            try:
                size, mult = (int(x) for x in token.split("^"))
            except ValueError as e:
                raise DomainError(f"Malformed initial state token '{token}'") from e
            if not 1 <= size <= n or mult < 0:
                raise DomainError(f"Initial state token '{token}' outside 1..{n}")
            counts[size] += mult
    mass = int(np.dot(np.arange(n + 1), counts))
    if mass != n:
        raise DomainError(f"Initial state '{init}' has mass {mass}, expected {n}")
    return counts


def _largest(counts: np.ndarray) -> int:
    return int(np.flatnonzero(counts)[-1])


# ============================
# One trajectory
# ============================

def simulate_trajectory(
    channels: Channels,
    counts0: np.ndarray,
    snapshots: np.ndarray,
    rng: np.random.Generator,
    recompute_every: int = SSA_FULL_RECOMPUTE_EVERY,
) -> Tuple[List[np.ndarray], int, bool]:
    """Direct-method trajectory recorded at the snapshot times.

    Returns:
        States at each snapshot, number of events, whether the run parked
        in an absorbing state
    """
    n = channels.n
    counts = counts0.copy()
    out: List[np.ndarray] = []
    rates = channels.rates(counts)
    total = float(rates.sum())
    t, events, absorbed = 0.0, 0, False
    sizes = np.arange(n + 1)

    while len(out) < snapshots.size:
        if total <= 0:
            absorbed = True
            out.extend(counts.copy() for _ in range(snapshots.size - len(out)))
            break
        t_next = t + rng.exponential(1.0 / total)
        # record every snapshot passed before the next event
        reached = int(np.searchsorted(snapshots, t_next, side="left"))
        while len(out) < reached:
            out.append(counts.copy())
        if len(out) == snapshots.size:
            break
        t = t_next

        u = rng.uniform() * total
        c = int(np.searchsorted(np.cumsum(rates), u, side="right"))
        if c >= rates.size or rates[c] == 0:
            c = int(np.flatnonzero(rates)[-1])
        i, j = int(channels.i[c]), int(channels.j[c])
        step = 1 if channels.kind[c] == COAGULATE else -1
        counts[i] -= step
        counts[j] -= step
        counts[i + j] += step
        events += 1

        if events % recompute_every == 0:
            if int(np.dot(sizes, counts)) != n:
                raise SolverError("Mass not conserved", {"events": events, "t": t})
            rates = channels.rates(counts)
            total = float(rates.sum())
        else:
            idx = np.unique(np.concatenate((channels.touching[i], channels.touching[j], channels.touching[i + j])))
            new = channels.rates(counts, idx)
            total += float(new.sum() - rates[idx].sum())
            rates[idx] = new
            if total < 1e-12 * max(1.0, float(rates.max(initial=0.0))):
                total = float(rates.sum())
    return out, events, absorbed


# ============================
# Batches
# ============================

@dataclass
class _ChunkResult:
    level_hist: np.ndarray
    level_largest: np.ndarray
    largest: np.ndarray
    states: Optional[List[Counter]]
    events: int
    absorbed: int


def _run_chunk(
    channels: Channels,
    counts0: np.ndarray,
    snapshots: np.ndarray,
    base_seed: int,
    indices: Sequence[int],
    tabulate: bool,
    recompute_every: int,
) -> _ChunkResult:
    n, s = channels.n, snapshots.size
    level_hist = np.zeros((s, n + 1), dtype=np.int64)
    level_largest = np.zeros((s, n + 1), dtype=np.int64)
    largest = np.zeros((s, len(indices)), dtype=np.int64)
    states = [Counter() for _ in range(s)] if tabulate else None
    events = absorbed = 0
    for pos, index in enumerate(indices):
        rng = np.random.default_rng(trajectory_seed(base_seed, index))
        recorded, count, parked = simulate_trajectory(channels, counts0, snapshots, rng, recompute_every)
        events += count
        absorbed += int(parked)
        for k, counts in enumerate(recorded):
            r = int(counts.sum())
            top = _largest(counts)
            level_hist[k, r] += 1
            level_largest[k, r] += top
            largest[k, pos] = top
            if states is not None:
                states[k][tuple(int(c) for c in counts[1:])] += 1
    return _ChunkResult(level_hist, level_largest, largest, states, events, absorbed)


def _chunks(total: int, workers: int) -> List[range]:
    size = max(1, math.ceil(total / (workers * 4)))
    return [range(start, min(total, start + size)) for start in range(0, total, size)]


def _state_text(counts: Tuple[int, ...]) -> str:
    return " ".join(f"{size}^{c}" for size, c in enumerate(counts, start=1) if c)


def _aggregate(cfg: SimConfig, parts: List[_ChunkResult], tabulate: bool) -> TrajectoryStats:
    n, m = cfg.N, cfg.trajectories
    level_hist = sum(p.level_hist for p in parts)
    level_largest = sum(p.level_largest for p in parts)
    largest = np.concatenate([p.largest for p in parts], axis=1)

    snapshots: List[SnapshotStats] = []
    for k, t in enumerate(cfg.snapshots):
        probs = level_hist[k] / m
        stderr = np.sqrt(probs * (1 - probs) / m)
        present = [r for r in range(1, n + 1) if level_hist[k, r]]
        top = largest[k].astype(float)
        quantiles = np.quantile(top, LARGEST_BLOCK_QUANTILES)
        stats = LargestBlockStats(
            mean=float(top.mean()),
            stderr=float(top.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0,
            quantiles={str(q): float(v) for q, v in zip(LARGEST_BLOCK_QUANTILES, quantiles)},
        )
        conditional = None
        summary = None
        if tabulate:
            merged: Counter = Counter()
            for p in parts:
                merged.update(p.states[k])
            conditional = {str(r): {} for r in present}
            for state in sorted(merged, reverse=True):
                r = sum(state)
                conditional[str(r)][_state_text(state)] = merged[state] / level_hist[k, r]
        else:
            summary = {
                str(r): LevelSummary(count=int(level_hist[k, r]), mean_largest=float(level_largest[k, r] / level_hist[k, r]))
                for r in present
            }
        snapshots.append(SnapshotStats(
            t=t,
            level_probs={str(r): float(probs[r]) for r in range(1, n + 1)},
            level_stderr={str(r): float(stderr[r]) for r in range(1, n + 1)},
            conditional=conditional,
            conditional_summary=summary,
            largest_block=stats,
        ))
    return TrajectoryStats(
        config=cfg,
        snapshots=snapshots,
        events=sum(p.events for p in parts),
        absorbed=sum(p.absorbed for p in parts),
    )


def run_ssa(cfg: SimConfig, kernel: Kernel) -> TrajectoryStats:
    """Run cfg.trajectories independent trajectories and aggregate them.

    Args:
        cfg: Size, start, horizon, snapshot times, trajectory count and seed
        kernel: Rate functions, tabulated to floats once per run

    Returns:
        Empirical level laws, conditional laws (or per-level summaries above
        SSA_TABULATE_MAX_N) and largest-block statistics per snapshot
    """
    n = cfg.N
    counts0 = parse_initial(cfg.init, n)
    psi, phi = kernel_tables(kernel, n)
    channels = Channels.from_tables(psi, phi, n)
    snapshots = np.asarray(cfg.snapshots, dtype=float)
    tabulate = n <= SSA_TABULATE_MAX_N
    logger.info(
        f"SSA: N={n}, {kernel.describe()}, {cfg.trajectories} trajectories, "
        f"{channels.kind.size} channels, seed={cfg.base_seed}, workers={cfg.workers}"
    )

    chunks = _chunks(cfg.trajectories, cfg.workers)
    args = (channels, counts0, snapshots, cfg.base_seed)
    if cfg.workers <= 1:
        parts = [_run_chunk(*args, chunk, tabulate, SSA_FULL_RECOMPUTE_EVERY) for chunk in chunks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [
                pool.submit(_run_chunk, *args, chunk, tabulate, SSA_FULL_RECOMPUTE_EVERY)
                for chunk in chunks
            ]
            # merged in chunk order, independent of completion order
            parts = [f.result() for f in futures]

    stats = _aggregate(cfg, parts, tabulate)
    logger.info(f"SSA finished: {stats.events} events, {stats.absorbed} absorbed trajectories")
    return stats


# ============================
# Gelation
# ============================

def gelation_scan(
    a,
    b,
    phi11,
    ns: Sequence[int],
    t: Optional[float] = None,
    trajectories: int = 1000,
    base_seed: int = 0,
    workers: int = 1,
) -> GelationReport:
    """Largest-block statistics near stationarity for several N.

    Each N runs to max(t, 10 / gap) with its own seed base_seed + position.
    The threshold scale is N^{1/(alpha+2)} with alpha from the weight class.
    """
    kernel_params = SolvableKernel(a, b, phi11)
    alpha, weight_class = classify_weights(float(kernel_params.a), float(kernel_params.b))
    rows: List[GelationRow] = []
    for pos, n in enumerate(ns):
        gap = spectral_gap(build_chain(a, b, phi11, n), with_optimal=False).numerical_gap
        horizon = max(t or 0.0, 10.0 / gap)
        cfg = SimConfig(
            N=n,
            kernel=kernel_params.describe(),
            init="singletons",
            T=horizon,
            snapshots=[horizon],
            trajectories=trajectories,
            base_seed=base_seed + pos,
            workers=workers,
        )
        stats = run_ssa(cfg, kernel_params)
        top = stats.snapshots[0].largest_block
        threshold = n ** (1.0 / (alpha + 2.0))
        rows.append(GelationRow(
            N=n,
            t=horizon,
            mean_largest=top.mean,
            stderr=top.stderr,
            fraction_of_N=top.mean / n,
            threshold_scale=threshold,
            ratio_to_threshold=top.mean / threshold,
        ))
        logger.info(f"Gelation N={n}: E[max block]/N={top.mean / n:.4f}")
    return GelationReport(
        a=format_rational(kernel_params.a),
        b=format_rational(kernel_params.b),
        phi11=format_rational(kernel_params.phi11),
        alpha=alpha,
        weight_class=weight_class,
        rows=rows,
    )
