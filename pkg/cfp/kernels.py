"""
Single-transition rate functions and the state-transition rates they induce.

A kernel supplies psi(i, j), the rate at which a block of size i merges with a
block of size j, and phi(i, j), the rate at which a block of size i + j splits
into i and j. Both are symmetric, nonnegative and independent of N. All values
are exact rationals.
"""

import csv
import logging
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import partial
from itertools import combinations
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from cfp.config import WITNESS_CAP
from cfp.errors import DomainError, KernelFileError
from cfp.models import HomogeneityReport, HomogeneityWitness, RationalValue
from cfp.partitions import (
    Move,
    MoveKind,
    Partition,
    coagulation_moves,
    fragmentation_moves,
    levels,
)
from cfp.serialize import format_rational, parse_rational

logger = logging.getLogger(__name__)

Number = Union[int, Fraction]
RateFunction = Callable[[int, int], Number]


class Kernel(ABC):
    """Symmetric nonnegative pair of rate functions.

    Subclasses implement _psi and _phi; the public accessors add caching,
    conversion to Fraction and the symmetry and sign checks.
    """

    name: str = "kernel"

    def __init__(self) -> None:
        self._cache: Dict[Tuple[str, int, int], Fraction] = {}

    @abstractmethod
    def _psi(self, i: int, j: int) -> Number:
        ...

    @abstractmethod
    def _phi(self, i: int, j: int) -> Number:
        ...

    def _value(self, which: str, i: int, j: int) -> Fraction:
        if i < 1 or j < 1:
            raise DomainError(f"{which}({i},{j}): sizes must be >= 1")
        key = (which, min(i, j), max(i, j))
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        fn = self._psi if which == "psi" else self._phi
        value = Fraction(fn(key[1], key[2]))
        if key[1] != key[2]:
            mirrored = Fraction(fn(key[2], key[1]))
            if mirrored != value:
                raise DomainError(
                    f"{self.name}: {which}({key[1]},{key[2]})={value} but "
                    f"{which}({key[2]},{key[1]})={mirrored}"
                )
        if value < 0:
            raise DomainError(f"{self.name}: {which}({i},{j})={value} is negative")
        self._cache[key] = value
        return value

    def psi(self, i: int, j: int) -> Fraction:
        return self._value("psi", i, j)

    def phi(self, i: int, j: int) -> Fraction:
        return self._value("phi", i, j)

    def describe(self) -> str:
        return self.name

    def __getstate__(self) -> dict:
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state


class FunctionKernel(Kernel):
    """Kernel backed by caller-provided functions."""

    def __init__(self, psi: RateFunction, phi: RateFunction, name: str = "function") -> None:
        super().__init__()
        self._psi_fn = psi
        self._phi_fn = phi
        self.name = name

    def _psi(self, i: int, j: int) -> Number:
        return self._psi_fn(i, j)

    def _phi(self, i: int, j: int) -> Number:
        return self._phi_fn(i, j)


class TabulatedKernel(Kernel):
    """Kernel given by a table on 1 <= i <= j; pairs not listed have rate 0."""

    def __init__(
        self,
        psi: Dict[Tuple[int, int], Fraction],
        phi: Dict[Tuple[int, int], Fraction],
        name: str = "table",
    ) -> None:
        super().__init__()
        self._psi_table = {(min(k), max(k)): Fraction(v) for k, v in psi.items()}
        self._phi_table = {(min(k), max(k)): Fraction(v) for k, v in phi.items()}
        self.name = name

    def _psi(self, i: int, j: int) -> Fraction:
        return self._psi_table.get((min(i, j), max(i, j)), Fraction(0))

    def _phi(self, i: int, j: int) -> Fraction:
        return self._phi_table.get((min(i, j), max(i, j)), Fraction(0))

    @classmethod
    def from_csv(cls, path: str) -> "TabulatedKernel":
        """Read a kernel table with header i,j,psi,phi.

        Args:
            path: CSV file path

        Returns:
            The tabulated kernel

        Raises:
            KernelFileError: On a wrong header, a malformed row or conflicting entries
        """
        psi: Dict[Tuple[int, int], Fraction] = {}
        phi: Dict[Tuple[int, int], Fraction] = {}
        try:
            with open(path, newline="") as f:
                reader = csv.reader(f)
                header = [h.strip() for h in next(reader, [])]
                if header != ["i", "j", "psi", "phi"]:
                    raise KernelFileError(
                        f"{path}: header must be 'i,j,psi,phi', got '{','.join(header)}'"
                    )
                for line_no, row in enumerate(reader, start=2):
                    if not row or all(not cell.strip() for cell in row):
                        continue
                    if len(row) != 4:
                        raise KernelFileError(f"{path}:{line_no}: expected 4 columns, got {len(row)}")
                    try:
                        i, j = int(row[0]), int(row[1])
                        values = (parse_rational(row[2]), parse_rational(row[3]))
                    except (ValueError, DomainError) as e:
                        raise KernelFileError(f"{path}:{line_no}: {e}") from e
                    if i < 1 or j < 1:
                        raise KernelFileError(f"{path}:{line_no}: sizes must be >= 1")
                    if values[0] < 0 or values[1] < 0:
                        raise KernelFileError(f"{path}:{line_no}: rates must be nonnegative")
                    key = (min(i, j), max(i, j))
                    for table, value, label in ((psi, values[0], "psi"), (phi, values[1], "phi")):
                        if key in table and table[key] != value:
                            raise KernelFileError(
                                f"{path}:{line_no}: {label}{key} listed twice with different values"
                            )
                        table[key] = value
        except OSError as e:
            raise KernelFileError(f"Cannot read kernel file {path}: {e}") from e
        logger.info(f"Loaded kernel table {path} with {len(psi)} entries")
        return cls(psi, phi, name=f"table:{path}")

    def to_rows(self) -> List[Dict[str, str]]:
        keys = sorted(set(self._psi_table) | set(self._phi_table))
        return [
            {
                "i": str(i),
                "j": str(j),
                "psi": format_rational(self._psi(i, j)),
                "phi": format_rational(self._phi(i, j)),
            }
            for i, j in keys
        ]


class SolvableKernel(Kernel):
    """psi(i,j) = a(i+j) + b with Gibbs fragmentation rates.

    Fragmentation rates are built from the weights of (frag_a, frag_b), which
    default to (a, b). With these rates the total fragmentation outflow of a
    state with r blocks is phi11 (N - r) and the block-count process is a
    time-homogeneous birth and death chain.
    """

    def __init__(
        self,
        a: Number,
        b: Number,
        phi11: Number,
        frag_a: Optional[Number] = None,
        frag_b: Optional[Number] = None,
    ) -> None:
        super().__init__()
        self.a = Fraction(a)
        self.b = Fraction(b)
        self.phi11 = Fraction(phi11)
        self.frag_a = self.a if frag_a is None else Fraction(frag_a)
        self.frag_b = self.b if frag_b is None else Fraction(frag_b)

        if self.a < 0:
            raise DomainError(f"a={self.a} must be >= 0")
        if 2 * self.a + self.b < 0:
            raise DomainError(f"2a+b={2 * self.a + self.b} must be >= 0")
        if self.phi11 < 0:
            raise DomainError(f"phi11={self.phi11} must be >= 0")

        self.boundary = 2 * self.a + self.b == 0
        if self.boundary:
            logger.warning(
                f"Boundary parameters a={self.a}, b={self.b}: psi(1,1)=0, "
                f"Gibbs weights come from the fragmentation parameters"
            )
        if self.phi11 > 0 and (self.frag_a < 0 or 2 * self.frag_a + self.frag_b <= 0):
            raise DomainError(
                f"Fragmentation weights need frag_a >= 0 and 2*frag_a+frag_b > 0, "
                f"got ({self.frag_a}, {self.frag_b}); pass frag_a/frag_b explicitly"
            )
        self.name = self.describe()
        self._weights: Dict[int, Fraction] = {}

    def describe(self) -> str:
        text = f"solvable(a={format_rational(self.a)},b={format_rational(self.b)},phi11={format_rational(self.phi11)}"
        if (self.frag_a, self.frag_b) != (self.a, self.b):
            text += f",frag_a={format_rational(self.frag_a)},frag_b={format_rational(self.frag_b)}"
        return text + ")"

    @property
    def params(self) -> Tuple[Fraction, Fraction, Fraction]:
        return self.a, self.b, self.phi11

    def weight(self, k: int) -> Fraction:
        """Fragmentation weight a_k of (frag_a, frag_b)."""
        if k not in self._weights:
            from cfp.gibbs import closed_form_weight

            self._weights[k] = closed_form_weight(self.frag_a, self.frag_b, k)
        return self._weights[k]

    def _psi(self, i: int, j: int) -> Fraction:
        return self.a * (i + j) + self.b

    def _phi(self, i: int, j: int) -> Fraction:
        if self.phi11 == 0:
            return Fraction(0)
        fa, fb = self.frag_a, self.frag_b
        if i == j:
            return self.phi11 * self.weight(i) ** 2 / (2 * self.weight(2 * i)) * (2 * fa * i + fb)
        return self.phi11 * self.weight(i) * self.weight(j) / self.weight(i + j) * (fa * (i + j) + fb)

    def death_rate(self, r: int, n: int) -> Fraction:
        """mu_{r,N}: total coagulation rate out of level r."""
        return Fraction(r - 1, 2) * (2 * self.a * n + r * self.b)

    def birth_rate(self, r: int, n: int) -> Fraction:
        """lambda_{r,N}: total fragmentation rate out of level r."""
        return self.phi11 * (n - r)

    def __reduce__(self):
        return (SolvableKernel, (self.a, self.b, self.phi11, self.frag_a, self.frag_b))


# ============================
# Reference kernels
# ============================

def _example_psi(c: Fraction, i: int, j: int) -> Fraction:
    pair = (min(i, j), max(i, j))
    if pair in ((1, 1), (1, 2)):
        return Fraction(0)
    if pair == (2, 2):
        return c
    return Fraction(1)


def _zero(i: int, j: int) -> Fraction:
    return Fraction(0)


def _chain_phi(phi11: Fraction, i: int, j: int) -> Fraction:
    if min(i, j) == 1:
        return phi11 * (i + j - 1)
    return Fraction(0)


def example_kernel(c: Number) -> FunctionKernel:
    """psi(1,1)=psi(1,2)=0, psi(1,3)=1, psi(2,2)=c, every other psi 1, phi 0.

    At N=5 the level with three blocks holds (2,0,1,0,0) and (1,2,0,0,0),
    whose coagulation totals are 2*psi(1,3) and psi(2,2).
    """
    c = Fraction(c)
    return FunctionKernel(partial(_example_psi, c), _zero, name=f"example(c={format_rational(c)})")


def deterministic_chain_kernel(phi11: Number) -> FunctionKernel:
    """Only a singleton may split off: phi(1,k-1) = phi11 (k-1), psi = 0."""
    phi11 = Fraction(phi11)
    return FunctionKernel(
        _zero, partial(_chain_phi, phi11), name=f"deterministic-chain(phi11={format_rational(phi11)})"
    )


def product_kernel() -> FunctionKernel:
    """psi(i,j) = i*j with no fragmentation."""
    return FunctionKernel(_product, _zero, name="product")


def _product(i: int, j: int) -> int:
    return i * j


# ============================
# State-transition rates
# ============================

def state_rate(kernel: Kernel, move: Move) -> Fraction:
    """K or F for a single move.

    Args:
        kernel: Rate functions
        move: A coagulation or fragmentation with its source state

    Returns:
        n_i n_j psi(i,j), n_i(n_i-1)/2 psi(i,i) or n_{i+j} phi(i,j)
    """
    eta, i, j = move.source, move.i, move.j
    if eta.apply(move) != move.target:
        raise DomainError(f"{move.label} from {eta} does not lead to {move.target}")
    if move.kind is MoveKind.COAGULATE:
        if i == j:
            return Fraction(eta[i] * (eta[i] - 1), 2) * kernel.psi(i, i)
        return eta[i] * eta[j] * kernel.psi(i, j)
    return eta[i + j] * kernel.phi(i, j)


@dataclass(frozen=True)
class RateSummary:
    """Total coagulation and fragmentation outflow at one state."""
    coag_total: Fraction
    frag_total: Fraction

    @property
    def total(self) -> Fraction:
        return self.coag_total + self.frag_total


def rate_summary(kernel: Kernel, eta: Partition) -> RateSummary:
    coag = sum((state_rate(kernel, m) for m in coagulation_moves(eta)), Fraction(0))
    frag = sum((state_rate(kernel, m) for m in fragmentation_moves(eta)), Fraction(0))
    return RateSummary(coag_total=coag, frag_total=frag)


def level_rates(kernel: Kernel, n: int) -> Dict[int, RateSummary]:
    """Outflow totals per level.

    Closed forms for SolvableKernel; otherwise the totals at the first state of
    each level, which describe the whole level only for homogeneous kernels.
    """
    if isinstance(kernel, SolvableKernel):
        return {
            r: RateSummary(kernel.death_rate(r, n), kernel.birth_rate(r, n))
            for r in range(1, n + 1)
        }
    return {r: rate_summary(kernel, states[0]) for r, states in levels(n, max_n=n).items()}


def induced_v(kernel: Kernel, k: int) -> Fraction:
    """v_k = sum of phi(i,j) over i <= j, i + j = k; v_1 = 0."""
    return sum((kernel.phi(i, k - i) for i in range(1, k // 2 + 1)), Fraction(0))


# ============================
# Homogeneity
# ============================

def _cross_group_pairs(
    groups: Dict[Fraction, List[Partition]],
) -> Iterator[Tuple[Partition, Fraction, Partition, Fraction]]:
    for (v1, states1), (v2, states2) in combinations(groups.items(), 2):
        for eta in states1:
            for eta_prime in states2:
                yield eta, v1, eta_prime, v2


def _level_violations(
    quantity: str,
    r: int,
    values: Dict[Partition, Fraction],
    cap: int,
) -> Tuple[int, List[HomogeneityWitness]]:
    groups: Dict[Fraction, List[Partition]] = defaultdict(list)
    for eta, value in values.items():
        groups[value].append(eta)
    if len(groups) <= 1:
        return 0, []
    total_pairs = len(values) * (len(values) - 1) // 2
    same = sum(len(g) * (len(g) - 1) // 2 for g in groups.values())
    witnesses: List[HomogeneityWitness] = []
    for eta, v1, eta_prime, v2 in _cross_group_pairs(groups):
        if len(witnesses) >= cap:
            break
        witnesses.append(
            HomogeneityWitness(
                quantity=quantity,
                r=r,
                eta=list(eta.counts),
                eta_prime=list(eta_prime.counts),
                value=RationalValue.of(v1),
                value_prime=RationalValue.of(v2),
            )
        )
    return total_pairs - same, witnesses


def check_homogeneity(
    kernel: Kernel,
    n: int,
    witness_cap: int = WITNESS_CAP,
    max_n: Optional[int] = None,
) -> HomogeneityReport:
    """Test whether outflow totals are constant on every level of Omega_N.

    Args:
        kernel: Rate functions
        n: Partitioned integer, n >= 2
        witness_cap: Witnesses kept per level, shared by both quantities
        max_n: Override of the exact-mode cap

    Returns:
        Report with the violating pairs (capped) and their total count
    """
    if n < 2:
        raise DomainError(f"Homogeneity check needs N >= 2, got {n}")
    logger.info(f"Checking homogeneity of {kernel.describe()} at N={n}")

    violation_count = 0
    witnesses: List[HomogeneityWitness] = []
    bad_levels: List[int] = []
    for r, states in sorted(levels(n, max_n).items()):
        summaries = {eta: rate_summary(kernel, eta) for eta in states}
        level_bad = False
        budget = witness_cap
        for quantity, attr in (("coagulation", "coag_total"), ("fragmentation", "frag_total")):
            count, found = _level_violations(
                quantity, r, {eta: getattr(s, attr) for eta, s in summaries.items()}, budget
            )
            violation_count += count
            witnesses.extend(found)
            budget -= len(found)
            level_bad = level_bad or count > 0
        if level_bad:
            bad_levels.append(r)

    homogeneous = not bad_levels
    if homogeneous:
        logger.info(f"{kernel.describe()} is homogeneous at N={n}")
    else:
        logger.warning(
            f"{kernel.describe()} is inhomogeneous at N={n}: levels {bad_levels}, "
            f"{violation_count} violating pairs"
        )
    return HomogeneityReport(
        N=n,
        kernel=kernel.describe(),
        homogeneous=homogeneous,
        inhomogeneous_levels=bad_levels,
        violation_count=violation_count,
        witnesses=witnesses,
        witness_cap=witness_cap,
        boundary=bool(getattr(kernel, "boundary", False)),
    )


# ============================
# Float tables for numerics
# ============================

def kernel_tables(kernel: Kernel, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """psi and phi as (n+1, n+1) float arrays, filled where i + j <= n."""
    psi = np.zeros((n + 1, n + 1))
    phi = np.zeros((n + 1, n + 1))
    for i in range(1, n):
        for j in range(i, n - i + 1):
            psi[i, j] = psi[j, i] = float(kernel.psi(i, j))
            phi[i, j] = phi[j, i] = float(kernel.phi(i, j))
    return psi, phi
