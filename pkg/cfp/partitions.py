"""
State space of integer partitions.

A state is the multiplicity vector eta = (n_1, ..., n_N) of a partition of N,
n_i being the number of blocks of size i. Enumeration order is fixed:
descending block count, then descending lexicographic order on the count
vector inside a level. Index positions are therefore stable across runs and
distribution vectors can be serialized by index.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from cfp.config import DENSE_MAX_N, MAX_EXACT_N
from cfp.errors import CapacityError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=False)
class Partition:
    """Multiplicity vector of an integer partition of n."""

    counts: Tuple[int, ...]
    n: int = field(init=False)

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if not counts:
            raise DomainError("Partition needs at least one count")
        if len(counts) > DENSE_MAX_N:
            raise CapacityError(
                f"N={len(counts)} exceeds the dense representation limit {DENSE_MAX_N}"
            )
        if any(c < 0 for c in counts):
            raise DomainError(f"Negative multiplicity in {counts}")
        mass = sum(size * c for size, c in enumerate(counts, start=1))
        if mass != len(counts):
            raise DomainError(
                f"Counts {counts} have mass {mass}, expected N={len(counts)}"
            )
        object.__setattr__(self, "n", len(counts))

    # ---- constructors ------------------------------------------------------

    @classmethod
    def from_parts(cls, parts: Sequence[int], n: Optional[int] = None) -> "Partition":
        """Build a partition from its block sizes, e.g. [3, 1]."""
        total = sum(parts)
        n = total if n is None else n
        if total != n or any(p < 1 for p in parts):
            raise DomainError(f"Parts {list(parts)} do not partition {n}")
        counts = [0] * n
        for p in parts:
            counts[p - 1] += 1
        return cls(tuple(counts))

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        """All blocks of size one, (n, 0, ..., 0)."""
        return cls((n,) + (0,) * (n - 1))

    @classmethod
    def single_block(cls, n: int) -> "Partition":
        """One block holding everything, (0, ..., 0, 1)."""
        return cls((0,) * (n - 1) + (1,))

    # ---- accessors ---------------------------------------------------------

    def __getitem__(self, size: int) -> int:
        """Number of blocks of the given size (0 outside 1..n)."""
        if 1 <= size <= self.n:
            return self.counts[size - 1]
        return 0

    @property
    def block_count(self) -> int:
        return sum(self.counts)

    @property
    def largest_block(self) -> int:
        for size in range(self.n, 0, -1):
            if self.counts[size - 1]:
                return size
        return 0

    def sizes(self) -> List[int]:
        """Distinct block sizes present, ascending."""
        return [size for size, c in enumerate(self.counts, start=1) if c]

    # ---- transitions -------------------------------------------------------

    def coagulate(self, i: int, j: int) -> "Partition":
        """eta^{(i,j)}: merge one block of size i with one of size j."""
        i, j = min(i, j), max(i, j)
        if i < 1 or i + j > self.n:
            raise DomainError(f"Cannot coagulate sizes {i},{j} in N={self.n}")
        needed = 2 if i == j else 1
        if self[i] < needed or self[j] < 1:
            raise DomainError(f"Coagulate({i},{j}) invalid from {self.text()}")
        counts = list(self.counts)
        counts[i - 1] -= 1
        counts[j - 1] -= 1
        counts[i + j - 1] += 1
        return Partition(tuple(counts))

    def fragment(self, i: int, j: int) -> "Partition":
        """eta_{(i,j)}: split one block of size i+j into sizes i and j."""
        i, j = min(i, j), max(i, j)
        if i < 1 or i + j > self.n or self[i + j] < 1:
            raise DomainError(f"Fragment({i},{j}) invalid from {self.text()}")
        counts = list(self.counts)
        counts[i + j - 1] -= 1
        counts[i - 1] += 1
        counts[j - 1] += 1
        return Partition(tuple(counts))

    def apply(self, move: "Move") -> "Partition":
        """Target of move, recomputed from this state."""
        if move.kind is MoveKind.COAGULATE:
            return self.coagulate(move.i, move.j)
        return self.fragment(move.i, move.j)

    # ---- serialization -----------------------------------------------------

    def text(self) -> str:
        """Compact text form, e.g. '1^1 3^1'."""
        return " ".join(
            f"{size}^{c}" for size, c in enumerate(self.counts, start=1) if c
        )

    def to_dict(self) -> Dict[str, object]:
        return {"N": self.n, "counts": list(self.counts)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "Partition":
        counts = tuple(data["counts"])  # type: ignore[arg-type]
        if int(data["N"]) != len(counts):  # type: ignore[arg-type]
            raise DomainError(f"N={data['N']} does not match {len(counts)} counts")
        return cls(counts)

    @classmethod
    def from_json(cls, payload: str) -> "Partition":
        return cls.from_dict(json.loads(payload))

    @classmethod
    def parse_text(cls, text: str, n: int) -> "Partition":
        """Inverse of text(); n is needed because the text omits empty sizes."""
        counts = [0] * n
        for token in text.split():
            try:
                size_str, mult_str = token.split("^")
                size, mult = int(size_str), int(mult_str)
            except ValueError as e:
                raise DomainError(f"Malformed partition token '{token}'") from e
            if not 1 <= size <= n:
                raise DomainError(f"Block size {size} outside 1..{n}")
            counts[size - 1] += mult
        return cls(tuple(counts))

    def __str__(self) -> str:
        return f"({','.join(str(c) for c in self.counts)})"


class MoveKind(str, Enum):
    """Direction of a single transition."""
    COAGULATE = "coagulate"
    FRAGMENT = "fragment"


@dataclass(frozen=True)
class Move:
    """A single coagulation or fragmentation with its resolved target."""

    kind: MoveKind
    i: int
    j: int
    source: Partition
    target: Partition

    @property
    def label(self) -> str:
        name = "Coagulate" if self.kind is MoveKind.COAGULATE else "Fragment"
        return f"{name}({self.i},{self.j})"

    def swapped(self) -> "Move":
        """The same move with its size labels exchanged."""
        return Move(self.kind, self.j, self.i, self.source, self.target)


# ============================
# Enumeration
# ============================

def _check_n(n: int, max_n: Optional[int]) -> None:
    cap = MAX_EXACT_N if max_n is None else max_n
    if n < 1 or n > cap:
        raise CapacityError(f"N={n} outside the exact range 1..{cap}")


def _parts_exactly(n: int, r: int, largest: int) -> Iterator[Tuple[int, ...]]:
    """Non-increasing part tuples of n with exactly r parts, each <= largest."""
    if r == 0:
        if n == 0:
            yield ()
        return
    if n < r or n > r * largest:
        return
    for first in range(min(largest, n - r + 1), 0, -1):
        for rest in _parts_exactly(n - first, r - 1, first):
            yield (first,) + rest


def _level_key(p: Partition) -> Tuple[int, ...]:
    # descending lexicographic on counts
    return tuple(-c for c in p.counts)


@lru_cache(maxsize=128)
def _level(n: int, r: int) -> Tuple[Partition, ...]:
    states = [Partition.from_parts(parts, n) for parts in _parts_exactly(n, r, n)]
    states.sort(key=_level_key)
    return tuple(states)


def level_slice(n: int, r: int) -> List[Partition]:
    """Omega_{N,r}: all partitions of n with exactly r blocks.

    Args:
        n: The partitioned integer
        r: Block count, 1 <= r <= n

    Returns:
        States of the level in the documented order
    """
    if n < 1 or n > DENSE_MAX_N:
        raise CapacityError(f"N={n} outside 1..{DENSE_MAX_N}")
    if not 1 <= r <= n:
        raise DomainError(f"Level r={r} outside 1..{n}")
    return list(_level(n, r))


def enumerate_partitions(n: int, max_n: Optional[int] = None) -> List[Partition]:
    """Omega_N in the stable order: descending r, then descending lex in a level.

    Args:
        n: The partitioned integer
        max_n: Override of the exact-mode cap (CFP_MAX_N)

    Returns:
        Every partition of n exactly once
    """
    _check_n(n, max_n)
    states: List[Partition] = []
    for r in range(n, 0, -1):
        states.extend(_level(n, r))
    logger.debug(f"Enumerated {len(states)} partitions of N={n}")
    return states


def levels(n: int, max_n: Optional[int] = None) -> Dict[int, List[Partition]]:
    """All levels of Omega_N keyed by block count."""
    _check_n(n, max_n)
    return {r: list(_level(n, r)) for r in range(1, n + 1)}


def partition_number(n: int) -> int:
    """p(n) from Euler's pentagonal number recurrence."""
    if n < 0:
        return 0
    p = [1] + [0] * n
    for m in range(1, n + 1):
        total = 0
        k = 1
        while True:
            g1 = k * (3 * k - 1) // 2
            if g1 > m:
                break
            sign = 1 if k % 2 else -1
            total += sign * p[m - g1]
            g2 = k * (3 * k + 1) // 2
            if g2 <= m:
                total += sign * p[m - g2]
            k += 1
        p[m] = total
    return p[n]


# ============================
# Neighborhood
# ============================

def coagulation_moves(eta: Partition) -> List[Move]:
    result: List[Move] = []
    sizes = eta.sizes()
    for idx, i in enumerate(sizes):
        for j in sizes[idx:]:
            if i + j > eta.n:
                continue
            if i == j and eta[i] < 2:
                continue
            result.append(Move(MoveKind.COAGULATE, i, j, eta, eta.coagulate(i, j)))
    return result


def fragmentation_moves(eta: Partition) -> List[Move]:
    result: List[Move] = []
    for k in eta.sizes():
        for i in range(1, k // 2 + 1):
            result.append(Move(MoveKind.FRAGMENT, i, k - i, eta, eta.fragment(i, k - i)))
    return result


def moves(eta: Partition) -> List[Move]:
    """All valid single coagulations and fragmentations from eta.

    Unordered size pairs {i, j} appear once, labelled with i <= j.
    """
    return coagulation_moves(eta) + fragmentation_moves(eta)


def state_index(states: Sequence[Partition]) -> Dict[Partition, int]:
    return {state: idx for idx, state in enumerate(states)}
