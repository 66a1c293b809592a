"""
Data models for reports and artifacts.

Everything that leaves the library through the CLI is one of these models;
rationals travel as "p/q" strings next to their float rendering.
"""

from datetime import datetime
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional
from pydantic import BaseModel, Field, model_validator


def format_rational(value: Fraction) -> str:
    """'p/q', or a bare integer when q == 1."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


class RationalValue(BaseModel):
    """Exact rational with a float view."""
    exact: str
    approx: float

    @classmethod
    def of(cls, value: Fraction) -> "RationalValue":
        return cls(exact=format_rational(value), approx=float(value))

    def fraction(self) -> Fraction:
        return Fraction(self.exact)


class PartitionRecord(BaseModel):
    """One state of Omega_N with its stable index."""
    index: int
    N: int
    r: int
    counts: List[int]
    text: str


# ============================
# Kernels
# ============================

class HomogeneityWitness(BaseModel):
    """Two states of one level whose outflow totals differ."""
    quantity: Literal["coagulation", "fragmentation"]
    r: int
    eta: List[int]
    eta_prime: List[int]
    value: RationalValue
    value_prime: RationalValue


class HomogeneityReport(BaseModel):
    """Result of the level-constancy check of outflow totals."""
    N: int
    kernel: str
    homogeneous: bool
    inhomogeneous_levels: List[int] = Field(default_factory=list)
    violation_count: int = 0
    witnesses: List[HomogeneityWitness] = Field(default_factory=list)
    witness_cap: int
    boundary: bool = False


# ============================
# Gibbs verification
# ============================

class VerificationCheck(BaseModel):
    """Tally for one family of identities."""
    name: str
    checked: int = 0
    violations: int = 0


class VerificationIssue(BaseModel):
    """A single violated identity."""
    check: str
    r: int
    state: List[int]
    other: Optional[List[int]] = None
    lhs: str
    rhs: str


class VerificationReport(BaseModel):
    """Outcome of an exact identity sweep."""
    N: int
    kernel: str
    checks: List[VerificationCheck] = Field(default_factory=list)
    issues: List[VerificationIssue] = Field(default_factory=list)
    passed: bool = True

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        return VerificationReport(
            N=max(self.N, other.N),
            kernel=self.kernel,
            checks=self.checks + other.checks,
            issues=self.issues + other.issues,
            passed=self.passed and other.passed,
        )


# ============================
# Birth and death chain
# ============================

class GapReport(BaseModel):
    """Spectral gap of the block-count chain with Zeifman bounds."""
    N: int
    numerical_gap: float
    lower: float
    upper: float
    exact: Optional[float] = None
    alphas: List[float] = Field(default_factory=list)
    within_bounds: bool = True
    optimal_deltas: Optional[List[float]] = None
    optimal_lower: Optional[float] = None
    optimal_upper: Optional[float] = None
    full_gap: Optional[float] = None
    full_gap_difference: Optional[float] = None


# ============================
# Weight asymptotics
# ============================

class AsymptoticsRow(BaseModel):
    """Diagnostics for one weight index."""
    k: int
    log_a_k: float
    a_k: Optional[float] = None
    ratio: Optional[float] = None
    normalized: Optional[float] = None


class AsymptoticsReport(BaseModel):
    """Weight growth series and class of the invariant measure."""
    a: str
    b: str
    K: int
    alpha: float
    weight_class: Literal["convergent", "expansive"]
    growth_constant: Optional[float] = None
    log_domain: bool = True
    rows: List[AsymptoticsRow] = Field(default_factory=list)


# ============================
# Exact dynamics
# ============================

class SnapshotRecord(BaseModel):
    """Level masses and conditional tables at one time."""
    t: float
    level_mass: Dict[str, float]
    Q: Dict[str, Dict[str, float]]
    absent_levels: List[int] = Field(default_factory=list)


# ============================
# Simulation
# ============================

class SimConfig(BaseModel):
    """Parameters of a batch of SSA trajectories."""
    N: int = Field(ge=1)
    kernel: str
    init: str = "singletons"
    T: float = Field(ge=0)
    snapshots: List[float]
    trajectories: int = Field(default=1000, ge=1)
    base_seed: int = Field(default=0, ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _snapshots_in_horizon(self) -> "SimConfig":
        if not self.snapshots:
            raise ValueError("At least one snapshot time is required")
        for t in self.snapshots:
            if t < 0 or t > self.T:
                raise ValueError(f"Snapshot time {t} outside [0, {self.T}]")
        if list(self.snapshots) != sorted(self.snapshots):
            raise ValueError("Snapshot times must be non-decreasing")
        return self


class LargestBlockStats(BaseModel):
    mean: float
    stderr: float
    quantiles: Dict[str, float]


class LevelSummary(BaseModel):
    """Per-level summary used when states are too many to tabulate."""
    count: int
    mean_largest: float


class SnapshotStats(BaseModel):
    """Empirical distributions at one snapshot time."""
    t: float
    level_probs: Dict[str, float]
    level_stderr: Dict[str, float]
    conditional: Optional[Dict[str, Dict[str, float]]] = None
    conditional_summary: Optional[Dict[str, LevelSummary]] = None
    largest_block: LargestBlockStats


class TrajectoryStats(BaseModel):
    """Aggregated SSA output."""
    config: SimConfig
    snapshots: List[SnapshotStats]
    events: int
    absorbed: int = 0


class GelationRow(BaseModel):
    N: int
    t: float
    mean_largest: float
    stderr: float
    fraction_of_N: float
    threshold_scale: float
    ratio_to_threshold: float


class GelationReport(BaseModel):
    a: str
    b: str
    phi11: str
    alpha: float
    weight_class: str
    rows: List[GelationRow] = Field(default_factory=list)


# ============================
# Provenance
# ============================

class ManifestEntry(BaseModel):
    path: str
    sha256: str
    bytes: int


class RunManifest(BaseModel):
    """Everything needed to rerun a command exactly."""
    command: str
    parameters: Dict[str, Any] = Field(default_factory=dict)
    version: str
    seeds: List[int] = Field(default_factory=list)
    started_at: str = Field(default_factory=lambda: datetime.now().isoformat())
    finished_at: str = ""
    outputs: List[ManifestEntry] = Field(default_factory=list)
