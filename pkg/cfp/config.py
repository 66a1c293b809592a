"""
Configuration module for the cfp package.

All settings come from the environment (or a local .env file) and are exposed
as typed module-level constants, organized by functional area.
"""

import os
import logging
from pathlib import Path
from typing import Final
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# ============================
# Exact-mode limits
# ============================

# Largest N for which Omega_N is enumerated and generators are assembled
MAX_EXACT_N: Final[int] = int(os.getenv("CFP_MAX_N", "30"))

# Count vectors are dense; nothing above this is representable
DENSE_MAX_N: Final[int] = int(os.getenv("CFP_DENSE_MAX_N", "64"))

# Default length K of exact weight tables
WEIGHT_TABLE_CAP: Final[int] = int(os.getenv("CFP_WEIGHT_CAP", "64"))

# Homogeneity witnesses kept per level (the full count is always reported)
WITNESS_CAP: Final[int] = int(os.getenv("CFP_WITNESS_CAP", "100"))

# ============================
# Numerical tolerances
# ============================

EVOLVE_TOL: Final[float] = float(os.getenv("CFP_EVOLVE_TOL", "1e-10"))
MASS_DRIFT_TOL: Final[float] = float(os.getenv("CFP_MASS_TOL", "1e-9"))
LEVEL_MASS_FLOOR: Final[float] = float(os.getenv("CFP_LEVEL_FLOOR", "1e-14"))
STATIONARY_TOL: Final[float] = 1e-10
GAP_SLACK: Final[float] = 1e-8
IMAG_TOL: Final[float] = 1e-9

# Largest Lambda*h per uniformization sub-step (keeps exp(-Lambda*h) representable)
UNIFORMIZATION_MAX_STEP: Final[float] = 20.0

ASYMPTOTICS_MAX_K: Final[int] = int(os.getenv("CFP_ASYMPTOTICS_MAX_K", "400"))

# ============================
# Simulation
# ============================

SSA_FULL_RECOMPUTE_EVERY: Final[int] = int(os.getenv("CFP_SSA_RECOMPUTE", "10000"))
SSA_TABULATE_MAX_N: Final[int] = int(os.getenv("CFP_SSA_TABULATE_MAX_N", "12"))
WORKERS: Final[int] = int(os.getenv("CFP_WORKERS", "1"))
LARGEST_BLOCK_QUANTILES: Final[tuple] = (0.1, 0.25, 0.5, 0.75, 0.9)

# ============================
# Files
# ============================

PRESETS_FILE: Final[str] = os.getenv(
    "CFP_PRESETS", str(Path(__file__).with_name("presets.yml"))
)

# ============================
# Logger Configuration
# ============================

LOG_LEVEL: Final[str] = os.getenv("CFP_LOG_LEVEL", "INFO")
LOG_FORMAT: Final[str] = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logging.basicConfig(
    level=LOG_LEVEL,
    format=LOG_FORMAT
)
logger = logging.getLogger("cfp")
