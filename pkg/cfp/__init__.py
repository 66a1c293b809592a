"""Mean-field coagulation-fragmentation processes on integer partitions."""

__version__ = "0.1.0"

from cfp.errors import (  # noqa: E402
    CapacityError,
    CFPError,
    DomainError,
    KernelFileError,
    SolverError,
    StochasticityError,
)
from cfp.kernels import FunctionKernel, SolvableKernel, TabulatedKernel  # noqa: E402
from cfp.partitions import Partition, enumerate_partitions  # noqa: E402

__all__ = [
    "__version__",
    "CapacityError",
    "CFPError",
    "DomainError",
    "KernelFileError",
    "SolverError",
    "StochasticityError",
    "FunctionKernel",
    "SolvableKernel",
    "TabulatedKernel",
    "Partition",
    "enumerate_partitions",
]
