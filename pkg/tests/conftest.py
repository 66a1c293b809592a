from fractions import Fraction

import pytest

from cfp.kernels import SolvableKernel


@pytest.fixture
def constant_kernel() -> SolvableKernel:
    """psi = 2, a_k = 1."""
    return SolvableKernel(0, 2, 1)


@pytest.fixture
def additive_kernel() -> SolvableKernel:
    """psi = i + j, a_k = k^(k-1)/k!."""
    return SolvableKernel(1, 0, 1)


@pytest.fixture
def half_kernel() -> SolvableKernel:
    return SolvableKernel(Fraction(1, 2), 3, 1)


@pytest.fixture
def coagulation_only() -> SolvableKernel:
    return SolvableKernel(1, 0, 0)


@pytest.fixture
def kernel_csv(tmp_path):
    """Write a kernel table and return its path."""
    def _write(text: str, name: str = "kernel.csv") -> str:
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write
