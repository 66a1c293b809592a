from fractions import Fraction

import pytest
import yaml

from cfp.errors import DomainError
from cfp.kernels import SolvableKernel
from cfp.presets import PresetLibrary
from cfp.suite import run_suite, run_suites


def test_builtin_presets():
    library = PresetLibrary()
    assert {"constant", "additive", "mixed", "half", "pure-coagulation"} <= set(library.names())
    assert library.params("half") == (Fraction(1, 2), Fraction(3), Fraction(1))
    assert SolvableKernel(*library.params("constant")).describe() == "solvable(a=0,b=2,phi11=1)"
    assert library.grid()[0] == (Fraction(0), Fraction(2), Fraction(1))


def test_unknown_preset():
    with pytest.raises(DomainError):
        PresetLibrary().params("quadratic")


def test_custom_preset_file(tmp_path):
    path = tmp_path / "presets.yml"
    path.write_text(yaml.safe_dump({
        "presets": {"slow": {"a": "1/3", "b": "1", "phi11": "1/2"}},
        "verification_grid": {"phi11": "2", "pairs": [["1", "1"]]},
    }))
    library = PresetLibrary(str(path))
    assert library.names() == ["slow"]
    assert library.params("slow") == (Fraction(1, 3), Fraction(1), Fraction(1, 2))
    assert library.grid() == [(Fraction(1), Fraction(1), Fraction(2))]


def test_missing_preset_file(tmp_path):
    with pytest.raises(OSError):
        PresetLibrary(str(tmp_path / "none.yml")).names()


@pytest.mark.parametrize("a, b", [(0, 2), (1, 0), (1, 1), (Fraction(1, 2), 3)])
def test_suite_passes_on_grid(a, b):
    report = run_suite(SolvableKernel(a, b, 1), 6)
    assert report.passed, report.issues[:3]
    names = {c.name for c in report.checks}
    assert {"weights", "bell", "homogeneity", "gap-bounds", "stationary", "reversibility"} <= names
    assert "factorization:singletons" in names


def test_suite_without_fragmentation(coagulation_only):
    report = run_suite(coagulation_only, 5)
    assert report.passed, report.issues[:3]
    assert "gap-bounds" not in {c.name for c in report.checks}


@pytest.mark.slow
def test_suites_over_sizes():
    reports = run_suites([SolvableKernel(1, 1, 1)], 9)
    assert [r.N for r in reports] == list(range(2, 10))
    assert all(r.passed for r in reports)
