"""
Named kernel presets loaded from YAML.
"""

from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

import yaml

from cfp.config import PRESETS_FILE
from cfp.errors import DomainError
from cfp.serialize import parse_rational

import logging

logger = logging.getLogger(__name__)

Params = Tuple[Fraction, Fraction, Fraction]


class PresetLibrary:
    """Solvable parameter sets and the verification grid."""

    def __init__(self, preset_file: Optional[str] = None):
        """Initialize the library.

        Args:
            preset_file: Path to the YAML preset file (CFP_PRESETS by default)
        """
        self.preset_file = preset_file or PRESETS_FILE
        self._data: Optional[Dict[str, Any]] = None

    def _load(self) -> Dict[str, Any]:
        if self._data is None:
            try:
                with open(self.preset_file) as f:
                    self._data = yaml.safe_load(f) or {}
            except (OSError, yaml.YAMLError) as e:
                logger.error(f"Failed to load presets from {self.preset_file}: {e}")
                raise
        return self._data

    def names(self) -> List[str]:
        return sorted(self._load().get("presets", {}))

    def _entry(self, name: str) -> Dict[str, Any]:
        presets = self._load().get("presets", {})
        if name not in presets:
            raise DomainError(f"Unknown preset '{name}'; available: {', '.join(self.names())}")
        return presets[name]

    def params(self, name: str) -> Params:
        entry = self._entry(name)
        return tuple(parse_rational(str(entry[key])) for key in ("a", "b", "phi11"))  # type: ignore[return-value]

    def grid(self) -> List[Params]:
        """(a, b, phi11) triples of the verification grid."""
        section = self._load().get("verification_grid", {})
        phi11 = parse_rational(str(section.get("phi11", "1")))
        return [(parse_rational(str(a)), parse_rational(str(b)), phi11) for a, b in section.get("pairs", [])]
