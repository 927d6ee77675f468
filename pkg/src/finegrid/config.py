"""Strict sectioned key/value configuration for reproducible runs.

The format is INI-like: ``[section]`` headers, ``key = value`` lines, ``#``
comments.  Unknown sections or keys are errors, every tunable named in the
library's design notes has a key here, and the parsed document carries its
own canonical text for hashing.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

__all__ = ["ConfigError", "RunConfig", "parse_config", "DEFAULT_CONFIG"]


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


_SCHEMA: Dict[str, Dict[str, str]] = {
    "partition": {
        "dimension": "int",
        "l_half": "float",
        "h_coarse": "float",
        "eta_factor": "int",
        "coarse_points": "points",
        "refine_budget": "int",
    },
    "tower": {
        "degree": "int",
        "collar_cells": "int",
        "quadrature_nodes": "int",
        "interp_kind": "str",
        "locality_radius": "float",
    },
    "derivative": {
        "probes": "int",
        "seed": "int",
        "svd_tol": "float",
    },
    "sets": {
        "support_tol": "float",
    },
    "ladder": {
        "max_level": "int",
        "rank_tol": "float",
        "stability_tol": "float",
    },
    "problem": {
        "kind": "str",
        "domain_lo": "floats",
        "domain_hi": "floats",
        "form": "str",
        "power": "float",
        "shift": "float",
        "count": "int",
        "t_end": "float",
        "dt": "float",
        "integrator": "str",
        "tol": "float",
        "max_iter": "int",
        "method": "str",
        "damping": "float",
        "ceiling": "float",
        "record_every": "int",
        "conductivity": "str",
        "space": "str",
    },
    "output": {
        "plot": "bool",
    },
}

DEFAULT_CONFIG = """\
[partition]
dimension = 1
l_half = 2.0
h_coarse = 0.125
eta_factor = 16
coarse_points =
refine_budget = 3

[tower]
degree = 3
collar_cells = 2
quadrature_nodes = 8
interp_kind = cell

[derivative]
probes = 100
seed = 20240
svd_tol = 1e-10

[sets]
support_tol = 1e-3

[ladder]
max_level = 6
rank_tol = 1e-10

[problem]
kind = poisson
domain_lo = 0.0
domain_hi = 1.0

[output]
plot = true
"""


@dataclass
class RunConfig:
    """Parsed, validated configuration with its canonical text."""

    sections: Dict[str, Dict[str, object]]
    text: str

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def content_hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]


def _parse_value(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "floats":
            return [float(v) for v in raw.replace(",", " ").split()]
        if kind == "points":
            if not raw:
                return []
            pts = []
            for chunk in raw.split(";"):
                chunk = chunk.strip()
                if chunk:
                    pts.append([float(v) for v in chunk.replace(",", " ").split()])
            return pts
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}: {exc}") from exc
    raise ConfigError(f"unknown schema kind {kind}")


def parse_config(text: str) -> RunConfig:
    sections: Dict[str, Dict[str, object]] = {}
    current: Optional[str] = None
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if current not in _SCHEMA:
                raise ConfigError(f"line {ln}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {ln}: expected 'key = value', got {stripped!r}")
        if current is None:
            raise ConfigError(f"line {ln}: key outside of any section")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA[current]:
            raise ConfigError(f"line {ln}: unknown key {key!r} in [{current}]")
        sections[current][key] = _parse_value(
            _SCHEMA[current][key], raw, f"[{current}] {key}"
        )
    return RunConfig(sections=sections, text=text)
