"""Run manifests: reproducibility record written next to every artifact set."""

from __future__ import annotations

import hashlib
import json
import platform
import time
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import __version__
from .config import RunConfig

__all__ = ["RunManifest"]


@dataclass
class RunManifest:
    """Config snapshot, build summary, certification record and timings.

    Re-running with the same manifest inputs (config text, seed, library
    version) reproduces bit-identical CSV outputs: every reduction in the
    library is fixed-order and the random streams are seeded.
    """

    config: RunConfig
    seed: int
    threads: int
    partition_summary: Dict = field(default_factory=dict)
    certification: Dict = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    extra: Dict = field(default_factory=dict)
    started: float = field(default_factory=time.time)

    def record_partition(self, partition, basis) -> None:
        cfg = partition.config
        self.partition_summary = {
            "dimension": cfg.dimension,
            "l_half": cfg.l_half,
            "h_coarse": cfg.h_coarse,
            "eta": cfg.eta,
            "n_points": partition.n_points,
            "n_coarse": partition.n_coarse,
            "min_weight": float(np.min(basis.weights.weights)),
            "weight_total": basis.weights.total(),
            "interp_kind": basis.interp_kind,
            "refinements_used": basis.refinements_used,
        }

    def record_operators(self, ops) -> None:
        self.certification = {
            f"axis_{op.axis}": op.certification.as_dict() for op in ops
        }

    def time_block(self, name: str, start: float) -> None:
        self.timings[name] = time.time() - start

    def to_json(self) -> str:
        doc = {
            "library_version": __version__,
            "python": platform.python_version(),
            "config_hash": self.config.content_hash(),
            "config_text": self.config.text,
            "seed": self.seed,
            "threads": self.threads,
            "partition": self.partition_summary,
            "certification": self.certification,
            "timings": {k: round(v, 4) for k, v in self.timings.items()},
            "extra": self.extra,
        }
        return json.dumps(doc, indent=2, default=float)
