"""One-stop build of the certified calculus from a configuration."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .config import ConfigError, RunConfig
from .derivative import (
    DerivativeOperator,
    Splitter,
    assemble_all_axes,
    build_splitter,
)
from .manifest import RunManifest
from .partition import Partition, PartitionConfig, build_partition
from .sigma import SigmaBasis, build_sigma_basis
from .spaces import SpaceTower, build_spline_tower

__all__ = ["BuildContext"]


@dataclass
class BuildContext:
    """Partition, tower, cardinal basis, splitter and certified operators."""

    config: RunConfig
    partition: Partition
    tower: SpaceTower
    basis: SigmaBasis
    splitter: Splitter
    operators: List[DerivativeOperator]
    manifest: RunManifest

    @classmethod
    def from_config(
        cls, cfg: RunConfig, seed: int = 0, threads: int = 1
    ) -> "BuildContext":
        t0 = time.time()
        p = cfg.sections.get("partition", {})
        try:
            pconf = PartitionConfig(
                dimension=int(p.get("dimension", 1)),
                l_half=float(p.get("l_half", 2.0)),
                h_coarse=float(p.get("h_coarse", 0.125)),
                eta=float(p.get("h_coarse", 0.125)) / int(p.get("eta_factor", 16)),
                refine_budget=int(p.get("refine_budget", 3)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        coarse = p.get("coarse_points", [])
        partition = build_partition(pconf, coarse)

        t = cfg.sections.get("tower", {})
        tower = build_spline_tower(
            partition,
            degree=int(t.get("degree", 3)),
            quadrature_nodes=int(t.get("quadrature_nodes", 8)),
            collar_cells=int(t.get("collar_cells", 2)),
        )
        basis = build_sigma_basis(
            tower,
            partition,
            interp_kind=str(t.get("interp_kind", "cell")),
            locality_radius=t.get("locality_radius"),
            tower_builder=lambda part: build_spline_tower(
                part,
                degree=int(t.get("degree", 3)),
                quadrature_nodes=int(t.get("quadrature_nodes", 8)),
                collar_cells=int(t.get("collar_cells", 2)),
            ),
        )
        partition = basis.partition  # may have been refined for positivity

        splitter = build_splitter(basis)
        dcfg = cfg.sections.get("derivative", {})
        operators = assemble_all_axes(
            splitter,
            probes=int(dcfg.get("probes", 100)),
            seed=int(dcfg.get("seed", 20240)),
            svd_tol=float(dcfg.get("svd_tol", 1e-10)),
        )

        manifest = RunManifest(config=cfg, seed=seed, threads=threads)
        manifest.record_partition(partition, basis)
        manifest.record_operators(operators)
        manifest.time_block("build", t0)
        return cls(
            config=cfg,
            partition=partition,
            tower=tower,
            basis=basis,
            splitter=splitter,
            operators=operators,
            manifest=manifest,
        )
