"""Shared build fixtures; expensive contexts are session-scoped."""

from __future__ import annotations

import numpy as np
import pytest

from finegrid import (
    PartitionConfig,
    build_partition,
    build_sigma_basis,
)
from finegrid.derivative import assemble_all_axes, build_splitter
from finegrid.spaces import build_spline_tower


class Calculus:
    """Bundle of partition, tower, basis, splitter and operators."""

    def __init__(self, pconf, coarse_points=None, degree=3, probes=30):
        self.partition = build_partition(pconf, coarse_points)
        self.tower = build_spline_tower(self.partition, degree=degree)
        self.basis = build_sigma_basis(self.tower, self.partition)
        self.splitter = build_splitter(self.basis)
        self.ops = assemble_all_axes(self.splitter, probes=probes)

    @property
    def weights(self):
        return self.basis.weights

    @property
    def d(self):
        return self.basis.weights.weights


@pytest.fixture(scope="session")
def calc_1d():
    """Regular 1D grid: L=2, h=1/4, eta=1/32 (128 points)."""
    return Calculus(PartitionConfig(dimension=1, l_half=2.0, h_coarse=0.25, eta=0.25 / 8))


@pytest.fixture(scope="session")
def calc_1d_fine():
    """Regular 1D grid at working resolution: L=2, h=1/8, eta=1/128."""
    return Calculus(
        PartitionConfig(dimension=1, l_half=2.0, h_coarse=0.125, eta=0.125 / 16)
    )


@pytest.fixture(scope="session")
def calc_two_scale():
    """Two-scale 1D grid with two coarse cells."""
    return Calculus(
        PartitionConfig(dimension=1, l_half=2.0, h_coarse=0.25, eta=0.25 / 8),
        coarse_points=[[-0.6], [0.4]],
    )


@pytest.fixture(scope="session")
def calc_2d():
    """Small 2D grid with two coarse cells."""
    return Calculus(
        PartitionConfig(dimension=2, l_half=2.0, h_coarse=0.5, eta=0.125),
        coarse_points=[[0.25, 0.25], [-0.75, 0.3]],
        probes=10,
    )
