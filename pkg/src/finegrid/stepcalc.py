"""Fine-lattice step functions, the step integral and the centred step derivative.

A step view is a value table over the full fine lattice; any grid value
table spreads to one by copying each cell value over the fine cells the
cell is made of.  The centred difference at mesh eta, with reads beyond Q
taken as zero, is exactly antisymmetric under the step integral and has a
trivial kernel whenever the per-axis fine-cell count is even.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .partition import (
    GridFunction,
    Partition,
    PartitionError,
    compensated_sum,
)

__all__ = [
    "StepView",
    "spread",
    "read_back",
    "step_integral",
    "step_inner",
    "step_norm2",
    "step_derivative",
    "step_derivative_matrix",
    "verify_step_identities",
]


@dataclass(frozen=True)
class StepView:
    """Values on fine-cell centers, representing a fine-lattice step function."""

    partition: Partition
    values: np.ndarray  # flat, length fine_per_axis ** N

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.partition.n_fine_total,):
            raise PartitionError("step view length mismatch")

    def grid(self) -> np.ndarray:
        """Values reshaped to the per-axis fine lattice."""
        n = self.partition.config.fine_per_axis
        if self.partition.config.dimension == 1:
            return self.values
        return self.values.reshape(n, n)


def spread(u: GridFunction) -> StepView:
    """Copy each cell value over all fine cells composing that cell."""
    return StepView(u.partition, u.values[u.partition.fine_owner])


def read_back(v: StepView, partition: Partition) -> GridFunction:
    """Read a step view at the grid points (value of the enclosing fine cell)."""
    return GridFunction(partition, v.values[partition.point_home_cell])


def step_integral(u: StepView) -> float:
    """eta^N times the compensated sum of fine-cell values."""
    cfg = u.partition.config
    return cfg.eta ** cfg.dimension * compensated_sum(u.values)


def step_inner(u: StepView, v: StepView) -> float:
    cfg = u.partition.config
    return cfg.eta ** cfg.dimension * compensated_sum(u.values * v.values)


def step_norm2(u: StepView) -> float:
    return np.sqrt(max(step_inner(u, u), 0.0))


def _shift(values: np.ndarray, axis: int, offset: int, dim: int, n: int) -> np.ndarray:
    """Shifted table with zero fill: result[s] = values[s + offset e_axis]."""
    if dim == 1:
        out = np.zeros_like(values)
        if offset > 0:
            out[:-offset] = values[offset:]
        elif offset < 0:
            out[-offset:] = values[:offset]
        else:
            out[:] = values
        return out
    g = values.reshape(n, n)
    out = np.zeros_like(g)
    sl_src = [slice(None), slice(None)]
    sl_dst = [slice(None), slice(None)]
    if offset > 0:
        sl_dst[axis] = slice(0, n - offset)
        sl_src[axis] = slice(offset, n)
    elif offset < 0:
        sl_dst[axis] = slice(-offset, n)
        sl_src[axis] = slice(0, n + offset)
    out[tuple(sl_dst)] = g[tuple(sl_src)]
    return out.ravel()


def step_derivative(u: StepView, axis: int) -> StepView:
    """Centred difference (u(x+eta e_i) - u(x-eta e_i)) / (2 eta), zero outside Q."""
    cfg = u.partition.config
    if not 0 <= axis < cfg.dimension:
        raise PartitionError(f"axis {axis} out of range for dimension {cfg.dimension}")
    n = cfg.fine_per_axis
    plus = _shift(u.values, axis, +1, cfg.dimension, n)
    minus = _shift(u.values, axis, -1, cfg.dimension, n)
    return StepView(u.partition, (plus - minus) / (2.0 * cfg.eta))


def step_derivative_matrix(partition: Partition, axis: int) -> np.ndarray:
    """Dense matrix of the centred step derivative on the fine lattice.

    Exactly skew-symmetric by construction, which is the matrix form of the
    antisymmetry of the step derivative under the step integral.
    """
    cfg = partition.config
    n = cfg.fine_per_axis
    m = partition.n_fine_total
    d = np.zeros((m, m))
    eye = np.eye(m)
    for col in range(m):
        d[:, col] = (
            _shift(eye[:, col], axis, +1, cfg.dimension, n)
            - _shift(eye[:, col], axis, -1, cfg.dimension, n)
        ) / (2.0 * cfg.eta)
    return d


def verify_step_identities(partition: Partition, seed: int, n_pairs: int = 100) -> dict:
    """Seeded batch check of the step-derivative algebra.

    Returns a report with the worst antisymmetry residual, the worst
    Poincare ratio ||u|| / ||D u|| per axis, and the smallest singular value
    of the derivative matrix, together with pass flags.
    """
    rng = np.random.default_rng(seed)
    cfg = partition.config
    two_l = 2.0 * cfg.l_half
    m = partition.n_fine_total

    worst_anti = 0.0
    worst_ratio = 0.0
    for _ in range(n_pairs):
        u = StepView(partition, rng.standard_normal(m))
        v = StepView(partition, rng.standard_normal(m))
        for axis in range(cfg.dimension):
            du, dv = step_derivative(u, axis), step_derivative(v, axis)
            lhs = step_inner(du, v) + step_inner(u, dv)
            scale = max(step_norm2(u) * step_norm2(v), 1e-300)
            worst_anti = max(worst_anti, abs(lhs) / scale)
            ndu = step_norm2(du)
            if ndu > 0:
                worst_ratio = max(worst_ratio, step_norm2(u) / ndu)

    sigma_min = np.inf
    for axis in range(cfg.dimension):
        dmat = step_derivative_matrix(partition, axis)
        svals = np.linalg.svd(dmat, compute_uv=False)
        sigma_min = min(sigma_min, float(svals[-1]))

    report = {
        "antisymmetry_residual": worst_anti,
        "antisymmetry_ok": worst_anti <= 1e-12,
        "poincare_ratio": worst_ratio,
        "poincare_bound": two_l,
        "poincare_ok": worst_ratio <= two_l,
        "sigma_min": sigma_min,
        "kernel_trivial": sigma_min > 0.0,
    }
    report["all_ok"] = bool(
        report["antisymmetry_ok"] and report["poincare_ok"] and report["kernel_trivial"]
    )
    return report
