"""Two-scale box partitions, grid functions and the weighted grid integral.

The domain is the half-open box ``Q = [-L, L)^N``.  A regular fine lattice of
cubic cells with mesh ``eta`` covers Q; an optional set of user-supplied
coarse points absorbs whole coarse-lattice cells (mesh ``h_w``) so that the
final partition mixes one coarse cell per coarse point with fine cells
everywhere else.  Every grid value table carries one value per partition
cell, and integration is the weighted sum against the per-point measures.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "PartitionConfig",
    "Partition",
    "GridFunction",
    "WeightVector",
    "PartitionError",
    "build_partition",
    "pointwise_integral",
    "pointwise_inner",
    "norm_p",
    "delta_at",
    "restrict",
    "compensated_sum",
]


class PartitionError(ValueError):
    """Raised when a partition request violates the grid preconditions."""


def compensated_sum(values: np.ndarray) -> float:
    """Kahan-Babuska summation in a fixed (index) order.

    Reductions must be reproducible regardless of how callers parallelise,
    so every integral in the library funnels through this single sequential
    accumulator.
    """
    s = 0.0
    comp = 0.0
    for v in np.asarray(values, dtype=float).ravel():
        t = s + v
        if abs(s) >= abs(v):
            comp += (s - t) + v
        else:
            comp += (v - t) + s
        s = t
    return s + comp


@dataclass(frozen=True)
class PartitionConfig:
    """Geometry of the two-scale grid.

    ``l_half`` is the half-length L of the box, ``h_coarse`` the coarse cell
    size and ``eta`` the fine mesh.  Both ratios L/h_coarse and h_coarse/eta
    must be positive even integers so that fine-cell counts per axis stay
    even and coarse half-lattice points land on fine-cell boundaries.
    ``refine_budget`` caps how many times the basis builder may halve eta
    while chasing positive weights.
    """

    dimension: int
    l_half: float
    h_coarse: float
    eta: float
    refine_budget: int = 3

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise PartitionError(f"dimension must be 1 or 2, got {self.dimension}")
        if not (0.0 < self.eta < self.h_coarse < self.l_half):
            raise PartitionError(
                f"need 0 < eta < h_coarse < l_half, got eta={self.eta}, "
                f"h_coarse={self.h_coarse}, l_half={self.l_half}"
            )
        for name, num, den in (
            ("l_half/h_coarse", self.l_half, self.h_coarse),
            ("h_coarse/eta", self.h_coarse, self.eta),
        ):
            ratio = num / den
            k = round(ratio)
            if abs(ratio - k) > 1e-9 * max(1.0, abs(ratio)):
                raise PartitionError(f"{name} = {ratio} is not an integer")
            if k <= 0 or k % 2 != 0:
                raise PartitionError(f"{name} = {k} must be a positive even integer")

    @property
    def coarse_per_axis(self) -> int:
        return 2 * round(self.l_half / self.h_coarse)

    @property
    def fine_per_axis(self) -> int:
        return 2 * round(self.l_half / self.eta)

    @property
    def fine_per_coarse(self) -> int:
        return round(self.h_coarse / self.eta)

    def refined(self) -> "PartitionConfig":
        """Halve the fine mesh, keeping everything else."""
        return PartitionConfig(
            dimension=self.dimension,
            l_half=self.l_half,
            h_coarse=self.h_coarse,
            eta=self.eta / 2.0,
            refine_budget=self.refine_budget,
        )


def _axis_centers(l_half: float, mesh: float, count: int) -> np.ndarray:
    # centers -L + (k + 1/2) * mesh, k = 0..count-1; exact to float ops
    return -l_half + (np.arange(count) + 0.5) * mesh


@dataclass(frozen=True)
class Partition:
    """The assembled two-scale partition of Q.

    ``points`` holds the grid coordinates, coarse points first.  For every
    grid index the cell is either the coarse-lattice cell of a coarse point
    or a single fine cell; ``cell_fine_indices`` maps each grid index to the
    flat fine-lattice indices its cell is made of.
    """

    config: PartitionConfig
    points: np.ndarray              # (n_points, N)
    n_coarse: int
    coarse_cell_origins: np.ndarray  # (n_coarse, N) lower corners of coarse cells
    fine_owner: np.ndarray          # (n_fine_total,) grid index owning each fine cell
    point_home_cell: np.ndarray     # (n_points,) flat fine index of the cell holding the point

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_fine_total(self) -> int:
        return self.config.fine_per_axis ** self.config.dimension

    @property
    def is_regular(self) -> bool:
        return self.n_coarse == 0

    def fine_axis_centers(self) -> np.ndarray:
        cfg = self.config
        return _axis_centers(cfg.l_half, cfg.eta, cfg.fine_per_axis)

    def fine_center(self, flat: np.ndarray) -> np.ndarray:
        """Coordinates of fine-cell centers for flat fine indices."""
        cfg = self.config
        n = cfg.fine_per_axis
        flat = np.asarray(flat)
        if cfg.dimension == 1:
            idx = flat[..., None]
        else:
            idx = np.stack([flat // n, flat % n], axis=-1)
        return -cfg.l_half + (idx + 0.5) * cfg.eta

    def fine_flat_index(self, coords: np.ndarray) -> np.ndarray:
        """Flat fine-cell index containing each coordinate (half-open cells)."""
        cfg = self.config
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        ix = np.floor((coords + cfg.l_half) / cfg.eta).astype(int)
        n = cfg.fine_per_axis
        if np.any(ix < 0) or np.any(ix >= n):
            raise PartitionError("coordinate outside Q")
        if cfg.dimension == 1:
            return ix[:, 0]
        return ix[:, 0] * n + ix[:, 1]

    def cell_fine_indices(self, i: int) -> np.ndarray:
        """Flat fine indices composing cell i."""
        return np.nonzero(self.fine_owner == i)[0]

    def cell_measures(self) -> np.ndarray:
        """Lebesgue measure of each cell (fine-cell count times eta^N)."""
        cfg = self.config
        counts = np.bincount(self.fine_owner, minlength=self.n_points)
        return counts * cfg.eta ** cfg.dimension

    def spread_matrix(self) -> np.ndarray:
        """0/1 matrix S with S[s, i] = 1 iff fine cell s belongs to cell i.

        Spreading a value table over the fine lattice is ``S @ u``.
        """
        s = np.zeros((self.n_fine_total, self.n_points))
        s[np.arange(self.n_fine_total), self.fine_owner] = 1.0
        return s

    def point_index(self, coord: Sequence[float]) -> int:
        """Grid index of the point at the given coordinates."""
        coord = np.asarray(coord, dtype=float).reshape(-1)
        d = np.max(np.abs(self.points - coord[None, :]), axis=1)
        i = int(np.argmin(d))
        if d[i] > 1e-9 * self.config.eta + 1e-12:
            raise PartitionError(f"no grid point at {coord.tolist()}")
        return i

    def to_json(self) -> str:
        cfg = self.config
        doc = {
            "dimension": cfg.dimension,
            "l_half": cfg.l_half,
            "h_coarse": cfg.h_coarse,
            "eta": cfg.eta,
            "n_points": self.n_points,
            "n_coarse": self.n_coarse,
            "coarse_points": self.points[: self.n_coarse].tolist(),
            "cell_table": [
                {
                    "index": i,
                    "point": self.points[i].tolist(),
                    "kind": "coarse" if i < self.n_coarse else "fine",
                    "fine_cells": int(np.sum(self.fine_owner == i)),
                }
                for i in range(self.n_points)
            ],
        }
        return json.dumps(doc, indent=2)


def build_partition(
    config: PartitionConfig,
    coarse_points: Optional[Sequence[Sequence[float]]] = None,
) -> Partition:
    """Build the two-scale partition for user-chosen coarse points.

    Each coarse point absorbs the coarse-lattice cell containing it; the
    rest of Q stays covered by fine cells.  Coarse points must be strictly
    more than ``h_coarse`` apart in the sup norm and in distinct coarse
    cells.
    """
    cfg = config
    dim = cfg.dimension
    if coarse_points is None:
        coarse_points = []
    cp = np.asarray(list(coarse_points), dtype=float)
    if cp.size == 0:
        cp = np.zeros((0, dim))
    if cp.ndim == 1:
        cp = cp[:, None]
    if cp.shape[1] != dim:
        raise PartitionError(
            f"coarse points have dimension {cp.shape[1]}, expected {dim}"
        )

    if np.any(np.abs(cp) >= cfg.l_half):
        bad = cp[np.max(np.abs(cp), axis=1) >= cfg.l_half][0]
        raise PartitionError(f"coarse point {bad.tolist()} outside Q")

    # sup-norm separation at least h_coarse
    for i in range(len(cp)):
        for j in range(i + 1, len(cp)):
            if np.max(np.abs(cp[i] - cp[j])) < cfg.h_coarse * (1.0 - 1e-12):
                raise PartitionError(
                    f"coarse points {cp[i].tolist()} and {cp[j].tolist()} are "
                    f"closer than h_coarse={cfg.h_coarse} in the sup norm"
                )

    # coarse-lattice cell per point
    cell_idx = np.floor((cp + cfg.l_half) / cfg.h_coarse).astype(int)
    seen: dict[tuple, int] = {}
    for i, key in enumerate(map(tuple, cell_idx)):
        if key in seen:
            raise PartitionError(
                f"coarse points {cp[seen[key]].tolist()} and {cp[i].tolist()} "
                "fall in the same coarse cell"
            )
        seen[key] = i

    origins = -cfg.l_half + cell_idx * cfg.h_coarse

    n_fine_axis = cfg.fine_per_axis
    n_fine_total = n_fine_axis ** dim
    q = cfg.fine_per_coarse

    # an antisymmetric operator on an odd-dimensional space is always
    # singular, so the grid cardinality must stay even: each coarse point
    # absorbs q^N - 1 (odd) fine points, hence an even number of them
    if (n_fine_total - len(cp) * (q ** dim - 1)) % 2 != 0:
        raise PartitionError(
            f"{len(cp)} coarse points leave an odd number of grid points "
            f"({n_fine_total - len(cp) * (q ** dim - 1)}); trivial-kernel "
            "certification needs an even count, so supply an even number "
            "of coarse points"
        )

    fine_owner = np.full(n_fine_total, -1, dtype=int)
    n_coarse = len(cp)

    # coarse cells absorb q^N fine cells each
    for i in range(n_coarse):
        base = cell_idx[i] * q  # fine index of the coarse cell's corner
        if dim == 1:
            rng = base[0] + np.arange(q)
            fine_owner[rng] = i
        else:
            rx = base[0] + np.arange(q)
            ry = base[1] + np.arange(q)
            fine_owner[(rx[:, None] * n_fine_axis + ry[None, :]).ravel()] = i

    free = np.nonzero(fine_owner == -1)[0]
    fine_owner[free] = n_coarse + np.arange(len(free))

    # grid points: coarse points, then fine centers of unabsorbed cells
    axis = _axis_centers(cfg.l_half, cfg.eta, n_fine_axis)
    if dim == 1:
        fine_pts = axis[free][:, None]
    else:
        fx, fy = free // n_fine_axis, free % n_fine_axis
        fine_pts = np.stack([axis[fx], axis[fy]], axis=1)
    points = np.vstack([cp.reshape(n_coarse, dim), fine_pts])

    part = Partition(
        config=cfg,
        points=points,
        n_coarse=n_coarse,
        coarse_cell_origins=origins.reshape(n_coarse, dim),
        fine_owner=fine_owner,
        point_home_cell=np.zeros(0, dtype=int),
    )
    # home fine cell of each grid point
    home = part.fine_flat_index(points)
    object.__setattr__(part, "point_home_cell", home)

    # partition exactness: every fine cell owned exactly once
    counts = np.bincount(fine_owner, minlength=part.n_points)
    assert int(counts.sum()) == n_fine_total
    assert np.all(counts >= 1)
    return part


@dataclass(frozen=True)
class GridFunction:
    """A real value table over the grid points of a partition."""

    partition: Partition
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.partition.n_points,):
            raise PartitionError(
                f"value table has shape {v.shape}, expected ({self.partition.n_points},)"
            )

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same_partition(self, other)
        return GridFunction(self.partition, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same_partition(self, other)
        return GridFunction(self.partition, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            _check_same_partition(self, other)
            return GridFunction(self.partition, self.values * other.values)
        return GridFunction(self.partition, self.values * float(other))

    __rmul__ = __mul__

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = self.partition.config.dimension
        w.writerow(["index"] + ["xy"[i] for i in range(dim)] + ["value"])
        for i in range(self.partition.n_points):
            w.writerow(
                [i]
                + [repr(float(c)) for c in self.partition.points[i]]
                + [repr(float(self.values[i]))]
            )
        return buf.getvalue()


@dataclass(frozen=True)
class WeightVector:
    """Per-point measures d(a) > 0 with sum equal to the measure of Q."""

    partition: Partition
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.shape != (self.partition.n_points,):
            raise PartitionError("weight vector length mismatch")

    @property
    def min_weight(self) -> float:
        return float(np.min(self.weights))

    def total(self) -> float:
        return compensated_sum(self.weights)


def _check_same_partition(a, b) -> None:
    if a.partition is not b.partition and not _same_geometry(a.partition, b.partition):
        raise PartitionError("operands live on different partitions")


def _same_geometry(p: Partition, q: Partition) -> bool:
    return (
        p.config == q.config
        and p.n_points == q.n_points
        and np.array_equal(p.fine_owner, q.fine_owner)
        and np.allclose(p.points, q.points)
    )


def pointwise_integral(u: GridFunction, d: WeightVector) -> float:
    """Weighted grid integral: sum of u(a) d(a) in compensated arithmetic."""
    _check_same_partition(u, d)
    return compensated_sum(u.values * d.weights)


def pointwise_inner(u: GridFunction, v: GridFunction, d: WeightVector) -> float:
    """Weighted scalar product sum u(a) v(a) d(a)."""
    _check_same_partition(u, v)
    _check_same_partition(u, d)
    return compensated_sum(u.values * v.values * d.weights)


def norm_p(u: GridFunction, d: WeightVector, p: float) -> float:
    """Weighted p-norm; the sup norm for p = inf."""
    if math.isinf(p):
        return float(np.max(np.abs(u.values)))
    if p < 1:
        raise PartitionError(f"p must be >= 1 or inf, got {p}")
    _check_same_partition(u, d)
    return compensated_sum(np.abs(u.values) ** p * d.weights) ** (1.0 / p)


def delta_at(a, d: WeightVector) -> GridFunction:
    """Unit-mass point density: 1/d(a) at the grid point a, zero elsewhere."""
    part = d.partition
    idx = a if isinstance(a, (int, np.integer)) else part.point_index(a)
    idx = int(idx)
    if not 0 <= idx < part.n_points:
        raise PartitionError(f"grid index {idx} out of range")
    v = np.zeros(part.n_points)
    v[idx] = 1.0 / d.weights[idx]
    return GridFunction(part, v)


def restrict(
    f: Callable[..., float],
    partition: Partition,
    exclude: Optional[Iterable[Sequence[float]]] = None,
) -> GridFunction:
    """Sample a real function on the grid, zero-filling declared bad points.

    ``exclude`` lists coordinates where f is undefined; the table gets 0
    there.  An evaluation failure anywhere else is an error naming the
    point.
    """
    excl_idx: set[int] = set()
    if exclude is not None:
        for pt in exclude:
            try:
                excl_idx.add(partition.point_index(np.atleast_1d(pt)))
            except PartitionError:
                continue  # excluded point not on the grid: nothing to zero
    vals = np.zeros(partition.n_points)
    dim = partition.config.dimension
    for i in range(partition.n_points):
        if i in excl_idx:
            continue
        x = partition.points[i]
        try:
            vals[i] = f(*x) if dim > 1 else f(float(x[0]))
        except Exception as exc:
            raise PartitionError(
                f"function oracle failed at grid point {x.tolist()}: {exc}"
            ) from exc
        if not np.isfinite(vals[i]):
            raise PartitionError(
                f"function oracle returned non-finite value at {x.tolist()}"
            )
    return GridFunction(partition, vals)
