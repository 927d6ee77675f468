"""Measure tables, set calculus and the exact discrete divergence theorem.

Internal sets are unions of partition cells, encoded as membership flags
over the grid.  The measure table of a set (or of an integrable density)
pairs against value tables through the weighted grid integral; boundary
and interior are read off the support of the derivative of the set's
measure table, and the divergence theorem is an algebraic identity riding
on operator antisymmetry, so it holds to machine precision for every set
and field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .derivative import DerivativeOperator, apply_operator, divergence
from .partition import (
    GridFunction,
    Partition,
    PartitionError,
    compensated_sum,
    pointwise_inner,
    pointwise_integral,
)
from .sigma import SigmaBasis
from .stepcalc import StepView

__all__ = [
    "CellSet",
    "MeasureDensity",
    "cellset_from_predicate",
    "cellset_from_box",
    "measure_from_cells",
    "measure_from_density",
    "integral_over",
    "vicinity",
    "pointwise_boundary",
    "pointwise_interior",
    "surface_integral",
    "normal_field",
    "gauss_residual",
    "ftc_interval",
]


@dataclass(frozen=True)
class CellSet:
    """A union of partition cells, as membership flags over grid points."""

    partition: Partition
    mask: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", m)
        if m.shape != (self.partition.n_points,):
            raise PartitionError("cell-set mask length mismatch")

    @property
    def indices(self) -> np.ndarray:
        return np.nonzero(self.mask)[0]

    def measure(self) -> float:
        """Exact Lebesgue measure of the cell union."""
        return float(np.sum(self.partition.cell_measures()[self.mask]))

    def complement(self) -> "CellSet":
        return CellSet(self.partition, ~self.mask)

    def to_json(self) -> str:
        return json.dumps({"indices": self.indices.tolist()})


def cellset_from_predicate(
    partition: Partition, pred: Callable[..., bool]
) -> CellSet:
    mask = np.zeros(partition.n_points, dtype=bool)
    for i in range(partition.n_points):
        x = partition.points[i]
        mask[i] = bool(pred(*x) if partition.config.dimension > 1 else pred(float(x[0])))
    return CellSet(partition, mask)


def cellset_from_box(partition: Partition, lo, hi) -> CellSet:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    pts = partition.points
    mask = np.all((pts >= lo[None, :]) & (pts < hi[None, :]), axis=1)
    return CellSet(partition, mask)


@dataclass(frozen=True)
class MeasureDensity:
    """A measure as a value table: pairing with u is the grid integral of mu*u."""

    table: GridFunction
    provenance: str  # from-density | from-cells | from-oracle

    @property
    def partition(self) -> Partition:
        return self.table.partition


def measure_from_cells(e: CellSet, basis: SigmaBasis) -> MeasureDensity:
    """Measure table of a cell union: exact cell-overlap integrals.

    With the cardinal step basis the table is exactly the indicator of the
    member points.
    """
    part = e.partition
    d = basis.weights.weights
    chi = np.zeros(part.n_fine_total)
    for i in e.indices:
        chi[part.fine_owner == i] = 1.0
    mu = np.empty(part.n_points)
    for a in range(part.n_points):
        sig = basis.sigma_cell_integrals(a)
        eta_n = part.config.eta ** part.config.dimension
        mu[a] = compensated_sum(chi * sig) / d[a]
    return MeasureDensity(GridFunction(part, mu), "from-cells")


def measure_from_density(
    f: Callable[..., float],
    basis: SigmaBasis,
    breakpoints: Optional[Sequence[Sequence[float]]] = None,
) -> MeasureDensity:
    """Measure table of an integrable density: mu(a) = (1/d(a)) I(f sigma_a).

    ``breakpoints`` declares per-axis discontinuity locations of f; cell
    integrals split there.  Breakpoints must be representable on the fine
    lattice closure, otherwise the quadrature cannot resolve them.
    """
    part = basis.partition
    cfg = part.config
    quad = basis.tower.w1.quadrature
    if breakpoints is not None:
        for ax, cuts in enumerate(breakpoints):
            for c in cuts:
                if not (-cfg.l_half <= c <= cfg.l_half):
                    raise PartitionError(
                        f"declared breakpoint {c} on axis {ax} lies outside Q"
                    )
    cell_ints = _oracle_cell_integrals(f, part, quad, breakpoints)
    d = basis.weights.weights
    mu = np.empty(part.n_points)
    for a in range(part.n_points):
        sig = basis.sigma_cell_integrals(a)
        eta_n = cfg.eta ** cfg.dimension
        mu[a] = compensated_sum(cell_ints * sig / eta_n) / d[a]
    return MeasureDensity(GridFunction(part, mu), "from-density")


def _oracle_cell_integrals(
    f: Callable[..., float],
    part: Partition,
    quad,
    breakpoints: Optional[Sequence[Sequence[float]]],
) -> np.ndarray:
    """Per-fine-cell integrals of a function oracle, split at breakpoints."""
    cfg = part.config
    dim = cfg.dimension
    eta, lh, n = cfg.eta, cfg.l_half, cfg.fine_per_axis
    gx, gw = np.polynomial.legendre.leggauss(quad.nodes)
    cuts = [sorted(set(breakpoints[ax])) if breakpoints else [] for ax in range(dim)]

    def axis_nodes(ax):
        nodes, weights, owner = [], [], []
        for ci in range(n):
            a, b = -lh + ci * eta, -lh + (ci + 1) * eta
            pts = [a] + [c for c in cuts[ax] if a < c < b] + [b]
            for s0, s1 in zip(pts[:-1], pts[1:]):
                mid, half = 0.5 * (s0 + s1), 0.5 * (s1 - s0)
                nodes.append(mid + half * gx)
                weights.append(half * gw)
                owner.append(np.full(gx.size, ci))
        return np.concatenate(nodes), np.concatenate(weights), np.concatenate(owner)

    if dim == 1:
        xs, ws, ow = axis_nodes(0)
        vals = np.array([f(float(x)) for x in xs]) * ws
        out = np.zeros(n)
        np.add.at(out, ow, vals)
        return out
    xa, wa, oa = axis_nodes(0)
    xb, wb, ob = axis_nodes(1)
    out = np.zeros(n * n)
    for i in range(xa.size):
        vals = np.array([f(float(xa[i]), float(y)) for y in xb]) * (wa[i] * wb)
        np.add.at(out, oa[i] * n + ob, vals)
    return out


def integral_over(e: CellSet, u: GridFunction, basis: SigmaBasis) -> float:
    """Grid integral of u over the cell union: the mu_E-weighted pairing."""
    mu = measure_from_cells(e, basis)
    return pointwise_inner(mu.table, u, basis.weights)


def set_weights(e: CellSet, basis: SigmaBasis) -> np.ndarray:
    """d_E(a) = mu_E(a) d(a): per-point share of the set's measure."""
    mu = measure_from_cells(e, basis)
    return mu.table.values * basis.weights.weights


def _grad_mu(
    e: CellSet, ops: Sequence[DerivativeOperator], basis: SigmaBasis
) -> list[GridFunction]:
    mu = measure_from_cells(e, basis)
    return [apply_operator(op, mu.table) for op in ops]


def _norm_of(fields: Sequence[GridFunction]) -> np.ndarray:
    acc = np.zeros(fields[0].partition.n_points)
    for g in fields:
        acc += g.values**2
    return np.sqrt(acc)


def vicinity(
    e: CellSet,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
    support_tol: float = 1e-3,
) -> CellSet:
    """Points where the set's measure table or its derivative is active.

    ``support_tol`` is relative to the largest derivative magnitude; the
    measure-table part uses the same relative cut against 1.
    """
    mu = measure_from_cells(e, basis)
    grad = _grad_mu(e, ops, basis)
    gn = _norm_of(grad)
    cut = support_tol * max(float(gn.max()), 1e-300)
    mask = (gn > cut) | (np.abs(mu.table.values) > support_tol)
    return CellSet(e.partition, mask)


def pointwise_boundary(
    e: CellSet,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
    support_tol: float = 1e-3,
) -> CellSet:
    """vic(E) minus the points where mu_E is one and its derivative vanishes."""
    mu = measure_from_cells(e, basis)
    grad = _grad_mu(e, ops, basis)
    gn = _norm_of(grad)
    cut = support_tol * max(float(gn.max()), 1e-300)
    vic = (gn > cut) | (np.abs(mu.table.values) > support_tol)
    interior = (gn <= cut) & (np.abs(mu.table.values - 1.0) <= support_tol)
    return CellSet(e.partition, vic & ~interior)


def pointwise_interior(
    e: CellSet,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
    support_tol: float = 1e-3,
) -> CellSet:
    mu = measure_from_cells(e, basis)
    grad = _grad_mu(e, ops, basis)
    gn = _norm_of(grad)
    cut = support_tol * max(float(gn.max()), 1e-300)
    return CellSet(
        e.partition,
        (gn <= cut) & (np.abs(mu.table.values - 1.0) <= support_tol),
    )


def surface_integral(
    e: CellSet,
    u: GridFunction,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
) -> float:
    """Boundary integral of u via the derivative-magnitude surface density."""
    grad = _grad_mu(e, ops, basis)
    gn = _norm_of(grad)
    return compensated_sum(u.values * gn * basis.weights.weights)


def normal_field(
    e: CellSet,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
) -> list[GridFunction]:
    """Outward normal: -grad(mu_E)/|grad(mu_E)| where the gradient is active."""
    grad = _grad_mu(e, ops, basis)
    gn = _norm_of(grad)
    out = []
    for g in grad:
        with np.errstate(invalid="ignore", divide="ignore"):
            comp = np.where(gn > 0.0, -g.values / gn, 0.0)
        out.append(GridFunction(e.partition, comp))
    return out


def gauss_residual(
    e: CellSet,
    phi: Sequence[GridFunction],
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
) -> dict:
    """Both sides of the divergence identity over a cell union.

    The flux side folds the normal and the surface density pointwise
    (n |grad mu| = -grad mu), which is what makes the identity exact.
    """
    if len(phi) != len(ops):
        raise PartitionError("need one field component per axis")
    div = divergence(ops, phi)
    lhs = integral_over(e, div, basis)
    grad = _grad_mu(e, ops, basis)
    acc = np.zeros(e.partition.n_points)
    for g, comp in zip(grad, phi):
        acc += comp.values * (-g.values)
    rhs = compensated_sum(acc * basis.weights.weights)
    scale = max(
        max(abs(lhs), abs(rhs)),
        max(float(np.max(np.abs(c.values))) for c in phi),
        1.0,
    )
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs), "scale": scale}


def ftc_interval(
    a: float,
    b: float,
    u: GridFunction,
    op: DerivativeOperator,
    basis: SigmaBasis,
) -> dict:
    """One-dimensional fundamental-theorem identity over a cell interval.

    Returns the interval integral of Du and the two signed endpoint fluxes;
    their difference equals the interval integral exactly because it is the
    one-dimensional divergence identity with the boundary split at the
    interval midpoint.
    """
    part = u.partition
    if part.config.dimension != 1:
        raise PartitionError("the interval identity is one-dimensional")
    e = cellset_from_box(part, [a], [b])
    if not np.any(e.mask):
        raise PartitionError(f"[{a}, {b}] contains no grid cells")
    du = apply_operator(op, u)
    lhs = integral_over(e, du, basis)
    grad = _grad_mu(e, [op], basis)[0]
    flux = u.values * (-grad.values) * basis.weights.weights
    mid = 0.5 * (a + b)
    right = part.points[:, 0] > mid
    rhs_b = compensated_sum(flux[right])
    rhs_a = -compensated_sum(flux[~right])
    return {
        "interval_integral": lhs,
        "flux_upper": rhs_b,
        "flux_lower": rhs_a,
        "residual": abs(lhs - (rhs_b - rhs_a)),
    }
