"""Analytically evaluable function spaces with exact per-cell quadrature.

Basis elements are tensor products of one-dimensional piecewise
polynomials: uniform B-spline bumps on the coarse lattice, a plateau that
is one on the interior of Q and rolls off to zero between two fine-cell
centers near the frame, and plain monomials for the point-classification
helpers.  Every profile reports its breakpoints, so splitting each fine
cell there makes Gauss quadrature exact for any product of basis elements
and their partials.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .partition import Partition, PartitionError, compensated_sum

__all__ = [
    "Profile1D",
    "BSplineProfile",
    "PlateauProfile",
    "MonomialProfile",
    "BasisFunction",
    "FunctionSpace",
    "SpaceTower",
    "CellQuadrature",
    "build_spline_tower",
]


class Profile1D:
    """One-dimensional piecewise polynomial factor of a tensor basis element."""

    degree: int = 0
    support: Tuple[float, float] = (-np.inf, np.inf)
    breakpoints: Tuple[float, ...] = ()

    def value(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def derivative(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def second_derivative(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


def _bspline_eval(t: np.ndarray, degree: int) -> np.ndarray:
    """Cardinal B-spline of the given degree at knot-units t (knots at integers
    centred on 0: support (-(p+1)/2, (p+1)/2))."""
    p = degree
    x = np.asarray(t, dtype=float) + (p + 1) / 2.0  # shift support to (0, p+1)
    # Cox-de Boor on integer knots
    b = ((x >= np.arange(p + 1)[:, None]) & (x < np.arange(1, p + 2)[:, None])).astype(
        float
    )
    for k in range(1, p + 1):
        nxt = np.zeros((p + 1 - k, x.size))
        for i in range(p + 1 - k):
            nxt[i] = (x - i) / k * b[i] + (i + k + 1 - x) / k * b[i + 1]
        b = nxt
    return b[0]


def _bspline_deriv(t: np.ndarray, degree: int) -> np.ndarray:
    if degree == 0:
        return np.zeros_like(np.asarray(t, dtype=float))
    return _bspline_eval(np.asarray(t) + 0.5, degree - 1) - _bspline_eval(
        np.asarray(t) - 0.5, degree - 1
    )


@dataclass(frozen=True)
class BSplineProfile(Profile1D):
    """Uniform B-spline bump: center, knot spacing h, degree p."""

    center: float
    h: float
    p: int

    @property
    def degree(self) -> int:
        return self.p

    @property
    def support(self) -> Tuple[float, float]:
        half = (self.p + 1) * self.h / 2.0
        return (self.center - half, self.center + half)

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        half = (self.p + 1) / 2.0
        return tuple(self.center + (k - half) * self.h for k in range(self.p + 2))

    def value(self, x: np.ndarray) -> np.ndarray:
        return _bspline_eval((np.asarray(x, dtype=float) - self.center) / self.h, self.p)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        return (
            _bspline_deriv((np.asarray(x, dtype=float) - self.center) / self.h, self.p)
            / self.h
        )

    def second_derivative(self, x: np.ndarray) -> np.ndarray:
        if self.p < 2:
            return np.zeros_like(np.asarray(x, dtype=float))
        t = (np.asarray(x, dtype=float) - self.center) / self.h
        return (
            _bspline_deriv(t + 0.5, self.p - 1) - _bspline_deriv(t - 0.5, self.p - 1)
        ) / self.h**2


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _smoothstep_deriv(t: np.ndarray) -> np.ndarray:
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 6.0 * t * (1.0 - t), 0.0)


@dataclass(frozen=True)
class PlateauProfile(Profile1D):
    """C^1 plateau: 0 outside [lo, hi], cubic ramps of width w at both ends.

    The ramps are placed between two adjacent fine-cell centers so the
    sampled table is exactly 0/1-valued; the mirror symmetry of the two
    ramps makes the frame flux of the derivative cancel exactly.
    """

    lo: float
    hi: float
    w: float

    @property
    def degree(self) -> int:
        return 3

    @property
    def support(self) -> Tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return (self.lo, self.lo + self.w, self.hi - self.w, self.hi)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        up = _smoothstep((x - self.lo) / self.w)
        down = _smoothstep((self.hi - x) / self.w)
        return np.minimum(up, down)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        mid = 0.5 * (self.lo + self.hi)
        dup = _smoothstep_deriv((x - self.lo) / self.w) / self.w
        ddown = -_smoothstep_deriv((self.hi - x) / self.w) / self.w
        return np.where(x < mid, dup, ddown)

    def second_derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        mid = 0.5 * (self.lo + self.hi)
        t_up = (x - self.lo) / self.w
        t_dn = (self.hi - x) / self.w
        up = np.where((t_up > 0) & (t_up < 1), (6.0 - 12.0 * t_up) / self.w**2, 0.0)
        dn = np.where((t_dn > 0) & (t_dn < 1), (6.0 - 12.0 * t_dn) / self.w**2, 0.0)
        return np.where(x < mid, up, dn)


@dataclass(frozen=True)
class MonomialProfile(Profile1D):
    """x^k on all of Q; used by the point-set classification helpers."""

    k: int
    box: Tuple[float, float]

    @property
    def degree(self) -> int:
        return self.k

    @property
    def support(self) -> Tuple[float, float]:
        return self.box

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return self.box

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) ** self.k

    def derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.k == 0:
            return np.zeros_like(x)
        return self.k * x ** (self.k - 1)

    def second_derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.k < 2:
            return np.zeros_like(x)
        return self.k * (self.k - 1) * x ** (self.k - 2)


@dataclass(frozen=True)
class BasisFunction:
    """Tensor product of per-axis profiles, optionally scaled."""

    profiles: Tuple[Profile1D, ...]
    scale: float = 1.0
    label: str = ""

    @property
    def dimension(self) -> int:
        return len(self.profiles)

    @property
    def degree(self) -> int:
        return max(p.degree for p in self.profiles)

    def support_box(self) -> np.ndarray:
        return np.array([p.support for p in self.profiles])

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(x.shape[0], self.scale)
        for i, p in enumerate(self.profiles):
            out = out * p.value(x[:, i])
        return out

    def partial(self, axis: int, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(x.shape[0], self.scale)
        for i, p in enumerate(self.profiles):
            out = out * (p.derivative(x[:, i]) if i == axis else p.value(x[:, i]))
        return out

    def breakpoints(self, axis: int) -> Tuple[float, ...]:
        return self.profiles[axis].breakpoints


class CellQuadrature:
    """Per-fine-cell Gauss rule, split at declared breakpoints.

    Within each fine cell every integrand factor is a polynomial between
    breakpoints, so enough Gauss nodes per sub-interval makes the rule
    exact to machine precision.
    """

    def __init__(self, partition: Partition, nodes_per_axis: int = 8):
        self.partition = partition
        self.nodes = nodes_per_axis
        self._gl = np.polynomial.legendre.leggauss(nodes_per_axis)

    def _axis_rule(
        self, lo: float, hi: float, cuts: Sequence[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        pts = [lo] + [c for c in sorted(set(cuts)) if lo < c < hi] + [hi]
        xs, ws = [], []
        gx, gw = self._gl
        for a, b in zip(pts[:-1], pts[1:]):
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            xs.append(mid + half * gx)
            ws.append(half * gw)
        return np.concatenate(xs), np.concatenate(ws)

    def integrate(
        self,
        factors: Sequence[Callable[[np.ndarray], np.ndarray]],
        box: np.ndarray,
        breakpoints: Sequence[Sequence[float]],
    ) -> float:
        """Integrate the product of factor callables over box, exactly for
        piecewise polynomials with the declared per-axis breakpoints."""
        cfg = self.partition.config
        dim = cfg.dimension
        eta = cfg.eta
        lh = cfg.l_half
        lo = np.maximum(np.asarray(box)[:, 0], -lh)
        hi = np.minimum(np.asarray(box)[:, 1], lh)
        if np.any(lo >= hi):
            return 0.0
        # snap integration range to the fine lattice, then per cell per axis
        parts = []
        for ax in range(dim):
            i0 = int(np.floor((lo[ax] + lh) / eta))
            i1 = int(np.ceil((hi[ax] + lh) / eta))
            cell_edges = -lh + np.arange(i0, i1 + 1) * eta
            cuts = list(breakpoints[ax]) + list(cell_edges)
            xs, ws = self._axis_rule(float(lo[ax]), float(hi[ax]), cuts)
            parts.append((xs, ws))
        if dim == 1:
            x = parts[0][0][:, None]
            w = parts[0][1]
        else:
            xa, wa = parts[0]
            xb, wb = parts[1]
            x = np.stack(
                [np.repeat(xa, xb.size), np.tile(xb, xa.size)], axis=1
            )
            w = np.repeat(wa, wb.size) * np.tile(wb, xa.size)
        vals = np.ones(x.shape[0])
        for f in factors:
            vals = vals * f(x)
        return compensated_sum(vals * w)

    def integrate_basis_product(
        self,
        funcs: Sequence[BasisFunction],
        partials: Sequence[Optional[int]],
    ) -> float:
        """Exact integral of a product of basis elements / their partials."""
        if not funcs:
            return 0.0
        dim = funcs[0].dimension
        box = funcs[0].support_box()
        for f in funcs[1:]:
            fb = f.support_box()
            box = np.stack(
                [np.maximum(box[:, 0], fb[:, 0]), np.minimum(box[:, 1], fb[:, 1])],
                axis=1,
            )
        if np.any(box[:, 0] >= box[:, 1]):
            return 0.0
        breakpoints = [
            sum((list(f.breakpoints(ax)) for f in funcs), []) for ax in range(dim)
        ]
        factors = []
        for f, p in zip(funcs, partials):
            if p is None:
                factors.append(f.value)
            else:
                factors.append(lambda x, f=f, p=p: f.partial(p, x))
        return self.integrate(factors, box, breakpoints)

    def cell_integrals(self, func: BasisFunction, partial: Optional[int]) -> np.ndarray:
        """Integral of func (or its partial) over every fine cell, flat-indexed."""
        part = self.partition
        cfg = part.config
        dim = cfg.dimension
        eta, lh, n = cfg.eta, cfg.l_half, cfg.fine_per_axis
        box = func.support_box()
        out = np.zeros(part.n_fine_total)
        rngs = []
        for ax in range(dim):
            i0 = max(int(np.floor((box[ax, 0] + lh) / eta)), 0)
            i1 = min(int(np.ceil((box[ax, 1] + lh) / eta)), n)
            if i0 >= i1:
                return out
            rngs.append((i0, i1))

        def axis_nodes(ax, i0, i1):
            edges = -lh + np.arange(i0, i1 + 1) * eta
            cuts = [c for c in func.breakpoints(ax)]
            node_list, weight_list, owner = [], [], []
            gx, gw = self._gl
            for ci in range(i0, i1):
                a, b = -lh + ci * eta, -lh + (ci + 1) * eta
                pts = [a] + [c for c in sorted(set(cuts)) if a < c < b] + [b]
                for s0, s1 in zip(pts[:-1], pts[1:]):
                    mid, half = 0.5 * (s0 + s1), 0.5 * (s1 - s0)
                    node_list.append(mid + half * gx)
                    weight_list.append(half * gw)
                    owner.append(np.full(gx.size, ci - i0))
            return (
                np.concatenate(node_list),
                np.concatenate(weight_list),
                np.concatenate(owner),
            )

        f_eval = func.value if partial is None else (lambda x: func.partial(partial, x))
        if dim == 1:
            xs, ws, ow = axis_nodes(0, *rngs[0])
            vals = f_eval(xs[:, None]) * ws
            acc = np.zeros(rngs[0][1] - rngs[0][0])
            np.add.at(acc, ow, vals)
            out[rngs[0][0] : rngs[0][1]] = acc
            return out
        xa, wa, oa = axis_nodes(0, *rngs[0])
        xb, wb, ob = axis_nodes(1, *rngs[1])
        X = np.stack([np.repeat(xa, xb.size), np.tile(xb, xa.size)], axis=1)
        W = np.repeat(wa, wb.size) * np.tile(wb, xa.size)
        OW = np.repeat(oa, ob.size) * (rngs[1][1] - rngs[1][0]) + np.tile(ob, oa.size)
        vals = f_eval(X) * W
        acc = np.zeros((rngs[0][1] - rngs[0][0]) * (rngs[1][1] - rngs[1][0]))
        np.add.at(acc, OW, vals)
        block = acc.reshape(rngs[0][1] - rngs[0][0], rngs[1][1] - rngs[1][0])
        ia = np.arange(rngs[0][0], rngs[0][1])
        ib = np.arange(rngs[1][0], rngs[1][1])
        out[(ia[:, None] * n + ib[None, :]).ravel()] = block.ravel()
        return out


@dataclass
class FunctionSpace:
    """Finite span of basis elements with exact evaluation and quadrature."""

    basis: List[BasisFunction]
    quadrature: CellQuadrature

    @property
    def dim(self) -> int:
        return len(self.basis)

    def evaluation_matrix(self, points: np.ndarray) -> np.ndarray:
        """Matrix e_k(a_l): rows basis elements, columns points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([b.value(pts) for b in self.basis], axis=0)

    def tables(self, partition: Partition) -> np.ndarray:
        """Value tables of all basis elements on the grid: (n_points, dim)."""
        return self.evaluation_matrix(partition.points).T

    def gram(self) -> np.ndarray:
        g = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                v = self.quadrature.integrate_basis_product(
                    [self.basis[i], self.basis[j]], [None, None]
                )
                g[i, j] = g[j, i] = v
        return g

    def check_independent(self, tol: float = 1e-10) -> bool:
        g = self.gram()
        svals = np.linalg.svd(g, compute_uv=False)
        return bool(svals[-1] > tol * svals[0])


@dataclass
class SpaceTower:
    """W1 (smooth, compactly supported), Wc = W1 + partials, W0 = Wc products.

    W0's basis keeps only overlapping-support products, since products of
    disjoint supports vanish identically; a quadrature Gram check certifies
    that Wc pairwise products project onto W0 with ulp-scale residual.
    """

    w1: FunctionSpace
    wc: FunctionSpace
    w0: FunctionSpace
    plateau_index: Optional[int] = None  # index of the interior plateau in w1

    def product_closure_residual(self, n_samples: int = 12, seed: int = 0) -> float:
        """Worst relative L2 residual of Wc x Wc products projected on W0."""
        quad = self.w0.quadrature
        g = self.w0.gram()
        rng = np.random.default_rng(seed)
        nc = self.wc.dim
        worst = 0.0
        pairs = [(int(a), int(b)) for a, b in rng.integers(0, nc, size=(n_samples, 2))]
        for i, j in pairs:
            fi, fj = self.wc.basis[i], self.wc.basis[j]
            rhs = np.array(
                [
                    quad.integrate_basis_product([fi, fj, bk], [None, None, None])
                    for bk in self.w0.basis
                ]
            )
            nrm2 = quad.integrate_basis_product([fi, fj, fi, fj], [None] * 4)
            if nrm2 <= 0:
                continue
            coef, *_ = np.linalg.lstsq(g, rhs, rcond=None)
            resid2 = nrm2 - 2 * coef @ rhs + coef @ g @ coef
            worst = max(worst, abs(resid2) / nrm2)
        return worst


def _overlaps(a: BasisFunction, b: BasisFunction) -> bool:
    ab, bb = a.support_box(), b.support_box()
    return bool(np.all(np.maximum(ab[:, 0], bb[:, 0]) < np.minimum(ab[:, 1], bb[:, 1])))


def build_spline_tower(
    partition: Partition,
    degree: int = 3,
    quadrature_nodes: int = 8,
    collar_cells: int = 2,
    extra: Optional[Sequence[BasisFunction]] = None,
    max_w0: int = 4000,
) -> SpaceTower:
    """Default tower: coarse-lattice B-spline bumps plus the interior plateau.

    Bump knots sit on the coarse lattice; supports keep clear of the frame
    collar so the plateau's rolloff stays grid-orthogonal to every bump.
    ``extra`` registers caller-supplied elements into Wc.
    """
    cfg = partition.config
    dim = cfg.dimension
    h, lh, eta = cfg.h_coarse, cfg.l_half, cfg.eta
    quad = CellQuadrature(partition, quadrature_nodes)

    # plateau rolloff between two adjacent fine centers, collar_cells cells
    # in from the frame on each side
    ramp_lo = -lh + (collar_cells + 0.5) * eta
    ramp_hi = lh - (collar_cells + 0.5) * eta
    plateau = BasisFunction(
        tuple(PlateauProfile(ramp_lo, ramp_hi, eta) for _ in range(dim)),
        label="plateau",
    )
    # bump supports must avoid the rolloff band [ramp_lo, ramp_lo + eta]
    inner_lo = ramp_lo + eta
    inner_hi = ramp_hi - eta

    half = (degree + 1) * h / 2.0
    centers = []
    k = 0
    lattice = []
    x = -lh
    while x <= lh + 1e-12:
        lattice.append(x)
        x += h
    for c in lattice:
        if c - half >= inner_lo - 1e-12 and c + half <= inner_hi + 1e-12:
            centers.append(c)
    # a domain too small for any interior bump degrades to the plateau-only
    # tower: the step calculus still certifies, only the smooth-consistency
    # class is empty

    bumps: List[BasisFunction] = []
    if dim == 1:
        for c in centers:
            bumps.append(
                BasisFunction(
                    (BSplineProfile(c, h, degree),), label=f"bump[{c:g}]"
                )
            )
    else:
        for cx in centers:
            for cy in centers:
                bumps.append(
                    BasisFunction(
                        (BSplineProfile(cx, h, degree), BSplineProfile(cy, h, degree)),
                        label=f"bump[{cx:g},{cy:g}]",
                    )
                )

    w1_basis = [plateau] + bumps
    w1 = FunctionSpace(w1_basis, quad)

    wc_basis = list(w1_basis)
    for b in w1_basis:
        for ax in range(dim):
            wc_basis.append(_partial_basis(b, ax))
    if extra:
        wc_basis.extend(extra)
    wc = FunctionSpace(wc_basis, quad)

    w0_basis = list(wc_basis)
    for i in range(len(wc_basis)):
        for j in range(i, len(wc_basis)):
            if len(w0_basis) >= max_w0:
                break
            if _overlaps(wc_basis[i], wc_basis[j]):
                w0_basis.append(_product_basis(wc_basis[i], wc_basis[j]))
    w0 = FunctionSpace(w0_basis, quad)

    return SpaceTower(w1=w1, wc=wc, w0=w0, plateau_index=0)


class _PartialProfileWrap(Profile1D):
    """Derivative of a profile, as a profile (degree drops by one)."""

    def __init__(self, base: Profile1D):
        self._base = base

    @property
    def degree(self) -> int:
        return max(self._base.degree - 1, 0)

    @property
    def support(self) -> Tuple[float, float]:
        return self._base.support

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return self._base.breakpoints

    def value(self, x: np.ndarray) -> np.ndarray:
        return self._base.derivative(x)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        return self._base.second_derivative(x)


class _ProductProfileWrap(Profile1D):
    """Pointwise product of two profiles along one axis."""

    def __init__(self, a: Profile1D, b: Profile1D):
        self._a, self._b = a, b

    @property
    def degree(self) -> int:
        return self._a.degree + self._b.degree

    @property
    def support(self) -> Tuple[float, float]:
        lo = max(self._a.support[0], self._b.support[0])
        hi = min(self._a.support[1], self._b.support[1])
        return (lo, hi)

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return tuple(sorted(set(self._a.breakpoints) | set(self._b.breakpoints)))

    def value(self, x: np.ndarray) -> np.ndarray:
        return self._a.value(x) * self._b.value(x)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        return self._a.derivative(x) * self._b.value(x) + self._a.value(
            x
        ) * self._b.derivative(x)


def _partial_basis(b: BasisFunction, axis: int) -> BasisFunction:
    profiles = tuple(
        _PartialProfileWrap(p) if i == axis else p for i, p in enumerate(b.profiles)
    )
    return BasisFunction(profiles, b.scale, label=f"d{axis}({b.label})")


def _product_basis(a: BasisFunction, b: BasisFunction) -> BasisFunction:
    profiles = tuple(
        _ProductProfileWrap(pa, pb) for pa, pb in zip(a.profiles, b.profiles)
    )
    return BasisFunction(profiles, a.scale * b.scale, label=f"({a.label})*({b.label})")
