"""Problem suite on the certified grid calculus.

Elliptic solves in divergence form (Dirichlet through vanishing tables,
Neumann through the extended support space and a boundary-flux density),
symmetric spectral solves with the shifted-resolvent alternative, method
of lines evolution with conservation diagnostics and blow-up detection,
and functional minimization with stationarity certificates.

All nonlinearities act pointwise on value tables, so indicator tables are
exact algebraic solutions wherever the coefficient vanishes on them, and
every conservation statement reduces to operator antisymmetry.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .derivative import DerivativeOperator, apply_operator, divergence
from .measures import CellSet, measure_from_cells, vicinity
from .partition import (
    GridFunction,
    Partition,
    PartitionError,
    compensated_sum,
)
from .regular import Subspace
from .sigma import SigmaBasis

__all__ = [
    "SolverError",
    "EllipticProblem",
    "solve_elliptic",
    "SymmetricOperator",
    "build_divergence_form_operator",
    "spectrum",
    "solve_shifted",
    "EvolutionProblem",
    "TrajectoryDiagnostics",
    "evolve",
    "burgers_rhs",
    "conservation_rhs",
    "diffusion_rhs",
    "wave_system",
    "wave_energy",
    "minimize_functional",
    "TableSpace",
]


class SolverError(PartitionError):
    """Raised when a solver cannot certify its result."""


# ---------------------------------------------------------------------------
# solution spaces


@dataclass
class TableSpace:
    """A subspace of value tables, as d-orthonormal columns."""

    basis: SigmaBasis
    columns: np.ndarray  # (n_points, k)
    label: str

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    def project_values(self, values: np.ndarray) -> np.ndarray:
        d = self.basis.weights.weights
        return self.columns @ (self.columns.T @ (d * values))


def space_from_mask(basis: SigmaBasis, mask: np.ndarray, label: str) -> TableSpace:
    d = basis.weights.weights
    idx = np.nonzero(mask)[0]
    cols = np.zeros((basis.partition.n_points, idx.size))
    cols[idx, np.arange(idx.size)] = 1.0 / np.sqrt(d[idx])
    return TableSpace(basis, cols, label)


def space_from_subspace(
    sub: Subspace, mask: Optional[np.ndarray] = None, rank_tol: float = 1e-10
) -> TableSpace:
    """Restrict a regularity level to tables supported on a mask."""
    basis = sub.basis
    cols = sub.tables
    if mask is not None:
        cols = cols * mask[:, None].astype(float)
        d = basis.weights.weights
        root = np.sqrt(d)
        u, s, vt = np.linalg.svd(cols * root[:, None], full_matrices=False)
        keep = s > rank_tol * max(float(s[0]), 1e-300)
        cols = u[:, keep] / root[:, None]
    return TableSpace(basis, cols, f"regular-level-{sub.level}")


def interior_smooth_space(
    basis: SigmaBasis,
    domain: CellSet,
    include_products: bool = True,
    rank_tol: float = 1e-10,
) -> TableSpace:
    """Tables of tower elements supported inside the domain.

    These vanish identically outside the cell union, so they are conforming
    for zero-boundary problems, and their smoothness keeps the fine-scale
    parity modes of the wide-stencil derivative out of the solve.
    """
    part = basis.partition
    lo = np.full(part.config.dimension, np.inf)
    hi = np.full(part.config.dimension, -np.inf)
    cm = part.cell_measures()
    for i in domain.indices:
        # bounding box of the member cells, via their fine cells
        cells = np.nonzero(part.fine_owner == i)[0]
        c = part.fine_center(cells)
        lo = np.minimum(lo, np.min(np.atleast_2d(c), axis=0) - part.config.eta / 2)
        hi = np.maximum(hi, np.max(np.atleast_2d(c), axis=0) + part.config.eta / 2)
    pool = list(basis.tower.w1.basis)
    if include_products:
        pool = pool + list(basis.tower.w0.basis)
    cols = []
    for f in pool:
        box = f.support_box()
        if np.all(box[:, 0] >= lo - 1e-12) and np.all(box[:, 1] <= hi + 1e-12):
            cols.append(f.value(part.points))
    if not cols:
        raise SolverError(
            "no tower element is supported inside the domain; refine the "
            "coarse mesh or enlarge the domain"
        )
    mat = np.stack(cols, axis=1)
    d = basis.weights.weights
    root = np.sqrt(d)
    u, s, vt = np.linalg.svd(mat * root[:, None], full_matrices=False)
    keep = s > rank_tol * max(float(s[0]), 1e-300)
    return TableSpace(basis, u[:, keep] / root[:, None], "interior-smooth")


# ---------------------------------------------------------------------------
# elliptic problems


@dataclass
class EllipticProblem:
    """Divergence-form problem data on a cell-union domain.

    ``coefficient`` maps (x-row, u-value) to a scalar or an NxN matrix;
    ``source`` maps (x-row, u-value) to a scalar, or is a fixed table.
    ``boundary`` is ``dirichlet`` (tables vanish outside the domain) or
    ``neumann`` (tables vanish outside the domain's vicinity; ``flux``
    supplies the boundary flux density).
    """

    domain: CellSet
    coefficient: Callable[[np.ndarray, float], Union[float, np.ndarray]]
    source: Union[Callable[[np.ndarray, float], float], GridFunction]
    boundary: str = "dirichlet"
    flux: Optional[Callable[[np.ndarray], float]] = None
    space: Union[str, Subspace, TableSpace] = "full"
    coefficient_du: Optional[Callable[[np.ndarray, float], Union[float, np.ndarray]]] = None
    source_du: Optional[Callable[[np.ndarray, float], float]] = None
    # oracle extending nonzero boundary data into the box: the solve
    # substitutes u = w + extension and searches the homogeneous space for w
    boundary_extension: Optional[Callable[..., float]] = None


def _coef_tables(problem: EllipticProblem, u: np.ndarray, part: Partition, fn=None):
    """Pointwise coefficient tables k_ij(x, u(x)) per axis pair."""
    dim = part.config.dimension
    fn = fn or problem.coefficient
    out = np.zeros((dim, dim, part.n_points))
    for a in range(part.n_points):
        val = fn(part.points[a], float(u[a]))
        arr = np.asarray(val, dtype=float)
        if arr.ndim == 0:
            for i in range(dim):
                out[i, i, a] = float(arr)
        else:
            out[:, :, a] = arr
    return out


def _source_table(problem: EllipticProblem, u: np.ndarray, part: Partition) -> np.ndarray:
    if isinstance(problem.source, GridFunction):
        return problem.source.values
    return np.array(
        [problem.source(part.points[a], float(u[a])) for a in range(part.n_points)]
    )


def elliptic_residual(
    problem: EllipticProblem,
    u: np.ndarray,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
) -> np.ndarray:
    """Value table of -D.(mu k(x,u) D u) + mu f(x,u) (+ surface flux term)."""
    part = basis.partition
    mu = measure_from_cells(problem.domain, basis).table.values
    k = _coef_tables(problem, u, part)
    grad = [op.matrix @ u for op in ops]
    res = np.zeros(part.n_points)
    dim = part.config.dimension
    for i in range(dim):
        flux_i = np.zeros(part.n_points)
        for j in range(dim):
            flux_i += k[i, j] * grad[j]
        res -= ops[i].matrix @ (mu * flux_i)
    res += mu * _source_table(problem, u, part)
    if problem.boundary == "neumann" and problem.flux is not None:
        gm = _grad_mu_norm(problem.domain, ops, basis)
        g = np.array([problem.flux(part.points[a]) for a in range(part.n_points)])
        res += gm * g
    return res


def _grad_mu_norm(e: CellSet, ops, basis) -> np.ndarray:
    mu = measure_from_cells(e, basis).table.values
    acc = np.zeros(e.partition.n_points)
    for op in ops:
        acc += (op.matrix @ mu) ** 2
    return np.sqrt(acc)


def _problem_space(
    problem: EllipticProblem,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
) -> TableSpace:
    if isinstance(problem.space, TableSpace):
        return problem.space
    if isinstance(problem.space, Subspace):
        mask = problem.domain.mask
        if problem.boundary == "neumann":
            mask = vicinity(problem.domain, ops, basis).mask
        return space_from_subspace(problem.space, mask)
    if problem.space == "interior-smooth":
        return interior_smooth_space(basis, problem.domain)
    if problem.boundary == "neumann":
        mask = vicinity(problem.domain, ops, basis).mask
        return space_from_mask(basis, mask, "vicinity")
    return space_from_mask(basis, problem.domain.mask, "domain")


def _linearized_matrix(
    problem: EllipticProblem,
    u: np.ndarray,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
    newton: bool,
) -> np.ndarray:
    """Matrix of the coefficient-lagged (or Newton-linearized) operator."""
    part = basis.partition
    n = part.n_points
    dim = part.config.dimension
    mu = measure_from_cells(problem.domain, basis).table.values
    k = _coef_tables(problem, u, part)
    mat = np.zeros((n, n))
    for i in range(dim):
        inner = np.zeros((n, n))
        for j in range(dim):
            inner += k[i, j][:, None] * ops[j].matrix
        mat -= ops[i].matrix @ (mu[:, None] * inner)
    if newton:
        grad = [op.matrix @ u for op in ops]
        if problem.coefficient_du is not None:
            ku = _coef_tables(problem, u, part, fn=problem.coefficient_du)
            for i in range(dim):
                flux_u = np.zeros(n)
                for j in range(dim):
                    flux_u += ku[i, j] * grad[j]
                mat -= ops[i].matrix @ (mu * flux_u)[:, None] * np.ones((1, n)) * 0.0
                mat -= ops[i].matrix @ np.diag(mu * flux_u)
        if problem.source_du is not None:
            fu = np.array(
                [problem.source_du(part.points[a], float(u[a])) for a in range(n)]
            )
            mat += np.diag(mu * fu)
        elif not isinstance(problem.source, GridFunction):
            # numerical source derivative
            eps = 1e-7
            f0 = _source_table(problem, u, part)
            f1 = _source_table(problem, u + eps, part)
            mat += np.diag(mu * (f1 - f0) / eps)
    return mat


def solve_elliptic(
    problem: EllipticProblem,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
    method: str = "fixed-point",
    tol: float = 1e-10,
    max_iter: int = 60,
    damping: float = 1.0,
    init: Optional[GridFunction] = None,
) -> dict:
    """Drive the restricted residual below tol from a deterministic start.

    ``fixed-point`` lags the coefficients and damps the update; ``newton``
    adds the pointwise derivative terms.  The report carries the residual
    history; a monotone residual increase is flagged as apparent
    non-coercivity.
    """
    part = basis.partition
    d = basis.weights.weights
    space = _problem_space(problem, ops, basis)
    offset = np.zeros(part.n_points)
    if problem.boundary_extension is not None:
        from .partition import restrict as _restrict

        offset = _restrict(problem.boundary_extension, part).values
    w = np.zeros(part.n_points) if init is None else init.values - offset
    w = space.project_values(w)

    history: List[float] = []
    newton = method == "newton"

    for it in range(max_iter):
        u = w + offset
        r_full = elliptic_residual(problem, u, ops, basis)
        r = space.project_values(r_full)
        rn = float(np.sqrt(compensated_sum(r * r * d)))
        history.append(rn)
        if rn <= tol:
            return {
                "solution": GridFunction(part, u),
                "iterations": it,
                "residual": rn,
                "history": history,
                "space": space.label,
                "converged": True,
            }
        if it >= 5 and all(
            history[-k - 1] > history[-k - 2] for k in range(4)
        ):
            raise SolverError(
                f"residual diverging monotonically after {it} iterations "
                f"(apparent non-coercivity); history tail {history[-5:]}"
            )
        mat = _linearized_matrix(problem, u, ops, basis, newton)
        a = space.columns.T @ (d[:, None] * mat @ space.columns)
        b = space.columns.T @ (d * r_full)
        try:
            delta = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"linearized solve failed: {exc}") from exc
        w = w - damping * (space.columns @ delta)
    raise SolverError(
        f"elliptic solve did not reach tol={tol} in {max_iter} iterations; "
        f"best residual {min(history):.3e}"
    )


# ---------------------------------------------------------------------------
# symmetric spectral problems


@dataclass
class SymmetricOperator:
    """A d-symmetric operator restricted to a table space."""

    space: TableSpace
    reduced: np.ndarray      # (k, k) symmetric matrix in the orthonormal basis
    symmetry_residual: float


def build_divergence_form_operator(
    coefficient: Callable[[np.ndarray], Union[float, np.ndarray]],
    domain: CellSet,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
    space: Optional[TableSpace] = None,
    symmetry_tol: float = 1e-10,
) -> SymmetricOperator:
    """Assemble L u = -D.(mu k(x) D u) on a table space and certify symmetry."""
    part = basis.partition
    dim = part.config.dimension
    n = part.n_points
    mu = measure_from_cells(domain, basis).table.values
    if space is None:
        space = space_from_mask(basis, domain.mask, "domain")
    ktab = np.zeros((dim, dim, n))
    for a in range(n):
        val = np.asarray(coefficient(part.points[a]), dtype=float)
        if val.ndim == 0:
            for i in range(dim):
                ktab[i, i, a] = float(val)
        else:
            ktab[:, :, a] = val
    mat = np.zeros((n, n))
    for i in range(dim):
        inner = np.zeros((n, n))
        for j in range(dim):
            inner += ktab[i, j][:, None] * ops[j].matrix
        mat -= ops[i].matrix @ (mu[:, None] * inner)
    d = basis.weights.weights
    red = space.columns.T @ (d[:, None] * (mat @ space.columns))
    sym = float(np.max(np.abs(red - red.T))) / max(float(np.max(np.abs(red))), 1e-300)
    if sym > symmetry_tol:
        raise SolverError(f"operator not symmetric on the space: residual {sym:.2e}")
    red = 0.5 * (red + red.T)
    return SymmetricOperator(space=space, reduced=red, symmetry_residual=sym)


def spectrum(op: SymmetricOperator, count: Optional[int] = None) -> dict:
    """Eigenpairs of the reduced symmetric operator, ascending."""
    vals, vecs = scipy.linalg.eigh(op.reduced)
    if count is not None:
        vals, vecs = vals[:count], vecs[:, :count]
    tables = op.space.columns @ vecs
    return {"values": vals, "tables": tables, "symmetry_residual": op.symmetry_residual}


def solve_shifted(
    op: SymmetricOperator,
    shift: float,
    rhs: GridFunction,
    singular_tol: float = 1e-10,
) -> GridFunction:
    """Solve (L + shift) u = rhs by eigen-expansion; reject near-singular shifts."""
    vals, vecs = scipy.linalg.eigh(op.reduced)
    d = op.space.basis.weights.weights
    f_red = vecs.T @ (op.space.columns.T @ (d * rhs.values))
    denom = vals + shift
    scale = max(float(np.max(np.abs(vals))), 1.0)
    bad = np.abs(denom) < singular_tol * scale
    if np.any(bad):
        k = int(np.nonzero(bad)[0][0])
        raise SolverError(
            f"shift {shift} collides with eigenvalue {vals[k]:.6e} "
            f"(mode {k}); the shifted problem has no stable solution"
        )
    coef = f_red / denom
    values = op.space.columns @ (vecs @ coef)
    return GridFunction(op.space.basis.partition, values)


# ---------------------------------------------------------------------------
# evolution problems


@dataclass
class TrajectoryDiagnostics:
    """Per-accepted-step series of the conserved and monitored quantities."""

    times: List[float] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    l2: List[float] = field(default_factory=list)
    l3: List[float] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)
    support: List[float] = field(default_factory=list)

    def record(self, t, state, basis, energy_fn) -> None:
        d = basis.weights.weights
        u = state[0]
        self.times.append(float(t))
        self.mass.append(compensated_sum(u * d))
        self.l2.append(float(np.sqrt(compensated_sum(u * u * d))))
        self.l3.append(compensated_sum(np.abs(u) ** 3 * d) ** (1.0 / 3.0))
        self.energy.append(float(energy_fn(state)) if energy_fn else 0.0)
        live = np.abs(u) > 1e-12 * max(float(np.max(np.abs(u))), 1e-300)
        pts = basis.partition.points[live]
        self.support.append(
            float(np.max(np.abs(pts))) if pts.size else 0.0
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mass", "l2", "l3", "energy", "support"])
        for row in zip(self.times, self.mass, self.l2, self.l3, self.energy, self.support):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass
class EvolutionProblem:
    """Method-of-lines problem: autonomous right side over stacked tables."""

    rhs: Callable[[List[np.ndarray]], List[np.ndarray]]
    initial: List[GridFunction]
    t_end: float
    energy_fn: Optional[Callable[[List[np.ndarray]], float]] = None
    ceiling: float = 1e8


def _rk4_step(rhs, state, dt):
    k1 = rhs(state)
    k2 = rhs([s + 0.5 * dt * k for s, k in zip(state, k1)])
    k3 = rhs([s + 0.5 * dt * k for s, k in zip(state, k2)])
    k4 = rhs([s + dt * k for s, k in zip(state, k3)])
    return [
        s + dt / 6.0 * (a + 2 * b + 2 * c + e)
        for s, a, b, c, e in zip(state, k1, k2, k3, k4)
    ]


def evolve(
    problem: EvolutionProblem,
    basis: SigmaBasis,
    integrator: str = "rk4",
    dt: float = 1e-3,
    adapt_tol: float = 1e-8,
    record_every: int = 1,
) -> dict:
    """Integrate to the horizon, sampling diagnostics at every accepted step.

    Exceeding the sup-norm ceiling halts with the partial trajectory and a
    blow-up flag; adaptive-mode step underflow is an error carrying the
    last good state.
    """
    state = [g.values.copy() for g in problem.initial]
    part = basis.partition
    diag = TrajectoryDiagnostics()
    diag.record(0.0, state, basis, problem.energy_fn)
    t = 0.0
    step = 0
    blow_up = False

    if integrator == "rk4":
        n_steps = int(round(problem.t_end / dt))
        for step in range(1, n_steps + 1):
            state = _rk4_step(problem.rhs, state, dt)
            t = step * dt
            if not all(np.all(np.isfinite(s)) for s in state) or max(
                float(np.max(np.abs(s))) for s in state
            ) > problem.ceiling:
                blow_up = True
                diag.record(t, state, basis, problem.energy_fn)
                break
            if step % record_every == 0:
                diag.record(t, state, basis, problem.energy_fn)
    elif integrator == "adaptive-rk":
        h = dt
        h_min = dt * 1e-8
        while t < problem.t_end - 1e-14:
            h = min(h, problem.t_end - t)
            full = _rk4_step(problem.rhs, state, h)
            half = _rk4_step(problem.rhs, state, 0.5 * h)
            half = _rk4_step(problem.rhs, half, 0.5 * h)
            err = max(
                float(np.max(np.abs(a - b))) for a, b in zip(full, half)
            )
            scale = max(max(float(np.max(np.abs(s))) for s in state), 1.0)
            if err <= adapt_tol * scale:
                state = [2 * b - a for a, b in zip(full, half)]
                t += h
                if not all(np.all(np.isfinite(s)) for s in state) or max(
                    float(np.max(np.abs(s))) for s in state
                ) > problem.ceiling:
                    blow_up = True
                    diag.record(t, state, basis, problem.energy_fn)
                    break
                diag.record(t, state, basis, problem.energy_fn)
                h *= 1.5
            else:
                h *= 0.5
                if h < h_min:
                    raise SolverError(
                        f"adaptive step underflow at t={t:.6f}; last good "
                        f"state has sup norm "
                        f"{max(float(np.max(np.abs(s))) for s in state):.3e}"
                    )
    else:
        raise SolverError(f"unknown integrator {integrator!r}")

    return {
        "state": [GridFunction(part, s) for s in state],
        "t_final": t,
        "diagnostics": diag,
        "blow_up": blow_up,
    }


def burgers_rhs(
    form: str, ops: Sequence[DerivativeOperator], viscosity: float = 0.0
) -> Callable[[List[np.ndarray]], List[np.ndarray]]:
    """Quadratic transport right side, conservative or nonconservative.

    A positive ``viscosity`` adds the second-derivative term (a finite
    stand-in for vanishing-viscosity regularisation).
    """
    if ops[0].partition.config.dimension != 1:
        raise SolverError("the quadratic transport forms are one-dimensional")
    dmat = ops[0].matrix

    def visc(u):
        return viscosity * (dmat @ (dmat @ u)) if viscosity else 0.0

    if form == "conservative":
        return lambda state: [
            -(dmat @ (state[0] * np.abs(state[0]) / 2.0)) + visc(state[0])
        ]
    if form == "nonconservative":
        return lambda state: [-(state[0] * (dmat @ state[0])) + visc(state[0])]
    raise SolverError(f"unknown transport form {form!r}")


def conservation_rhs(
    flux: Callable[[np.ndarray, np.ndarray], Sequence[np.ndarray]],
    ops: Sequence[DerivativeOperator],
) -> Callable[[List[np.ndarray]], List[np.ndarray]]:
    """Right side D.F(x, u) of a conservation law.

    ``flux`` is vectorized: it receives the point array (n, N) and the value
    table (n,) and returns one table per axis.
    """
    part = ops[0].partition
    dim = part.config.dimension
    pts = part.points

    def rhs(state):
        u = state[0]
        comps = flux(pts, u)
        out = np.zeros(part.n_points)
        for i in range(dim):
            out += ops[i].matrix @ np.asarray(comps[i], dtype=float)
        return [out]

    return rhs


def diffusion_rhs(
    conductivity: Callable[[float], float],
    domain: CellSet,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
    state_space: str = "domain",
) -> Callable[[List[np.ndarray]], List[np.ndarray]]:
    """Right side D.(mu k(u) D u); sign-indefinite k is allowed.

    ``state_space`` keeps the trajectory in the chosen table space:
    ``domain`` masks to the cell union (zero-boundary behaviour),
    ``vicinity`` masks to its vicinity (no-flux behaviour), ``free`` leaves
    the right side unmasked.
    """
    mu = measure_from_cells(domain, basis).table.values
    if state_space == "domain":
        mask = domain.mask.astype(float)
    elif state_space == "vicinity":
        mask = vicinity(domain, ops, basis).mask.astype(float)
    elif state_space == "free":
        mask = np.ones(domain.partition.n_points)
    else:
        raise SolverError(f"unknown state space {state_space!r}")

    def rhs(state):
        u = state[0]
        kv = np.array([conductivity(float(v)) for v in u])
        out = np.zeros_like(u)
        for op in ops:
            out += op.matrix @ (mu * kv * (op.matrix @ u))
        return [mask * out]

    return rhs


def wave_system(
    p: float, ops: Sequence[DerivativeOperator]
) -> Callable[[List[np.ndarray]], List[np.ndarray]]:
    """First-order system for the defocusing wave equation with power p > 2."""
    if p <= 2:
        raise SolverError("the wave nonlinearity needs p > 2")

    def rhs(state):
        u, w = state
        lap = np.zeros_like(u)
        for op in ops:
            lap += op.matrix @ (op.matrix @ u)
        return [w, lap - np.abs(u) ** (p - 2.0) * u]

    return rhs


def wave_energy(
    p: float, ops: Sequence[DerivativeOperator], basis: SigmaBasis
) -> Callable[[List[np.ndarray]], float]:
    d = basis.weights.weights

    def energy(state):
        u, w = state
        acc = 0.5 * w * w + np.abs(u) ** p / p
        for op in ops:
            du = op.matrix @ u
            acc = acc + 0.5 * du * du
        return compensated_sum(acc * d)

    return energy


# ---------------------------------------------------------------------------
# functional minimization


def minimize_functional(
    integrand: Callable[[np.ndarray, float, np.ndarray], float],
    d_u: Callable[[np.ndarray, float, np.ndarray], float],
    d_grad: Callable[[np.ndarray, float, np.ndarray], np.ndarray],
    domain: CellSet,
    space: TableSpace,
    ops: Sequence[DerivativeOperator],
    basis: SigmaBasis,
    init: Optional[GridFunction] = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    seed: int = 0,
) -> dict:
    """Projected gradient descent with backtracking on the grid functional.

    The functional is the domain-weighted grid integral of
    ``integrand(x, u, Du)``; ``d_u`` and ``d_grad`` are its partial
    derivatives in the value and gradient slots.  All three are vectorized
    over the grid: they receive the point array (n, N), the value table
    (n,) and the gradient table (n, N).  The report carries the
    stationarity norm and the full-table first-order residual, which is
    checked to be grid-orthogonal to the search space.
    """
    part = basis.partition
    d = basis.weights.weights
    dim = part.config.dimension
    mu = measure_from_cells(domain, basis).table.values
    rng = np.random.default_rng(seed)
    pts = part.points

    if init is None:
        u = space.columns @ (1e-3 * rng.standard_normal(space.dim))
    else:
        u = space.project_values(init.values.copy())

    def j_value(uv: np.ndarray) -> float:
        grads = np.stack([op.matrix @ uv for op in ops], axis=1)
        vals = np.asarray(integrand(pts, uv, grads), dtype=float)
        return compensated_sum(vals * mu * d)

    def residual(uv: np.ndarray) -> np.ndarray:
        grads = np.stack([op.matrix @ uv for op in ops], axis=1)
        fu = np.asarray(d_u(pts, uv, grads), dtype=float)
        fxi = np.asarray(d_grad(pts, uv, grads), dtype=float)
        if fxi.ndim == 1:
            fxi = fxi[:, None]
        g = mu * fu
        for i in range(dim):
            g -= ops[i].matrix @ (mu * fxi[:, i])
        return g

    jv = j_value(u)
    history = [jv]
    g_prev: Optional[np.ndarray] = None
    u_prev: Optional[np.ndarray] = None
    step = 1.0
    for it in range(max_iter):
        g_full = residual(u)
        g = space.project_values(g_full)
        gn = float(np.sqrt(compensated_sum(g * g * d)))
        if gn <= tol:
            break
        if g_prev is not None:
            s = u - u_prev
            y = g - g_prev
            sy = float(np.sum(s * y * d))
            yy = float(np.sum(y * y * d))
            if yy > 0 and sy > 0:
                step = sy / yy  # spectral step estimate
        u_prev, g_prev = u.copy(), g.copy()
        accepted = False
        trial = step
        while trial > 1e-15:
            cand = u - trial * g
            jc = j_value(cand)
            if jc < jv - 1e-6 * trial * gn * gn:
                u, jv = cand, jc
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            break
        history.append(jv)
    else:
        if gn > tol * 1e4:
            raise SolverError(
                f"minimization stalled: stationarity {gn:.3e} after {max_iter} "
                "iterations"
            )

    g_full = residual(u)
    g_proj = space.project_values(g_full)
    ortho = float(
        np.max(np.abs(space.columns.T @ (d * (g_full - (g_full - g_proj)))))
    ) if space.dim else 0.0
    return {
        "minimizer": GridFunction(part, u),
        "value": jv,
        "history": history,
        "stationarity": float(np.sqrt(compensated_sum(g_proj * g_proj * d))),
        "first_order_residual": GridFunction(part, g_full),
        "residual_orthogonality": ortho,
    }
