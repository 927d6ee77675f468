"""Reproducible experiment runner.

Subcommands: ``verify`` (build everything and run the exact-identity
suite), ``solve`` / ``evolve`` / ``minimize`` / ``spectrum`` (registered
problems emitting CSV artifacts, a run manifest and figures), and
``export-operator`` (sparse triplets plus the certification record).

Exit codes: 0 pass, 1 invariant failure, 2 configuration error, 3 solver
non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Callable, Dict, Optional

import numpy as np

from .config import ConfigError, DEFAULT_CONFIG, RunConfig, parse_config
from .context import BuildContext
from .derivative import CertificationError
from .measures import cellset_from_box, measure_from_cells
from .partition import GridFunction, PartitionError, restrict
from .sigma import BasisBuildError
from .solvers import (
    EllipticProblem,
    EvolutionProblem,
    SolverError,
    build_divergence_form_operator,
    burgers_rhs,
    conservation_rhs,
    diffusion_rhs,
    evolve,
    interior_smooth_space,
    minimize_functional,
    solve_elliptic,
    space_from_mask,
    spectrum,
    wave_energy,
    wave_system,
)
from .verify import report_lines, run_verification

EXIT_PASS = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return parse_config(DEFAULT_CONFIG)
    with open(path) as fh:
        return parse_config(fh.read())


def _write(outdir: str, name: str, content: str) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    with open(path, "w") as fh:
        fh.write(content)
    return path


def _domain(ctx: BuildContext):
    p = ctx.config.sections.get("problem", {})
    lo = p.get("domain_lo", [0.0] * ctx.partition.config.dimension)
    hi = p.get("domain_hi", [1.0] * ctx.partition.config.dimension)
    return cellset_from_box(ctx.partition, lo, hi)


def _bump_table(ctx: BuildContext, radius: float = 0.75) -> GridFunction:
    dim = ctx.partition.config.dimension

    def bump(*x):
        r2 = sum(v * v for v in x) / radius**2
        return float(np.exp(1.0 - 1.0 / (1.0 - r2))) if r2 < 1 else 0.0

    return restrict(bump, ctx.partition)


# ---------------------------------------------------------------------------
# registered problems


def _solve_poisson(ctx: BuildContext, outdir: str, plot: bool) -> str:
    dom = _domain(ctx)
    pts = dom.partition.points[dom.indices]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)

    def w_exact(*x):
        t = 1.0
        for lo_i, hi_i, xi in zip(np.atleast_1d(lo), np.atleast_1d(hi), x):
            s = (xi - lo_i) / (hi_i - lo_i)
            t *= (16.0 * s * (1.0 - s)) ** 2 / 16.0 if 0 < s < 1 else 0.0
        return t

    part = ctx.partition
    eps = 1e-6
    # numerical Laplacian of the manufactured solution for the source
    def lap(*x):
        total = 0.0
        for i in range(part.config.dimension):
            xp = list(x)
            xm = list(x)
            xp[i] += eps
            xm[i] -= eps
            total += (w_exact(*xp) - 2 * w_exact(*x) + w_exact(*xm)) / eps**2
        return total

    f = restrict(lambda *x: -lap(*x), part)
    prob = EllipticProblem(
        domain=dom,
        coefficient=lambda x, u: 1.0,
        source=GridFunction(part, -f.values),
        space="interior-smooth",
    )
    rep = solve_elliptic(prob, ctx.operators, ctx.basis, tol=1e-9, max_iter=20)
    u = rep["solution"]
    exact = restrict(w_exact, part)
    err = float(np.max(np.abs(u.values - exact.values)))
    _write(outdir, "solution.csv", u.to_csv())
    if plot:
        from .report import render_solution

        render_solution(u, os.path.join(outdir, "solution.png"), "poisson solution")
    ctx.manifest.extra["sup_error"] = err
    ctx.manifest.extra["residual"] = rep["residual"]
    return f"poisson: residual {rep['residual']:.2e}, sup error {err:.3e}"


def _solve_sign_changing(ctx: BuildContext, outdir: str, plot: bool) -> str:
    dom = _domain(ctx)
    part = ctx.partition
    rng = np.random.default_rng(ctx.manifest.seed)
    interior = dom.mask.copy()
    # an interior cell union as the exact indicator solution
    idx = np.nonzero(interior)[0]
    pick = rng.choice(idx, size=max(len(idx) // 4, 1), replace=False)
    chi = np.zeros(part.n_points)
    chi[pick] = 1.0
    prob = EllipticProblem(
        domain=dom,
        coefficient=lambda x, u: u**3 - u,
        source=lambda x, u: 0.0,
    )
    from .solvers import elliptic_residual

    res = elliptic_residual(prob, chi, ctx.operators, ctx.basis)
    res = res * dom.mask
    resn = float(np.max(np.abs(res)))
    _write(outdir, "solution.csv", GridFunction(part, chi).to_csv())
    ctx.manifest.extra["indicator_residual"] = resn
    if resn > 1e-10:
        raise SolverError(f"indicator residual {resn:.3e} exceeds 1e-10")
    return f"sign-changing: indicator solution residual {resn:.2e}"


def _evolve_common(ctx: BuildContext, outdir: str, plot: bool, prob, name) -> str:
    p = ctx.config.sections.get("problem", {})
    t0 = time.time()
    rep = evolve(
        prob,
        ctx.basis,
        integrator=str(p.get("integrator", "rk4")),
        dt=float(p.get("dt", 1e-3)),
        record_every=int(p.get("record_every", 10)),
    )
    ctx.manifest.time_block("evolve", t0)
    diag = rep["diagnostics"]
    _write(outdir, "diagnostics.csv", diag.to_csv())
    _write(outdir, "solution.csv", rep["state"][0].to_csv())
    if plot:
        from .report import render_diagnostics, render_solution

        render_diagnostics(diag, os.path.join(outdir, "diagnostics.png"))
        render_solution(
            rep["state"][0], os.path.join(outdir, "solution.png"), name
        )
    mass_drift = abs(diag.mass[-1] - diag.mass[0]) / max(abs(diag.mass[0]), 1e-300)
    ctx.manifest.extra["mass_drift"] = mass_drift
    ctx.manifest.extra["blow_up"] = rep["blow_up"]
    note = " (halted: blow-up ceiling)" if rep["blow_up"] else ""
    headline = f"mass drift {mass_drift:.2e}"
    if prob.energy_fn is not None and abs(diag.energy[0]) > 0:
        energy_drift = abs(diag.energy[-1] - diag.energy[0]) / abs(diag.energy[0])
        ctx.manifest.extra["energy_drift"] = energy_drift
        headline = f"energy drift {energy_drift:.2e}"
    return f"{name}: t={rep['t_final']:.3f}, {headline}{note}"


def _evolve_burgers(ctx: BuildContext, outdir: str, plot: bool) -> str:
    p = ctx.config.sections.get("problem", {})
    form = str(p.get("form", "nonconservative"))
    part = ctx.partition
    if form == "nonconservative":
        u0 = restrict(lambda x: x if 0 <= x < 1 else 0.0, part)
    else:
        u0 = _bump_table(ctx)
    prob = EvolutionProblem(
        rhs=burgers_rhs(form, ctx.operators),
        initial=[u0],
        t_end=float(p.get("t_end", 1.0)),
        ceiling=float(p.get("ceiling", 1e8)),
    )
    return _evolve_common(ctx, outdir, plot, prob, f"burgers-{form}")


def _evolve_conservation(ctx: BuildContext, outdir: str, plot: bool) -> str:
    p = ctx.config.sections.get("problem", {})
    u0 = _bump_table(ctx)
    rhs = conservation_rhs(lambda pts, u: [0.5 * u + 0.1 * np.sin(u)], ctx.operators)
    prob = EvolutionProblem(
        rhs=rhs,
        initial=[u0],
        t_end=float(p.get("t_end", 1.0)),
        ceiling=float(p.get("ceiling", 1e8)),
    )
    return _evolve_common(ctx, outdir, plot, prob, "conservation-law")


def _evolve_heat(ctx: BuildContext, outdir: str, plot: bool) -> str:
    p = ctx.config.sections.get("problem", {})
    dom = _domain(ctx)
    cond = str(p.get("conductivity", "1.0"))
    if cond == "sign-changing":
        k = lambda r: r * r - 0.25
    else:
        kval = float(cond)
        k = lambda r: kval
    u0 = _bump_table(ctx, radius=0.5)
    prob = EvolutionProblem(
        rhs=diffusion_rhs(k, dom, ctx.operators, ctx.basis),
        initial=[u0],
        t_end=float(p.get("t_end", 0.1)),
        ceiling=float(p.get("ceiling", 1e8)),
    )
    return _evolve_common(ctx, outdir, plot, prob, "diffusion")


def _evolve_wave(ctx: BuildContext, outdir: str, plot: bool) -> str:
    p = ctx.config.sections.get("problem", {})
    pw = float(p.get("power", 4.0))
    part = ctx.partition
    u0 = _bump_table(ctx, radius=0.6)
    u1 = GridFunction(part, np.zeros(part.n_points))
    prob = EvolutionProblem(
        rhs=wave_system(pw, ctx.operators),
        initial=[u0, u1],
        t_end=float(p.get("t_end", 1.0)),
        energy_fn=wave_energy(pw, ctx.operators, ctx.basis),
        ceiling=float(p.get("ceiling", 1e8)),
    )
    return _evolve_common(ctx, outdir, plot, prob, f"wave-p{pw:g}")


def _minimize_lavrentiev(ctx: BuildContext, outdir: str, plot: bool) -> str:
    p = ctx.config.sections.get("problem", {})
    dom = _domain(ctx)
    part = ctx.partition
    integrand = lambda pts, u, g: (g[:, 0] ** 2 - 1.0) ** 2 + u * u
    d_u = lambda pts, u, g: 2.0 * u
    d_grad = lambda pts, u, g: (4.0 * (g[:, 0] ** 2 - 1.0) * g[:, 0])[:, None]
    u1space = interior_smooth_space(ctx.basis, dom)
    h = part.config.h_coarse
    delta = (2.25 * h) ** (1.0 / 3.0)
    x = part.points[:, 0]
    tri = (2 / np.pi) * np.arcsin(np.sin(np.pi * x / delta)) * (delta / 2)
    warm = GridFunction(part, np.where(dom.mask, tri, 0.0))
    rep1 = minimize_functional(
        integrand, d_u, d_grad, dom, u1space, ctx.operators, ctx.basis,
        init=warm, tol=float(p.get("tol", 1e-6)), max_iter=int(p.get("max_iter", 1500)),
    )
    full = space_from_mask(ctx.basis, dom.mask, "domain")
    rep2 = minimize_functional(
        integrand, d_u, d_grad, dom, full, ctx.operators, ctx.basis,
        init=rep1["minimizer"], tol=float(p.get("tol", 1e-6)),
        max_iter=int(p.get("max_iter", 1500)),
    )
    mu = measure_from_cells(dom, ctx.basis).table.values
    j0 = float(np.sum(mu * ctx.basis.weights.weights))
    doc = {
        "J_zero": j0,
        "min_regular": rep1["value"],
        "min_full": rep2["value"],
        "stationarity_regular": rep1["stationarity"],
        "stationarity_full": rep2["stationarity"],
    }
    _write(outdir, "minima.json", json.dumps(doc, indent=2))
    _write(outdir, "minimizer_regular.csv", rep1["minimizer"].to_csv())
    _write(outdir, "minimizer_full.csv", rep2["minimizer"].to_csv())
    if plot:
        from .report import render_solution

        render_solution(
            rep1["minimizer"], os.path.join(outdir, "minimizer_regular.png"),
            "regular-space minimizer",
        )
        render_solution(
            rep2["minimizer"], os.path.join(outdir, "minimizer_full.png"),
            "full-space minimizer",
        )
    ctx.manifest.extra.update(doc)
    return (
        f"lavrentiev: J(0)={j0:.6f}, min over regular space {rep1['value']:.4f}, "
        f"min over full space {rep2['value']:.4f}"
    )


def _spectrum_interval(ctx: BuildContext, outdir: str, plot: bool) -> str:
    p = ctx.config.sections.get("problem", {})
    dom = _domain(ctx)
    dim = ctx.partition.config.dimension
    if dim == 1 and dom.mask.sum() % 2 == 0:
        # a Dirichlet interval needs an odd cell count, else the decoupled
        # parity chains see mixed boundary conditions
        idx = dom.indices
        mask = dom.mask.copy()
        mask[idx[-1]] = False
        dom = cellset_from_box(ctx.partition, [0], [0])
        dom = type(dom)(ctx.partition, mask)
    if str(p.get("kind")) == "tricomi":
        coef = lambda x: np.diag([1.0, x[0]])
    else:
        coef = lambda x: 1.0
    op = build_divergence_form_operator(coef, dom, ctx.operators, ctx.basis)
    count = int(p.get("count", 5))
    shift = p.get("shift")
    rep = spectrum(op)
    vals = np.sort(rep["values"])
    distinct = []
    for v in vals:
        if v < 0.3:
            continue
        if not distinct or abs(v - distinct[-1]) > 1e-6 + 1e-3 * abs(v):
            distinct.append(float(v))
        if len(distinct) >= count:
            break
    lines = ["index,eigenvalue"]
    for i, v in enumerate(distinct, start=1):
        lines.append(f"{i},{v!r}")
    _write(outdir, "spectrum.csv", "\n".join(lines) + "\n")
    summary = f"spectrum: lowest {len(distinct)} distinct eigenvalues " + ", ".join(
        f"{v:.4f}" for v in distinct
    )
    if shift is not None:
        from .solvers import solve_shifted

        rhs = _bump_table(ctx, radius=0.5)
        sol = solve_shifted(op, float(shift), rhs)
        _write(outdir, "shifted_solution.csv", sol.to_csv())
        summary += f"; shifted solve at {shift} ok"
    if plot:
        from .report import render_spectrum

        render_spectrum(distinct, os.path.join(outdir, "spectrum.png"))
    ctx.manifest.extra["eigenvalues"] = distinct
    return summary


_SOLVERS: Dict[str, Callable] = {
    "poisson": _solve_poisson,
    "sign-changing": _solve_sign_changing,
}
_EVOLVERS: Dict[str, Callable] = {
    "burgers": _evolve_burgers,
    "conservation": _evolve_conservation,
    "heat": _evolve_heat,
    "wave": _evolve_wave,
}
_MINIMIZERS: Dict[str, Callable] = {
    "lavrentiev": _minimize_lavrentiev,
}
_SPECTRA: Dict[str, Callable] = {
    "interval": _spectrum_interval,
    "tricomi": _spectrum_interval,
}


def _dispatch(table: Dict[str, Callable], ctx: BuildContext, outdir: str, plot: bool):
    kind = str(ctx.config.get("problem", "kind", ""))
    if kind not in table:
        raise ConfigError(
            f"unknown problem kind {kind!r}; registered: {sorted(table)}"
        )
    return table[kind](ctx, outdir, plot)


def _run_command(args) -> int:
    try:
        cfg = _load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    outdir = args.out or "runs/latest"
    plot = bool(cfg.get("output", "plot", True)) and not args.no_plot

    try:
        refine = max(int(args.refine or 1), 1)
        summaries = []
        for level in range(refine):
            level_cfg = cfg
            if level > 0:
                # joint refinement: halve both meshes by doubling counts
                text = []
                for line in cfg.text.splitlines():
                    if line.strip().startswith("h_coarse"):
                        base = float(line.split("=", 1)[1])
                        text.append(f"h_coarse = {base / (2 ** level)}")
                    else:
                        text.append(line)
                level_cfg = parse_config("\n".join(text))
            t0 = time.time()
            ctx = BuildContext.from_config(
                level_cfg, seed=args.seed, threads=args.threads
            )
            level_dir = outdir if refine == 1 else os.path.join(outdir, f"level{level}")
            if args.command == "verify":
                rep = run_verification(ctx, seed=args.seed)
                _write(level_dir, "verify.json", json.dumps(rep, indent=2))
                _write(level_dir, "manifest.json", ctx.manifest.to_json())
                print("\n".join(report_lines(rep)))
                if not rep["all_pass"]:
                    return EXIT_INVARIANT
                summaries.append(f"verify pass ({rep['elapsed']:.1f}s)")
            elif args.command == "solve":
                summaries.append(_dispatch(_SOLVERS, ctx, level_dir, plot))
            elif args.command == "evolve":
                summaries.append(_dispatch(_EVOLVERS, ctx, level_dir, plot))
            elif args.command == "minimize":
                summaries.append(_dispatch(_MINIMIZERS, ctx, level_dir, plot))
            elif args.command == "spectrum":
                summaries.append(_dispatch(_SPECTRA, ctx, level_dir, plot))
            elif args.command == "export-operator":
                for op in ctx.operators:
                    _write(
                        level_dir,
                        f"operator_axis{op.axis}.csv",
                        op.export_triplets(threshold=1e-14),
                    )
                    _write(
                        level_dir,
                        f"certification_axis{op.axis}.json",
                        op.certification_json(),
                    )
                summaries.append(f"exported {len(ctx.operators)} operators")
            ctx.manifest.time_block("total", t0)
            if args.command != "verify":
                _write(level_dir, "manifest.json", ctx.manifest.to_json())
        for s in summaries:
            print(s)
        return EXIT_PASS
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CertificationError, BasisBuildError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PartitionError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="finegrid",
        description="Two-scale grid calculus: verification and problem runs.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("verify", "solve", "evolve", "minimize", "spectrum", "export-operator"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="path to a run configuration")
        sp.add_argument("--out", help="artifact directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument(
            "--threads",
            type=int,
            default=1,
            help="recorded in the manifest; reductions are fixed-order, so "
            "results are identical for any value",
        )
        sp.add_argument(
            "--refine",
            type=int,
            default=1,
            help="repeat the run over k joint mesh refinements",
        )
        sp.add_argument("--no-plot", action="store_true")
    args = ap.parse_args(argv)
    return _run_command(args)


if __name__ == "__main__":
    sys.exit(main())
