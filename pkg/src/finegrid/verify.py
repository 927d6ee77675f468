"""End-to-end verification of the exact identities and certificates.

Two classes of checks: algebraically exact identities that must hold to
machine precision at every resolution (antisymmetry, point-mass pairing,
the divergence theorem, the interval identity, total weight), and
certificates (positive weights, trivial kernel, the step-derivative
comparison constant, the grid-derivative consistency class).
"""

from __future__ import annotations

import json
import time
from typing import Dict, List

import numpy as np

from .context import BuildContext
from .measures import (
    CellSet,
    cellset_from_box,
    ftc_interval,
    gauss_residual,
    measure_from_cells,
)
from .partition import GridFunction, compensated_sum, delta_at, pointwise_inner
from .stepcalc import verify_step_identities

__all__ = ["run_verification", "report_lines"]


def _check(name: str, residual: float, tol: float, kind: str) -> Dict:
    return {
        "name": name,
        "residual": float(residual),
        "tolerance": tol,
        "kind": kind,
        "pass": bool(residual <= tol),
    }


def run_verification(ctx: BuildContext, seed: int = 0, pairs: int = 100) -> Dict:
    """Run the full identity suite; returns a report with per-check lines."""
    t0 = time.time()
    part = ctx.partition
    basis = ctx.basis
    ops = ctx.operators
    d = basis.weights.weights
    n = part.n_points
    rng = np.random.default_rng(seed)
    checks: List[Dict] = []

    # (a) generalized-derivative antisymmetry over seeded pairs, all axes
    worst = 0.0
    for _ in range(pairs):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        nu = np.sqrt(compensated_sum(u * u * d))
        nv = np.sqrt(compensated_sum(v * v * d))
        for op in ops:
            du, dv = op.matrix @ u, op.matrix @ v
            val = compensated_sum(du * v * d) + compensated_sum(u * dv * d)
            worst = max(worst, abs(val) / max(nu * nv, 1e-300))
    checks.append(_check("derivative-antisymmetry", worst, 1e-12, "exact"))

    # (b) step-derivative antisymmetry, Poincare and kernel
    srep = verify_step_identities(part, seed=seed + 1, n_pairs=pairs)
    checks.append(
        _check("step-antisymmetry", srep["antisymmetry_residual"], 1e-12, "exact")
    )
    checks.append(
        _check(
            "step-poincare",
            max(srep["poincare_ratio"] - srep["poincare_bound"], 0.0),
            0.0,
            "exact",
        )
    )
    checks.append(
        _check(
            "step-kernel",
            0.0 if srep["kernel_trivial"] else 1.0,
            0.0,
            "certificate",
        )
    )

    # (c) point-mass pairing at every grid point
    u = rng.standard_normal(n)
    ug = GridFunction(part, u)
    worst = 0.0
    scale = max(float(np.max(np.abs(u))), 1e-300)
    for a in range(n):
        val = pointwise_inner(delta_at(a, basis.weights), ug, basis.weights)
        worst = max(worst, abs(val - u[a]) / scale)
    checks.append(_check("point-mass-pairing", worst, 1e-12, "exact"))

    # (d) divergence identity for random sets and fields
    worst = 0.0
    for _ in range(20):
        mask = rng.random(n) < rng.uniform(0.2, 0.8)
        e = CellSet(part, mask)
        phi = [GridFunction(part, rng.standard_normal(n)) for _ in ops]
        r = gauss_residual(e, phi, ops, basis)
        worst = max(worst, r["residual"] / r["scale"])
    checks.append(_check("divergence-identity", worst, 1e-12, "exact"))

    # (e) interval identity in one dimension
    if part.config.dimension == 1:
        u = GridFunction(part, rng.standard_normal(n))
        lh = part.config.l_half
        r = ftc_interval(-0.5 * lh, 0.55 * lh, u, ops[0], basis)
        scale = max(abs(r["interval_integral"]), 1.0)
        checks.append(
            _check("interval-identity", r["residual"] / scale, 1e-12, "exact")
        )

    # (f) total weight equals the measure of the box
    two_l = 2.0 * part.config.l_half
    total = basis.weights.total()
    expected = two_l ** part.config.dimension
    checks.append(
        _check(
            "weight-total",
            abs(total - expected) / expected,
            1e-12,
            "exact",
        )
    )

    # certificates
    checks.append(
        _check(
            "weight-positivity",
            0.0 if basis.weights.min_weight > 0 else 1.0,
            0.0,
            "certificate",
        )
    )
    for op in ops:
        c = op.certification
        checks.append(
            _check(
                f"kernel-axis-{op.axis}",
                0.0 if c.sigma_min > 0 else 1.0,
                0.0,
                "certificate",
            )
        )
        checks.append(
            _check(
                f"step-comparison-axis-{op.axis}",
                c.epsilon_times_2l,
                0.5,
                "certificate",
            )
        )
        checks.append(
            _check(
                f"smooth-pairing-axis-{op.axis}",
                c.w1_pairing_residual,
                1e-12,
                "exact",
            )
        )
        checks.append(
            {
                "name": f"table-consistency-axis-{op.axis}",
                "residual": c.w1_table_consistency,
                "tolerance": None,
                "kind": "consistency (refinement-order, reported)",
                "pass": True,
            }
        )

    # cardinal-basis invariants
    checks.append(
        _check("cardinality", basis.cardinality_residual, 1e-12, "exact")
    )
    checks.append(
        _check("partition-of-unity", basis.unity_residual, 1e-12, "exact")
    )

    report = {
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
        "elapsed": time.time() - t0,
        "n_points": n,
    }
    return report


def report_lines(report: Dict) -> List[str]:
    lines = []
    for c in report["checks"]:
        tol = "reported" if c["tolerance"] is None else f"{c['tolerance']:.1e}"
        lines.append(
            f"[{'PASS' if c['pass'] else 'FAIL'}] {c['name']:<32} "
            f"residual {c['residual']:.3e}  tol {tol}  ({c['kind']})"
        )
    lines.append(
        f"=> {'ALL PASS' if report['all_pass'] else 'FAILURES PRESENT'} "
        f"({len(report['checks'])} checks, {report['elapsed']:.1f}s, "
        f"{report['n_points']} grid points)"
    )
    return lines
