"""Regularity ladder, projections and distribution embedding."""

import numpy as np
import pytest

from finegrid import GridFunction, PartitionError, restrict
from finegrid.partition import compensated_sum
from finegrid.regular import (
    compute_ladder,
    density_oracle,
    dirac_derivative_oracle,
    dirac_oracle,
    ds_check,
    embed_distribution,
    project_regular,
)


@pytest.fixture(scope="module")
def ladder(calc_1d):
    return compute_ladder(calc_1d.basis, calc_1d.ops, max_level=6)


def test_ladder_dims_decrease(ladder):
    dims = ladder["dims"]
    assert all(dims[i] >= dims[i + 1] for i in range(len(dims) - 1))
    assert dims[0] > 0
    assert ladder["top"].dim > 0


def test_level_orthonormal_and_nested(ladder, calc_1d):
    d = calc_1d.d
    for lv in ladder["levels"]:
        if lv.dim == 0:
            continue
        assert lv.orthonormality_residual() <= 1e-11
    # each level is contained in the previous one
    for prev, nxt in zip(ladder["levels"], ladder["levels"][1:]):
        if nxt.dim == 0:
            continue
        proj = prev.tables @ (prev.tables.T @ (d[:, None] * nxt.tables))
        assert np.max(np.abs(proj - nxt.tables)) <= 1e-10


def test_derivative_stays_in_previous_level(ladder, calc_1d):
    d = calc_1d.d
    lv1 = ladder["levels"][1]
    lv0 = ladder["levels"][0]
    if lv1.dim == 0:
        pytest.skip("ladder collapsed at level 1")
    for op in calc_1d.ops:
        dv = op.matrix @ lv1.tables
        resid = dv - lv0.tables @ (lv0.tables.T @ (d[:, None] * dv))
        scale = max(np.max(np.abs(dv)), 1.0)
        assert np.max(np.abs(resid)) <= 1e-9 * scale


def test_projection_pythagoras(ladder, calc_1d):
    part = calc_1d.partition
    rng = np.random.default_rng(12)
    u = GridFunction(part, rng.standard_normal(part.n_points))
    top = ladder["top"]
    reg, sing = project_regular(u, top)
    assert np.allclose(reg.values + sing.values, u.values, atol=1e-12)
    d = calc_1d.d
    n2 = lambda g: compensated_sum(g.values * g.values * d)
    assert n2(u) == pytest.approx(n2(reg) + n2(sing), rel=1e-12)
    # the singular part is grid-orthogonal to the level
    pair = top.tables.T @ (d * sing.values)
    assert np.max(np.abs(pair)) <= 1e-11


def test_projection_idempotent_and_composed(ladder, calc_1d):
    part = calc_1d.partition
    rng = np.random.default_rng(13)
    u = GridFunction(part, rng.standard_normal(part.n_points))
    lv0, lv1 = ladder["levels"][0], ladder["levels"][1]
    p1 = lv1.project(u)
    assert np.allclose(lv1.project(p1).values, p1.values, atol=1e-11)
    # projecting to the deeper level then the shallower one keeps the deeper
    p01 = lv0.project(lv1.project(u))
    assert np.allclose(p01.values, p1.values, atol=1e-10)


def test_point_mass_has_singular_part(ladder, calc_1d):
    from finegrid.partition import delta_at

    dlt = delta_at(calc_1d.partition.n_points // 2, calc_1d.weights)
    top = ladder["top"]
    reg, sing = project_regular(dlt, top)
    d = calc_1d.d
    assert compensated_sum(sing.values**2 * d) > 0.1 * compensated_sum(
        dlt.values**2 * d
    )


def test_embed_point_oracle(ladder, calc_1d):
    top = ladder["top"]
    t = dirac_oracle([0.3])
    emb = embed_distribution(t, top)
    rep = ds_check(emb, t, top)
    assert rep["class"] == "DS"
    assert rep["residual"] <= 1e-10


def test_embed_point_derivative_oracle(ladder, calc_1d):
    top = ladder["top"]
    t = dirac_derivative_oracle([0.3])
    emb = embed_distribution(t, top)
    rep = ds_check(emb, t, top)
    assert rep["class"] == "DS"


def test_embed_density_oracle(ladder, calc_1d):
    top = ladder["top"]
    quad = calc_1d.tower.w1.quadrature
    t = density_oracle("gauss", lambda x: float(np.exp(-x * x)), quad)
    emb = embed_distribution(t, top)
    rep = ds_check(emb, t, top)
    assert rep["class"] == "DS"


def test_embed_heaviside_density(ladder, calc_1d):
    top = ladder["top"]
    quad = calc_1d.tower.w1.quadrature
    t = density_oracle(
        "heaviside", lambda x: 1.0 if x > 0 else 0.0, quad, breakpoints=[[0.0]]
    )
    emb = embed_distribution(t, top)
    rep = ds_check(emb, t, top)
    assert rep["class"] == "DS"


def test_perturbation_invisible_to_tests(ladder, calc_1d):
    # adding a component orthogonal to the level does not change the class
    part = calc_1d.partition
    top = ladder["top"]
    t = dirac_oracle([0.3])
    emb = embed_distribution(t, top)
    rng = np.random.default_rng(4)
    noise = rng.standard_normal(part.n_points)
    _, orth = project_regular(GridFunction(part, noise), top)
    perturbed = GridFunction(part, emb.values + 10.0 * orth.values)
    rep = ds_check(perturbed, t, top)
    assert rep["class"] == "DS"


def test_embed_rejects_empty_level(calc_1d, ladder):
    from finegrid.regular import Subspace

    empty = Subspace(
        calc_1d.basis,
        99,
        np.zeros((calc_1d.partition.n_points, 0)),
        np.zeros((calc_1d.tower.w0.dim, 0)),
        1.0,
    )
    with pytest.raises(PartitionError):
        embed_distribution(dirac_oracle([0.0]), empty)


def test_smooth_table_near_top_level(ladder, calc_1d):
    part = calc_1d.partition
    f = restrict(
        lambda x: np.exp(-4 * x * x) * (1.44 - x * x) ** 2 if abs(x) < 1.2 else 0.0,
        part,
    )
    top = ladder["top"]
    reg, sing = project_regular(f, top)
    d = calc_1d.d
    rel = np.sqrt(
        compensated_sum(sing.values**2 * d) / compensated_sum(f.values**2 * d)
    )
    assert rel < 0.05


def test_derivative_compatibility_measured(ladder, calc_1d):
    # embedding the derivative oracle and differentiating the embedding
    # agree to the operator's consistency scale (not machine precision)
    top = ladder["top"]
    t = dirac_oracle([0.3])
    td = dirac_derivative_oracle([0.3])
    emb = embed_distribution(t, top)
    embd = embed_distribution(td, top)
    d = calc_1d.d
    dt = calc_1d.ops[0].matrix @ emb.values
    num = np.sqrt(compensated_sum((dt - embd.values) ** 2 * d))
    den = np.sqrt(compensated_sum(dt**2 * d))
    assert num <= 0.75 * den


def test_ladder_json_report(ladder):
    import json

    from finegrid.regular import ladder_report_json

    doc = json.loads(ladder_report_json(ladder))
    assert doc["dims"][0] > 0
    assert doc["levels"][0]["orthonormality_residual"] <= 1e-11
    assert "stabilized" in doc
