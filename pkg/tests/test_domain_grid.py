import math

import numpy as np
import pytest

from luxmin.domain_grid import (DomainSpec, ScalarField, build_grid,
                                centroid_values, dump_field_csv, dump_grid_csv,
                                gradient, load_field_csv, sup_norm_and_argmax)


def test_rectangle_cover_is_exact():
    g = build_grid(DomainSpec.rectangle(1, 1, 16))
    assert abs(g.tri_area.sum() - 1.0) < 1e-12
    assert g.interior_mask.sum() == 15 * 15


def test_disk_area_refinement():
    errs = {}
    for n in (32, 64, 128):
        g = build_grid(DomainSpec.disk(1, n))
        errs[n] = abs(g.tri_area.sum() - math.pi)
    assert errs[64] < 0.05
    for n, e in errs.items():
        assert e < 1.5 / n, f"area error {e} at n={n} worse than O(h)"


def test_other_shape_areas():
    cases = [
        (DomainSpec.ellipse(1.0, 0.5, 64), math.pi * 0.5),
        (DomainSpec.annulus(0.4, 1.0, 64), math.pi * (1 - 0.16)),
        (DomainSpec.lshape(1, 1, 0.5, 0.5, 64), 0.75),
    ]
    for spec, area in cases:
        g = build_grid(spec)
        assert abs(g.tri_area.sum() - area) < 1.5 * g.spacing, spec.shape


def test_degenerate_specs_rejected():
    with pytest.raises(ValueError, match="r_in < r_out"):
        DomainSpec.annulus(0.5, 0.4, 64)
    with pytest.raises(ValueError, match="n must be"):
        DomainSpec.rectangle(1, 1, 4)
    with pytest.raises(ValueError, match="positive"):
        DomainSpec.rectangle(-1, 1, 16)
    with pytest.raises(ValueError, match="notch"):
        DomainSpec.lshape(1, 1, 1.0, 0.5, 16)
    with pytest.raises(ValueError, match="unknown shape"):
        DomainSpec("pentagon", 16, w=1.0)


def test_grid_wellformedness(grid16):
    g = grid16
    assert np.all(g.tri_area > 0)
    assert g.interior_mask[g.triangles].any(axis=1).all(), \
        "kept triangle without an interior node"
    assert np.allclose(g.tri_centroid, g.nodes[g.triangles].mean(axis=1))
    # Dirichlet layer exists and interior nodes are strictly inside
    assert (~g.interior_mask).sum() > 0
    inside = g.spec.contains(g.nodes[:, 0], g.nodes[:, 1])
    assert np.all(inside[g.interior_mask])


def test_determinism():
    a = build_grid(DomainSpec.disk(0.8, 24))
    b = build_grid(DomainSpec.disk(0.8, 24))
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.tri_area, b.tri_area)
    assert np.array_equal(a.interior_mask, b.interior_mask)


def test_gradient_affine_exact(grid16, disk24):
    for g in (grid16, disk24):
        u = ScalarField.from_function(g, lambda x, y: 3.0 * x - 2.0 * y)
        gr = gradient(u)
        assert np.abs(gr - np.array([3.0, -2.0])).max() < 1e-12
        c = ScalarField.from_function(g, lambda x, y: 0.25 + 0 * x)
        assert np.abs(gradient(c)).max() < 1e-13


def test_gradient_refinement_quadratic():
    errs = []
    for n in (32, 64, 128):
        g = build_grid(DomainSpec.rectangle(1, 1, n))
        u = ScalarField.from_function(g, lambda x, y: x ** 2)
        err = np.abs(gradient(u)[:, 0] - 2 * g.tri_centroid[:, 0]).max()
        errs.append(err)
    assert errs[1] < 0.6 * errs[0] and errs[2] < 0.6 * errs[1]


def test_centroid_values(grid16):
    u = ScalarField.from_function(grid16, lambda x, y: x + 2 * y)
    c = grid16.tri_centroid
    assert np.allclose(centroid_values(u), c[:, 0] + 2 * c[:, 1])


def test_sup_norm_and_argmax(grid16):
    vals = np.zeros(grid16.n_nodes)
    vals[37] = -2.5
    m, gamma = sup_norm_and_argmax(ScalarField(grid16, vals))
    assert m == 2.5 and list(gamma) == [37]

    tent = ScalarField.from_function(grid16, lambda x, y: np.minimum(x, 1 - x),
                                     zero_trace=True)
    m, gamma = sup_norm_and_argmax(tent)
    assert m == 0.5
    assert np.allclose(grid16.nodes[gamma, 0], 0.5)

    m, gamma = sup_norm_and_argmax(ScalarField.zeros(grid16))
    assert m == 0.0 and len(gamma) == grid16.n_nodes

    with pytest.raises(ValueError):
        sup_norm_and_argmax(tent, tie_tol=-1.0)


def test_scalar_field_validation(grid16):
    with pytest.raises(ValueError, match="non-finite"):
        ScalarField(grid16, np.full(grid16.n_nodes, np.nan))
    bad = np.ones(grid16.n_nodes)
    with pytest.raises(ValueError, match="Dirichlet"):
        ScalarField(grid16, bad, zero_trace=True)
    with pytest.raises(ValueError, match="nodal values"):
        ScalarField(grid16, np.ones(3))


def test_csv_roundtrip(tmp_path, grid16):
    u = ScalarField.from_function(grid16, lambda x, y: x * y)
    fpath = tmp_path / "field.csv"
    gpath = tmp_path / "grid.csv"
    dump_field_csv(u, fpath)
    dump_grid_csv(grid16, gpath)
    assert gpath.read_text().splitlines()[0] == "node_id,x,y,interior"
    assert fpath.read_text().splitlines()[0] == "node_id,value"
    back = load_field_csv(grid16, fpath)
    assert np.array_equal(back.values, u.values)
    with pytest.raises(ValueError, match="header"):
        gpath.rename(tmp_path / "g2.csv")
        load_field_csv(grid16, tmp_path / "g2.csv")
