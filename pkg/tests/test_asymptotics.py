import numpy as np
import pytest

from luxmin.asymptotics import direct_mu, sweep_j, sweep_l
from luxmin.distance_ridge import distance_field
from luxmin.domain_grid import DomainSpec, build_grid, gradient
from luxmin.exponents import sample_exponent
from luxmin.modular_norms import luxemburg_norm
from luxmin.rayleigh_solver import SolverOptions, _gradient_side


@pytest.fixture(scope="module")
def square32():
    g = build_grid(DomainSpec.rectangle(1, 1, 32))
    return g, sample_exponent("2", g), sample_exponent("2", g)


@pytest.fixture(scope="module")
def mu4(square32):
    g, p, q = square32
    return direct_mu(4, p)


def test_direct_mu_basics(square32, mu4):
    g, p, _ = square32
    assert mu4.converged
    assert mu4.dirac_residual < 1e-2
    assert len(mu4.gamma_nodes) == 1
    assert np.allclose(g.nodes[mu4.x0], [0.5, 0.5])
    w = mu4.w.values
    assert w.max() == pytest.approx(1.0)
    assert w.min() >= -1e-8
    # admissible competitor built from the distance field bounds mu from above
    d = distance_field(g)
    pl = sample_exponent(p.ast, g, 4)
    gm = np.hypot(*gradient(d.d).T)
    assert mu4.mu <= luxemburg_norm(gm, pl) / d.d_max + 1e-12


def test_direct_mu_eta_w_identity(square32, mu4):
    # pairing the balance equation with the extremal itself returns mu
    g, p, _ = square32
    pl = sample_exponent(p.ast, g, 4)
    K, S_K, A, flux = _gradient_side(mu4.w.values, pl)
    lhs = float(np.sum(flux * gradient(mu4.w)))
    mu_rec = lhs / (S_K * np.abs(mu4.w.values).max())
    assert mu_rec == pytest.approx(mu4.mu, rel=1e-6)


def test_direct_mu_validation(square32):
    g, p, _ = square32
    with pytest.raises(ValueError, match="at least 2"):
        direct_mu(1, p)
    with pytest.raises(ValueError, match="cap"):
        direct_mu(200, p)
    scaled = sample_exponent(p.ast, g, 2)
    with pytest.raises(ValueError, match="unscaled"):
        direct_mu(4, scaled)


def test_sweep_j_rows_and_bounds(square32):
    g, p, q = square32
    rep = sweep_j(4, p, q, [1, 2, 4, 8, 16], SolverOptions())
    assert rep.limit_kind == "mu_l"
    assert [r.index for r in rep.rows] == [1, 2, 4, 8, 16]
    for row in rep.rows:
        assert row.converged
        assert row.lower_bound <= row.eigenvalue_estimate * (1 + 1e-12)
        assert row.eigenvalue_estimate <= row.upper_bound * (1 + 1e-12)
        assert row.gap_to_limit == pytest.approx(
            abs(row.eigenvalue_estimate - rep.limit_value), abs=1e-15)
    assert rep.rows[-1].gap_to_limit < rep.rows[0].gap_to_limit
    # estimates decrease toward the sup-norm limit as j grows
    lams = [r.eigenvalue_estimate for r in rep.rows]
    assert lams[0] > lams[-1] > rep.limit_value


def test_sweep_j_single_row(square32):
    g, p, q = square32
    rep = sweep_j(4, p, q, [1], SolverOptions(max_iter=2000))
    assert len(rep.rows) == 1
    assert np.isfinite(rep.rows[0].gap_to_limit)


def test_sweep_j_validation(square32):
    g, p, q = square32
    with pytest.raises(ValueError, match="increasing"):
        sweep_j(4, p, q, [4, 2], SolverOptions())
    with pytest.raises(ValueError, match="increasing"):
        sweep_j(4, p, q, [], SolverOptions())


def test_sweep_l_disk():
    g = build_grid(DomainSpec.disk(1, 32))
    p = sample_exponent("2 + (x^2+y^2)/2", g)
    rep = sweep_l(p, [4, 8, 16], SolverOptions())
    assert rep.limit_kind == "lambda_infinity"
    assert rep.limit_value == 1.0
    gaps = [r.gap_to_limit for r in rep.rows]
    assert gaps[-1] < gaps[0]
    for row in rep.rows:
        assert row.converged
        assert row.gamma_singleton
        assert row.sup_norm_of_extremal == 1.0
        assert np.hypot(row.argmax_x, row.argmax_y) <= 2 * g.spacing
        assert row.bound_violation <= row.sup_dist_to_scaled_distance + 1e-15
    assert rep.rows[-1].sup_dist_to_scaled_distance < 0.1
    assert np.all(rep.final_field.values >= -1e-12)


def test_gradient_norm_monotone_in_scale(square32, mu4):
    # on any fixed field the scaled-exponent gradient norms are ordered
    g, p, _ = square32
    gm = np.hypot(*gradient(mu4.w).T)
    m_min = int(np.ceil(p.alpha * np.e)) + 1
    norms = [luxemburg_norm(gm, sample_exponent(p.ast, g, m))
             for m in range(m_min, 12)]
    assert np.all(np.diff(norms) >= -1e-10)


def test_sweep_l_validation(square32):
    g, p, _ = square32
    with pytest.raises(ValueError, match="increasing"):
        sweep_l(p, [8, 4], SolverOptions())
    with pytest.raises(ValueError, match=">= 2"):
        sweep_l(p, [1, 2], SolverOptions())
