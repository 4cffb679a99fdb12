import math

import numpy as np
import pytest

from conftest import smooth_random_field
from luxmin.domain_grid import DomainSpec, ScalarField, build_grid, gradient
from luxmin.errors import ZeroField
from luxmin.exponents import sample_exponent
from luxmin.modular_norms import luxemburg_norm
from luxmin.rayleigh_solver import (SolverOptions, el_residual,
                                    evaluate_quotient, gateaux_dK, gateaux_dk,
                                    minimize_quotient, probe_nodes)

PI_SQRT2 = math.pi * math.sqrt(2)


@pytest.fixture(scope="module")
def square64():
    g = build_grid(DomainSpec.rectangle(1, 1, 64))
    return g, sample_exponent("2", g), sample_exponent("2", g)


@pytest.fixture(scope="module")
def square24_pq():
    g = build_grid(DomainSpec.rectangle(1, 1, 24))
    return g, sample_exponent("2 + 0.5*x", g), sample_exponent("2", g)


def sin_mode(g):
    return ScalarField.from_function(
        g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y), zero_trace=True)


def test_quotient_matches_classical_rayleigh(square64):
    g, p, q = square64
    u = sin_mode(g)
    ev = evaluate_quotient(u, p, q)
    # for p = q = 2 the weights cancel and the quotient is |grad u|_2 / |u|_2
    g2 = np.hypot(*gradient(u).T)
    cent = u.values[g.triangles].mean(axis=1)
    classical = math.sqrt(np.sum(g.tri_area * g2 ** 2) / np.sum(g.tri_area * cent ** 2))
    assert ev.quotient == pytest.approx(classical, rel=1e-10)
    assert ev.quotient == pytest.approx(PI_SQRT2, rel=0.02)


def test_quotient_homogeneity_and_structure(square24_pq):
    g, p, q = square24_pq
    u = sin_mode(g)
    ev = evaluate_quotient(u, p, q)
    ev3 = evaluate_quotient(u.copy_with(3.0 * u.values), p, q)
    assert ev3.quotient == pytest.approx(ev.quotient, rel=1e-12)
    assert ev.quotient == pytest.approx(ev.K / ev.k, rel=1e-14)
    assert ev.S > 0 and np.isfinite(ev.S)
    # gradient direction is scale invariant (scales like 1/t)
    cos = np.dot(ev.grad_dual, ev3.grad_dual) / (
        np.linalg.norm(ev.grad_dual) * np.linalg.norm(ev3.grad_dual))
    assert cos == pytest.approx(1.0, abs=1e-10)
    assert np.all(ev.grad_dual[~g.interior_mask] == 0.0)


def test_quotient_rejects_bad_fields(square24_pq):
    g, p, q = square24_pq
    with pytest.raises(ZeroField):
        evaluate_quotient(ScalarField.zeros(g), p, q)
    with pytest.raises(ValueError, match="zero-trace"):
        evaluate_quotient(ScalarField.from_function(g, lambda x, y: 1 + 0 * x), p, q)


def test_gateaux_eta_equals_u(square24_pq):
    g, p, q = square24_pq
    u = sin_mode(g)
    ev = evaluate_quotient(u, p, q)
    assert gateaux_dK(u, u, p) == pytest.approx(ev.K, rel=1e-12)
    assert gateaux_dk(u, u, q) == pytest.approx(ev.k, rel=1e-12)


def test_gateaux_matches_central_differences(square24_pq):
    g, p, q = square24_pq
    rng = np.random.default_rng(17)
    eps = 1e-6
    for _ in range(50):
        u = smooth_random_field(g, rng)
        eta = smooth_random_field(g, rng)
        dK = gateaux_dK(u, eta, p)
        dk = gateaux_dk(u, eta, q)
        Kp = evaluate_quotient(u.copy_with(u.values + eps * eta.values), p, q)
        Km = evaluate_quotient(u.copy_with(u.values - eps * eta.values), p, q)
        fdK = (Kp.K - Km.K) / (2 * eps)
        fdk = (Kp.k - Km.k) / (2 * eps)
        assert abs(dK - fdK) < 1e-5 * (1 + abs(dK))
        assert abs(dk - fdk) < 1e-5 * (1 + abs(dk))


def test_derivative_bound_inequality(square24_pq):
    # |dK(u; v)| <= K(v) and |dk(u; v)| <= k(v)
    g, p, q = square24_pq
    rng = np.random.default_rng(23)
    for _ in range(100):
        u = smooth_random_field(g, rng)
        v = smooth_random_field(g, rng)
        Kv = evaluate_quotient(v, p, q)
        assert abs(gateaux_dK(u, v, p)) <= Kv.K * (1 + 1e-10)
        assert abs(gateaux_dk(u, v, q)) <= Kv.k * (1 + 1e-10)


def test_minimize_classical_eigenvalue():
    g = build_grid(DomainSpec.rectangle(1, 1, 32))
    p = sample_exponent("2", g)
    q = sample_exponent("2", g)
    res = minimize_quotient(p, q)
    assert res.converged
    assert res.lambda_ == pytest.approx(PI_SQRT2, rel=0.01)
    assert res.el_residual <= 1e-3
    # canonical representative: nonnegative, normalized, peak at the center
    assert res.minimizer.values.min() >= -1e-8
    ev = evaluate_quotient(res.minimizer, p, q)
    assert ev.k == pytest.approx(1.0, rel=1e-9)
    assert np.hypot(*(g.nodes[res.argmax_node] - 0.5)) < 2 * g.spacing
    # accepted steps never increase the quotient
    assert np.all(np.diff(res.trace) <= 1e-9 * res.trace[:-1])


def test_minimize_variable_exponents_small(square24_pq):
    g, p, q = square24_pq
    res = minimize_quotient(p, q, SolverOptions(max_iter=4000))
    assert res.converged and res.lambda_ > 0
    assert res.el_residual <= 1e-3
    assert res.minimizer.values.min() >= -1e-8
    # classical-variant quotient of the same minimizer brackets the weighted one
    gm = np.hypot(*gradient(res.minimizer).T)
    cent = res.minimizer.values[g.triangles].mean(axis=1)
    lam_tilde = (luxemburg_norm(gm, p, "classical")
                 / luxemburg_norm(cent, q, "classical"))
    assert lam_tilde / p.p_plus <= res.lambda_ * (1 + 1e-10)
    assert res.lambda_ <= q.p_plus * lam_tilde * (1 + 1e-10)


def test_minimize_constant_exponent_cross_check():
    # at constant p, q the weighted quotient equals (q^{1/q}/p^{1/p}) times
    # the plain Lebesgue-norm quotient; both sides from the same minimizer,
    # the right side evaluated by direct power sums without any root-finding
    g = build_grid(DomainSpec.rectangle(1, 1, 24))
    p = sample_exponent("3", g)
    q = sample_exponent("2", g)
    res = minimize_quotient(p, q, SolverOptions(max_iter=4000))
    gm = np.hypot(*gradient(res.minimizer).T)
    cent = res.minimizer.values[g.triangles].mean(axis=1)
    lp = float(np.sum(g.tri_area * gm ** 3)) ** (1 / 3)
    lq = float(np.sum(g.tri_area * cent ** 2)) ** (1 / 2)
    predicted = (2 ** (1 / 2) / 3 ** (1 / 3)) * (lp / lq)
    assert res.lambda_ == pytest.approx(predicted, rel=1e-6)


def test_minimize_restarts_reproducible(square24_pq):
    g, p, q = square24_pq
    opts = SolverOptions(max_iter=1500, restarts=2, seed=42)
    a = minimize_quotient(p, q, opts)
    b = minimize_quotient(p, q, opts)
    assert len(a.restart_lambdas) == 3
    assert a.restart_lambdas == b.restart_lambdas
    assert a.lambda_ == min(a.restart_lambdas)


def test_minimize_iteration_cap_flagged(square24_pq):
    g, p, q = square24_pq
    res = minimize_quotient(p, q, SolverOptions(max_iter=3))
    assert not res.converged
    assert res.iterations == 3
    assert np.isfinite(res.lambda_)


def test_el_residual_probe_structure(square24_pq):
    g, p, q = square24_pq
    probes = probe_nodes(g, include=g.interior_indices[5])
    assert len(probes) <= 32
    assert g.interior_indices[5] in probes
    assert np.all(g.interior_mask[probes])
    u = sin_mode(g)
    r = el_residual(u, p, q, probes)
    assert np.isfinite(r) and r >= 0
