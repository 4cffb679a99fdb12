"""Rayleigh quotient K(u)/k(u) for variable exponents: evaluation, Gateaux
derivatives, and minimization by normalized descent.

K is the weighted Luxemburg norm of |grad u|, k the one of u.  The quotient
is 0-homogeneous, so plain steepest descent on nodal values combined with
renormalization to k(u) = 1 after every accepted step is well posed.  Steps
are guessed spectrally (Barzilai-Borwein) and safeguarded by a backtracking
Armijo line search, which keeps the iteration monotone.

Stationarity is monitored through the discrete Euler-Lagrange balance

    A_i = Lambda * S(u) * B_i,
    A_i = sum_T area |grad u / K|^{p-2} (grad u / K) . grad phi_i,
    B_i = sum_T area |u / k|^{q-2} (u / k) phi_i(centroid),

probed on 32 hat functions; the reported el_residual is the worst mismatch
relative to the largest probe magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain_grid import ScalarField, centroid_values, gradient
from .errors import ZeroField
from .exponents import ExponentField
from .modular_norms import _logsumexp, luxemburg_norm

N_PROBES = 32
ARMIJO_C = 1e-4
ARMIJO_FACTOR = 0.5


@dataclass
class QuotientEval:
    K: float
    k: float
    quotient: float
    S: float
    grad_dual: np.ndarray  # (n_nodes,), zero on Dirichlet nodes


@dataclass
class MinimizeResult:
    minimizer: ScalarField
    lambda_: float
    iterations: int
    el_residual: float
    argmax_node: int
    trace: np.ndarray
    converged: bool
    restart_lambdas: list = field(default_factory=list)


@dataclass
class SolverOptions:
    max_iter: int = 20000
    tol: float = 1e-6          # relative quotient decrease over `window` iterations
    el_tol: float = 1e-3       # Euler-Lagrange residual required at the stop
    window: int = 10
    init: object = "distance"  # "distance" | "random" | ScalarField
    restarts: int = 0
    seed: int = 0


# -- assembly ---------------------------------------------------------------

def _check_admissible_field(u: ScalarField):
    if np.any(u.values[~u.grid.interior_mask] != 0.0):
        raise ValueError("quotient machinery requires zero-trace fields "
                         "(nonzero values found on Dirichlet nodes)")


def _gradient_side(values, p: ExponentField):
    """K, S_K and the assembled vector A over all nodes."""
    grid = p.grid
    hats = grid.hat_gradients()
    grads = np.einsum("ti,tid->td", values[grid.triangles], hats)
    mag = np.hypot(grads[:, 0], grads[:, 1])
    K = luxemburg_norm(mag, p)
    if K == 0.0:
        raise ZeroField("field has vanishing gradient everywhere")
    log_area = np.log(grid.tri_area)
    with np.errstate(divide="ignore"):
        lr = np.log(mag) - np.log(K)
    S_K = np.exp(_logsumexp(log_area + p.samples * lr))
    with np.errstate(over="ignore"):
        w_flux = np.exp(log_area + (p.samples - 1.0) * lr)
    unit = np.zeros_like(grads)
    nz = mag > 0
    unit[nz] = grads[nz] / mag[nz, None]
    flux = w_flux[:, None] * unit
    contrib = np.einsum("td,tid->ti", flux, hats)
    A = np.bincount(grid.triangles.ravel(), weights=contrib.ravel(),
                    minlength=grid.n_nodes)
    return K, S_K, A, flux


def _grad_diag(values, p: ExponentField, K, S_K):
    """Diagonal curvature scale of K: sum_T area (p-1) r^{p-2} |grad phi_i|^2 / (K S_K).

    Zero-gradient triangles with p < 2 would blow up; they contribute 0
    instead (descent never differentiates through them).
    """
    grid = p.grid
    hats = grid.hat_gradients()
    grads = np.einsum("ti,tid->td", values[grid.triangles], hats)
    mag = np.hypot(grads[:, 0], grads[:, 1])
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lr = np.log(mag) - np.log(K)
        w2 = np.exp(np.log(grid.tri_area) + (p.samples - 2.0) * lr) * (p.samples - 1.0)
    w2[mag == 0.0] = 0.0
    hat_sq = (hats ** 2).sum(axis=2)
    D = np.bincount(grid.triangles.ravel(), weights=(w2[:, None] * hat_sq).ravel(),
                    minlength=grid.n_nodes)
    return D / (K * S_K)


def _value_diag(values, q: ExponentField, k, S_k):
    """Diagonal curvature scale of k (centroid quadrature, hats enter as 1/3)."""
    grid = q.grid
    cent = values[grid.triangles].mean(axis=1)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lu = np.log(np.abs(cent)) - np.log(k)
        w2 = np.exp(np.log(grid.tri_area) + (q.samples - 2.0) * lu) * (q.samples - 1.0)
    w2[cent == 0.0] = 0.0
    D = np.bincount(grid.triangles.ravel(),
                    weights=np.repeat(w2[:, None] / 9.0, 3, axis=1).ravel(),
                    minlength=grid.n_nodes)
    return D / (k * S_k)


def _value_side(values, q: ExponentField):
    """k, S_k and the assembled vector B over all nodes."""
    grid = q.grid
    cent = values[grid.triangles].mean(axis=1)
    k = luxemburg_norm(cent, q)
    if k == 0.0:
        raise ZeroField("field vanishes identically")
    log_area = np.log(grid.tri_area)
    with np.errstate(divide="ignore"):
        lu = np.log(np.abs(cent)) - np.log(k)
    S_k = np.exp(_logsumexp(log_area + q.samples * lu))
    with np.errstate(over="ignore"):
        w = np.exp(log_area + (q.samples - 1.0) * lu) * np.sign(cent)
    contrib = np.repeat(w[:, None] / 3.0, 3, axis=1)
    B = np.bincount(grid.triangles.ravel(), weights=contrib.ravel(),
                    minlength=grid.n_nodes)
    return k, S_k, B, w


# -- public evaluation -------------------------------------------------------

def evaluate_quotient(u: ScalarField, p: ExponentField, q: ExponentField) -> QuotientEval:
    """K, k, their ratio, S(u), and the nodal gradient of the quotient."""
    if p.grid is not u.grid or q.grid is not u.grid:
        raise ValueError("field and exponents must share one grid")
    _check_admissible_field(u)
    K, S_K, A, _ = _gradient_side(u.values, p)
    k, S_k, B, _ = _value_side(u.values, q)
    quotient = K / k
    S = S_K / S_k
    grad_dual = quotient * (A / (S_K * K) - B / (S_k * k))
    grad_dual[~u.grid.interior_mask] = 0.0
    return QuotientEval(K=K, k=k, quotient=quotient, S=S, grad_dual=grad_dual)


def gateaux_dK(u: ScalarField, eta: ScalarField, p: ExponentField) -> float:
    """Directional derivative of K at u in direction eta."""
    _, S_K, _, flux = _gradient_side(u.values, p)
    eta_grad = gradient(eta)
    return float(np.sum(flux * eta_grad)) / S_K


def gateaux_dk(u: ScalarField, eta: ScalarField, q: ExponentField) -> float:
    """Directional derivative of k at u in direction eta."""
    _, S_k, _, w = _value_side(u.values, q)
    return float(np.sum(w * centroid_values(eta))) / S_k


# -- Euler-Lagrange residual ---------------------------------------------------

def probe_nodes(grid, include=None, count=N_PROBES):
    """Deterministic 2-D spread of interior nodes used as residual probes.

    Targets on a coarse lattice over the bounding box are snapped to the
    nearest interior node; flat index striding would bunch the probes into a
    single lattice column, where every term of the balance underflows.
    """
    cache = getattr(grid, "_probe_cache", None)
    if cache is None or cache[0] != count:
        interior = grid.interior_indices
        if len(interior) <= count:
            spread = interior
        else:
            pts = grid.nodes[interior]
            x0, y0 = pts.min(axis=0)
            x1, y1 = pts.max(axis=0)
            m = int(np.ceil(np.sqrt(count)))
            cx = x0 + (np.arange(m) + 0.5) * (x1 - x0) / m
            cy = y0 + (np.arange(m) + 0.5) * (y1 - y0) / m
            targets = np.stack(np.meshgrid(cx, cy), axis=-1).reshape(-1, 2)
            d2 = ((pts[None, :, :] - targets[:, None, :]) ** 2).sum(axis=2)
            spread = interior[np.unique(d2.argmin(axis=1))][:count]
        grid._probe_cache = cache = (count, spread)
    probes = list(cache[1])
    if include is not None and include not in probes:
        probes[0] = include
    return np.unique(np.array(probes, dtype=int))


def el_residual(u: ScalarField, p: ExponentField, q: ExponentField,
                probes=None) -> float:
    """Worst relative Euler-Lagrange mismatch over the probe hats."""
    if probes is None:
        probes = probe_nodes(u.grid)
    K, S_K, A, _ = _gradient_side(u.values, p)
    k, S_k, B, _ = _value_side(u.values, q)
    lam = K / k
    S = S_K / S_k
    lhs = A[probes]
    rhs = lam * S * B[probes]
    denom = max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300)
    return float(np.abs(lhs - rhs).max() / denom)


# -- minimization ---------------------------------------------------------------

def _initial_values(grid, opts, restart_index):
    from .distance_ridge import distance_field  # local import avoids a cycle

    if restart_index > 0 or opts.init == "random":
        rng = np.random.default_rng(int(opts.seed) + restart_index)
        vals = np.zeros(grid.n_nodes)
        vals[grid.interior_mask] = rng.standard_normal(int(grid.interior_mask.sum()))
        return vals
    if isinstance(opts.init, ScalarField):
        return opts.init.values.copy()
    if opts.init == "distance":
        return distance_field(grid).d.values.copy()
    raise ValueError(f"unknown init {opts.init!r}")


def _refine_quotient_lbfgs(values, p, q, opts, probes, budget, trace):
    """Quasi-Newton finisher for exponents where gradient steps stall.

    Chunks of L-BFGS on the quotient itself (0-homogeneous: the ray through
    the iterate is flat, which the curvature pairs tolerate), renormalized
    between chunks.  Monotone: chunk-final quotients extend the trace.
    """
    from scipy.optimize import minimize as scipy_minimize

    grid = p.grid
    free = grid.interior_indices
    evals = 0
    el = np.inf
    el_prev = np.inf
    converged = False
    q_prev = np.inf
    for _ in range(40):
        _, k0 = _quotient_value(values, p, q)
        values = values / k0

        def objective(vf):
            nonlocal evals
            evals += 1
            full = np.zeros(grid.n_nodes)
            full[free] = vf
            K, S_K, A, _ = _gradient_side(full, p)
            k, S_k, B, _ = _value_side(full, q)
            lam = K / k
            g = lam * (A / (S_K * K) - B / (S_k * k))
            return lam, g[free]

        chunk = int(min(150, max(1, budget - evals)))
        res = scipy_minimize(objective, values[free], jac=True, method="L-BFGS-B",
                             options={"maxiter": chunk, "maxfun": 4 * chunk,
                                      "ftol": 0.0, "gtol": 0.0})
        values = np.zeros(grid.n_nodes)
        values[free] = res.x

        K, S_K, A, _ = _gradient_side(values, p)
        k, S_k, B, _ = _value_side(values, q)
        lam = K / k
        S = S_K / S_k
        trace.append(lam)
        lhs, rhs = A[probes], lam * S * B[probes]
        el = float(np.abs(lhs - rhs).max()
                   / max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300))
        flat = q_prev - lam <= opts.tol * abs(lam)
        q_prev = lam
        if el <= opts.el_tol and flat:
            converged = True
            break
        improving = el < 0.99 * el_prev
        el_prev = el
        if evals >= budget or (flat and res.status != 1 and not improving):
            break
    return values, evals, el, converged


def minimize_quotient(p: ExponentField, q: ExponentField,
                      opts: SolverOptions | None = None) -> MinimizeResult:
    """Minimize K/k over zero-trace fields; returns the best run over restarts.

    The result carries converged=False when the iteration cap was reached
    before the two stopping signals (flat quotient and small el_residual)
    were met; the fields are still the best iterate found.
    """
    if p.grid is not q.grid:
        raise ValueError("p and q must be sampled on the same grid")
    opts = opts or SolverOptions()
    runs = []
    for restart in range(1 + max(0, opts.restarts)):
        u0 = _initial_values(p.grid, opts, restart)
        runs.append(_descend_quotient(u0, p, q, opts))
    best = min(runs, key=lambda r: r.lambda_)
    best.restart_lambdas = [r.lambda_ for r in runs]
    return best


def grad_norm(values, p: ExponentField) -> float:
    """K alone (no assembly): the weighted Luxemburg norm of |grad u|."""
    grid = p.grid
    grads = np.einsum("ti,tid->td", values[grid.triangles], grid.hat_gradients())
    return luxemburg_norm(np.hypot(grads[:, 0], grads[:, 1]), p)


def _quotient_value(values, p, q):
    K = grad_norm(values, p)
    k = luxemburg_norm(values[p.grid.triangles].mean(axis=1), q)
    return K, k


def bb_step_guess(prev_step, y, t_prev):
    """Barzilai-Borwein step, clamped to a decade around the last step."""
    sy = float(prev_step @ y)
    t = float(prev_step @ prev_step) / sy if sy > 0 else 2.0 * t_prev
    return min(max(t, 0.1 * t_prev), 10.0 * t_prev)


def _descend_quotient(values, p, q, opts):
    grid = p.grid
    interior = grid.interior_mask
    values = values.copy()
    values[~interior] = 0.0

    K0, k0 = _quotient_value(values, p, q)
    if k0 == 0.0 or K0 == 0.0:
        raise ZeroField("initial field is zero (or gradient-free)")
    values /= k0

    trace = []
    el_hist = []
    prev_g = None
    prev_step = None
    t = None
    el = np.inf
    it = 0
    converged = False
    stalled = False
    probes = probe_nodes(grid)
    for it in range(1, opts.max_iter + 1):
        K, S_K, A, _ = _gradient_side(values, p)
        k, S_k, B, _ = _value_side(values, q)
        lam = K / k
        S = S_K / S_k
        g = lam * (A / (S_K * K) - B / (S_k * k))
        g[~interior] = 0.0
        trace.append(lam)

        lhs, rhs = A[probes], lam * S * B[probes]
        el = float(np.abs(lhs - rhs).max()
                   / max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300))
        el_hist.append(min(el, el_hist[-1]) if el_hist else el)  # running best

        if len(trace) > opts.window:
            flat = trace[-opts.window - 1] - trace[-1] <= opts.tol * abs(trace[-1])
            if flat and el <= opts.el_tol:
                converged = True
                break
            # stall: quotient flat for a long stretch and no new best
            # balance residual found either
            span = 20 * opts.window
            if len(trace) > span:
                long_flat = (trace[-span - 1] - trace[-1]
                             <= opts.tol * abs(trace[-1]))
                if long_flat and el_hist[-1] > 0.99 * el_hist[-span - 1]:
                    stalled = True
                    break

        # Jacobi-preconditioned direction: nodal curvature of K/k
        D = _grad_diag(values, p, K, S_K) / k + lam / k * _value_diag(values, q, k, S_k)
        D = np.maximum(D, 1e-12 * D.max() + 1e-300)
        d = g / D
        gd = float(g @ d)
        if gd <= 0.0:
            converged = el <= opts.el_tol
            break

        # spectral step guess, then monotone backtracking on the true quotient
        if prev_g is not None and prev_step is not None:
            t = bb_step_guess(prev_step, d - prev_g, t)
        else:
            t = 1.0
        accepted = False
        for _ in range(60):
            trial = values - t * d
            K_t, k_t = _quotient_value(trial, p, q)
            if k_t > 0 and K_t / k_t <= lam - ARMIJO_C * t * gd:
                accepted = True
                break
            t *= ARMIJO_FACTOR
        if not accepted:
            stalled = el > opts.el_tol
            break
        prev_g = d
        prev_step = -t * d
        values = trial / k_t

    if stalled and not converged and it < opts.max_iter:
        values, extra, el, converged = _refine_quotient_lbfgs(
            values, p, q, opts, probes, opts.max_iter - it, trace)
        it += extra

    # canonical representative: nonnegative, k = 1
    values = np.abs(values)
    _, k_fin = _quotient_value(values, p, q)
    values /= k_fin
    u = ScalarField(grid, values, zero_trace=True)
    ev = evaluate_quotient(u, p, q)
    res = el_residual(u, p, q)
    argmax = int(np.argmax(np.abs(values)))
    return MinimizeResult(minimizer=u, lambda_=ev.quotient, iterations=it,
                          el_residual=res, argmax_node=argmax,
                          trace=np.asarray(trace), converged=converged)
