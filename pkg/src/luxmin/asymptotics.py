"""Two-stage exponent asymptotics: j-sweeps toward the sup-norm problem and
l-sweeps toward the geometry-driven limit.

For a fixed integer l the quotient |grad u|_{lp(x)} / |u|_{jq(x)} is
minimized along an increasing list of j, warm-starting each row from the
previous extremal; the j -> infinity limit is computed independently by
direct sup-norm minimization (direct_mu), whose extremal attains its max at
a single node and satisfies a point-source balance there:

    A_i = mu * S_l * sign(u(x0)) * [i == x0],

probed on 32 hats (dirac_residual).  The l-sweep then drives mu_l toward
1/max(d) with the extremals compared against the normalized distance field.

Exponent scales are capped at 256 so the log-domain arithmetic keeps full
accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .distance_ridge import distance_field
from .domain_grid import ScalarField, sup_norm_and_argmax
from .errors import ZeroField
from .exponents import ExponentField, sample_exponent
from .modular_norms import luxemburg_norm
from .rayleigh_solver import (SolverOptions, _gradient_side, minimize_quotient,
                              probe_nodes)

MAX_SCALED_EXPONENT = 256.0


@dataclass
class MuResult:
    """Extremal of the gradient-norm / sup-norm quotient at a fixed scale."""

    w: ScalarField          # sup-normalized, nonnegative
    mu: float
    x0: int                 # node where the sup is attained
    S_l: float
    dirac_residual: float
    iterations: int
    converged: bool
    gamma_nodes: np.ndarray  # discrete set where |w| attains its max


@dataclass
class SweepRow:
    index: int
    eigenvalue_estimate: float
    sup_norm_of_extremal: float
    argmax_x: float
    argmax_y: float
    gap_to_limit: float
    el_residual: float
    converged: bool
    # j-sweep extras
    lower_bound: float | None = None
    upper_bound: float | None = None
    # l-sweep extras
    sup_dist_to_scaled_distance: float | None = None
    bound_violation: float | None = None
    gamma_singleton: bool | None = None


@dataclass
class SweepReport:
    rows: list
    limit_value: float
    limit_kind: str              # "mu_l" | "lambda_infinity"
    final_field: ScalarField
    context: dict = field(default_factory=dict)

    @property
    def converged(self):
        return all(r.converged for r in self.rows)


def _check_scale(scale, base: ExponentField, what):
    if scale < 2:
        raise ValueError(f"{what} must be at least 2, got {scale}")
    top = scale * base.p_plus / base.scale
    if top > MAX_SCALED_EXPONENT:
        raise ValueError(
            f"{what}={scale} pushes the exponent to {top:.1f} > {MAX_SCALED_EXPONENT}; "
            "log arithmetic is only validated below that cap")


def _scaled(base: ExponentField, scale: int) -> ExponentField:
    if base.scale != 1:
        raise ValueError("pass the unscaled exponent field (scale 1)")
    return sample_exponent(base.ast, base.grid, scale)


# -- direct sup-norm minimization ----------------------------------------------

def direct_mu(l: int, p: ExponentField, opts: SolverOptions | None = None) -> MuResult:
    """Minimize |grad u|_{lp(x)} over zero-trace fields with nodal sup 1.

    The sup constraint is enforced by pinning the current argmax node at 1
    and descending the gradient norm over the remaining interior nodes
    (whose stationarity is exactly the point-source balance); whenever an
    accepted step pushes another node past 1 the iterate is renormalized and
    the pin moves there.  Both operations leave the quotient non-increasing.
    """
    opts = opts or SolverOptions()
    _check_scale(l, p, "l")
    pl = _scaled(p, l)
    grid = p.grid
    interior = grid.interior_mask

    if isinstance(opts.init, ScalarField):
        values = opts.init.values.copy()
    elif opts.init == "random":
        rng = np.random.default_rng(int(opts.seed))
        values = np.zeros(grid.n_nodes)
        values[interior] = rng.standard_normal(int(interior.sum()))
    else:
        values = distance_field(grid).d.values.copy()
    values[~interior] = 0.0
    sup = np.abs(values).max()
    if sup == 0.0:
        raise ZeroField("initial field is zero")
    values = values / sup

    converged = False
    evals = 0
    dirac = np.inf
    dirac_prev = np.inf
    mu_prev = np.inf
    stagnant = 0
    for _ in range(60):
        x0 = int(np.argmax(np.abs(values)))
        values = values / values[x0]  # pin at +1 (flips sign if needed)
        free = np.flatnonzero(interior & (np.arange(grid.n_nodes) != x0))

        def objective(vf):
            nonlocal evals
            evals += 1
            full = np.zeros(grid.n_nodes)
            full[free] = vf
            full[x0] = 1.0
            K, S_K, A, _ = _gradient_side(full, pl)
            return K, A[free] / S_K

        chunk = int(min(200, max(1, opts.max_iter - evals)))
        res = scipy_minimize(objective, values[free], jac=True, method="L-BFGS-B",
                             options={"maxiter": chunk, "maxfun": 4 * chunk,
                                      "ftol": 0.0, "gtol": 0.0})
        values = np.zeros(grid.n_nodes)
        values[free] = res.x
        values[x0] = 1.0

        K, S_K, A, _ = _gradient_side(values, pl)
        sup = np.abs(values).max()
        mu = K / sup
        probes = probe_nodes(grid, include=x0)
        rhs = np.zeros(len(probes))
        rhs[probes == x0] = mu * S_K * np.sign(values[x0])
        lhs = A[probes]
        dirac = float(np.abs(lhs - rhs).max()
                      / max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300))

        pin_stable = int(np.argmax(np.abs(values))) == x0
        flat = mu_prev - mu <= opts.tol * abs(mu)
        mu_prev = mu
        if pin_stable and dirac <= opts.el_tol and (flat or res.status == 0):
            converged = True
            break
        if evals >= opts.max_iter:
            break
        stagnant = stagnant + 1 if dirac > 0.9 * dirac_prev and flat else 0
        dirac_prev = dirac
        if stagnant >= 3:
            break
        if not pin_stable:
            values = values / sup
    it = evals

    values = np.abs(values)
    values /= values.max()
    w = ScalarField(grid, values, zero_trace=True)
    K, S_K, A, _ = _gradient_side(values, pl)
    mu = K
    x0 = int(np.argmax(values))
    probes = probe_nodes(grid, include=x0)
    rhs = np.zeros(len(probes))
    rhs[probes == x0] = mu * S_K
    lhs = A[probes]
    dirac = float(np.abs(lhs - rhs).max()
                  / max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300))
    _, gamma_nodes = sup_norm_and_argmax(w)
    return MuResult(w=w, mu=mu, x0=x0, S_l=S_K, dirac_residual=dirac,
                    iterations=it, converged=converged, gamma_nodes=gamma_nodes)


# -- sweeps ----------------------------------------------------------------------

def sweep_j(l: int, p: ExponentField, q: ExponentField, j_list,
            opts: SolverOptions | None = None) -> SweepReport:
    """Minimize the quotient for scales (l, j) along increasing j.

    Rows are warm-started from the previous extremal; the limit column is
    mu_l from direct_mu on the same grid.  Each row also records the proven
    bracket around the estimate: mu_l * |Omega|^{-alpha_j} from below and the
    quotient of the distance field from above.
    """
    if p.grid is not q.grid:
        raise ValueError("p and q must share a grid")
    j_list = [int(j) for j in j_list]
    if any(b <= a for a, b in zip(j_list, j_list[1:])) or not j_list or j_list[0] < 1:
        raise ValueError("j_list must be strictly increasing positive integers")
    opts = opts or SolverOptions()
    _check_scale(l, p, "l")
    _check_scale(max(j_list), q, "max j") if max(j_list) > 1 else None
    grid = p.grid

    mu = direct_mu(l, p, opts)
    pl = _scaled(p, l)
    area = float(grid.tri_area.sum())
    q_plus, q_minus = q.p_plus, q.p_minus
    d = distance_field(grid)
    grad_d_lp = luxemburg_norm(_grad_mag(d.d), pl)

    rows = []
    warm = None
    for j in j_list:
        qj = _scaled(q, j)
        row_opts = SolverOptions(max_iter=opts.max_iter, tol=opts.tol,
                                 el_tol=opts.el_tol, window=opts.window,
                                 init=warm if warm is not None else opts.init,
                                 restarts=0, seed=opts.seed)
        res = minimize_quotient(pl, qj, row_opts)
        warm = res.minimizer
        alpha_j = 1.0 / (j * q_plus) if area <= 1.0 else 1.0 / (j * q_minus)
        lower = mu.mu * area ** (-alpha_j)
        upper = grad_d_lp / luxemburg_norm(d.d, qj)
        sup_w = float(np.abs(res.minimizer.values).max())
        ax, ay = grid.nodes[res.argmax_node]
        rows.append(SweepRow(index=j, eigenvalue_estimate=res.lambda_,
                             sup_norm_of_extremal=sup_w, argmax_x=float(ax),
                             argmax_y=float(ay),
                             gap_to_limit=abs(res.lambda_ - mu.mu),
                             el_residual=res.el_residual, converged=res.converged,
                             lower_bound=lower, upper_bound=upper))
    return SweepReport(rows=rows, limit_value=mu.mu, limit_kind="mu_l",
                       final_field=warm,
                       context={"l": l, "mu_direct": mu.mu,
                                "mu_dirac_residual": mu.dirac_residual,
                                "area": area})


def sweep_l(p: ExponentField, l_list, opts: SolverOptions | None = None) -> SweepReport:
    """direct_mu along increasing l, compared against the distance limit."""
    l_list = [int(l) for l in l_list]
    if any(b <= a for a, b in zip(l_list, l_list[1:])) or not l_list or l_list[0] < 2:
        raise ValueError("l_list must be strictly increasing integers >= 2")
    opts = opts or SolverOptions()
    grid = p.grid
    dres = distance_field(grid)
    d_scaled = dres.d.values / dres.d_max

    rows = []
    warm = None
    last = None
    for l in l_list:
        row_opts = SolverOptions(max_iter=opts.max_iter, tol=opts.tol,
                                 el_tol=opts.el_tol, window=opts.window,
                                 init=warm if warm is not None else opts.init,
                                 restarts=0, seed=opts.seed)
        mu = direct_mu(l, p, row_opts)
        warm = mu.w
        last = mu
        diff = mu.w.values - d_scaled
        ax, ay = grid.nodes[mu.x0]
        rows.append(SweepRow(index=l, eigenvalue_estimate=mu.mu,
                             sup_norm_of_extremal=1.0,
                             argmax_x=float(ax), argmax_y=float(ay),
                             gap_to_limit=abs(mu.mu - dres.lambda_inf),
                             el_residual=mu.dirac_residual, converged=mu.converged,
                             sup_dist_to_scaled_distance=float(np.abs(diff).max()),
                             bound_violation=float(np.maximum(diff, 0.0).max()),
                             gamma_singleton=bool(len(mu.gamma_nodes) == 1)))
    return SweepReport(rows=rows, limit_value=dres.lambda_inf,
                       limit_kind="lambda_infinity", final_field=last.w,
                       context={"d_max": dres.d_max,
                                "ridge_singleton": dres.ridge_is_singleton,
                                "final_x0": last.x0,
                                "final_dirac_residual": last.dirac_residual,
                                "final_S_l": last.S_l})


def _grad_mag(u: ScalarField):
    from .domain_grid import gradient
    g = gradient(u)
    return np.hypot(g[:, 0], g[:, 1])
