"""Dense constrained subproblem solver for the TRF loop.

The built-in engine is an augmented-Lagrangian outer loop with a
trust-region Newton inner loop on the dense penalized problem; bounds are
handled by an active-set reduction inside the inner loop.  The three TRF
subproblems are layered on top: the criticality problem (a linear program,
solved with HiGHS), the compatibility problem and the trust-region
subproblem itself.

Multiplier convention: L = f + lam'h + mu'g with mu >= 0, so that
stationarity reads grad f + Jh'lam + Jg'mu = 0 on free coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from .problem import GreyBoxProblem
from .surrogate import SurrogateKind, SurrogateModel

__all__ = [
    "SubStatus",
    "TrustConstraint",
    "NlpSubproblem",
    "SubSolution",
    "solve_nlp",
    "kkt_report",
    "solve_criticality",
    "solve_compatibility",
    "solve_trsp",
    "cauchy_decrease_diagnostic",
    "register_external_solver",
]

DENSE_LIMIT = 64  # documented dense-dimension limit (spec asks >= 30)


class SubStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITER_LIMIT = "iter_limit"
    NUMERIC_FAIL = "numeric_fail"


@dataclass
class TrustConstraint:
    """Box (inf-norm) or ellipsoidal trust constraint around ``center``.

    The effective radius is radius*shrink; the compatibility problem uses
    shrink = kappa_Delta * min(1, kappa_mu * Delta^mu).  The ellipsoid is
    the smooth inequality (x-c)'M(x-c) <= R^2.
    """

    kind: str  # "box" | "ellipsoid"
    center: np.ndarray
    radius: float
    matrix: Optional[np.ndarray] = None
    shrink: float = 1.0

    def __post_init__(self):
        if self.kind not in ("box", "ellipsoid"):
            raise ValueError("trust constraint kind must be box or ellipsoid")
        if self.radius <= 0:
            raise ValueError("trust radius must be positive")
        if not (0.0 < self.shrink <= 1.0):
            raise ValueError("shrink must lie in (0, 1]")
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.kind == "ellipsoid":
            if self.matrix is None:
                raise ValueError("ellipsoid trust needs a PSD matrix")
            self.matrix = np.asarray(self.matrix, dtype=float)

    @property
    def effective_radius(self) -> float:
        return self.radius * self.shrink

    def step_norm(self, step: np.ndarray) -> float:
        """The trust norm of a step (inf-norm for box, H-weighted for
        ellipsoid) -- the norm the radius update rules are stated in."""
        step = np.asarray(step, dtype=float)
        if self.kind == "box":
            return float(np.max(np.abs(step))) if step.size else 0.0
        return float(np.sqrt(max(step @ self.matrix @ step, 0.0)))

    def violation(self, x: np.ndarray) -> float:
        s = np.asarray(x, dtype=float) - self.center
        R = self.effective_radius
        if self.kind == "box":
            return max(float(np.max(np.abs(s))) - R, 0.0)
        return max(float(s @ self.matrix @ s) - R * R, 0.0)


@dataclass
class NlpSubproblem:
    """Smooth dense NLP: min f s.t. h = 0, g <= 0, lb <= x <= ub, plus an
    optional trust constraint.

    ``hessian`` (objective) and the weighted-curvature callbacks are
    optional; missing curvature is finite-differenced from the analytic
    first derivatives.
    """

    n: int
    objective: Callable
    gradient: Callable
    start: np.ndarray
    hessian: Optional[Callable] = None
    equalities: Optional[Callable] = None
    eq_jacobian: Optional[Callable] = None
    n_eq: int = 0
    inequalities: Optional[Callable] = None
    ineq_jacobian: Optional[Callable] = None
    n_ineq: int = 0
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    trust: Optional[TrustConstraint] = None
    eq_curvature: Optional[Callable] = None  # (x, weights) -> sum_i w_i * hess(h_i)
    ineq_curvature: Optional[Callable] = None
    warm_eq_duals: Optional[np.ndarray] = None
    warm_ineq_duals: Optional[np.ndarray] = None

    def __post_init__(self):
        self.start = np.atleast_1d(np.asarray(self.start, dtype=float))
        if self.start.shape != (self.n,):
            raise ValueError("start must have length n")
        if self.n > DENSE_LIMIT:
            raise ValueError("dense solver limited to %d variables" % DENSE_LIMIT)
        self.lower = (
            np.full(self.n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        )
        self.upper = (
            np.full(self.n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        )


@dataclass
class SubSolution:
    """Solver result with duals.  ``kkt_residual`` is the max of the
    projected stationarity measure ||x - P(x - gradL)||_inf and the scaled
    complementarity max |mu_j g_j|/(1+|mu_j|); both are recomputable from
    the returned multipliers via ``kkt_report``."""

    x: np.ndarray
    status: SubStatus
    objective: float
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    trust_dual: float
    kkt_residual: float
    constraint_violation: float
    inner_iterations: int = 0


_EXTERNAL_SOLVER = None


def register_external_solver(provider) -> None:
    """Install an external engine: provider(sub, tol_kkt, tol_feas,
    max_inner) -> SubSolution.  Pass None to restore the built-in one."""
    global _EXTERNAL_SOLVER
    _EXTERNAL_SOLVER = provider


# ----------------------------------------------------------------------
# normalized internal form
# ----------------------------------------------------------------------


class _Internal:
    """Trust constraint folded in (box tightens bounds, ellipsoid appends
    one inequality row, always the last) with optional internal scaling:
    the objective is normalized by its start-point gradient scale and each
    constraint row by its start-point Jacobian row scale, the standard
    recipe for desk problems whose terms span many orders of magnitude."""

    # near-zero Hessian eigenvalues leave ellipsoid directions nearly
    # unconstrained; a wide safeguard box keeps that reach finite
    ELLIPSOID_BOX_FACTOR = 6.0

    def __init__(self, sub: NlpSubproblem, scale_at: Optional[np.ndarray] = None):
        self.sub = sub
        self.n = sub.n
        lb = sub.lower.copy()
        ub = sub.upper.copy()
        self.ellipsoid = None
        if sub.trust is not None and sub.trust.kind == "box":
            R = sub.trust.effective_radius
            lb = np.maximum(lb, sub.trust.center - R)
            ub = np.minimum(ub, sub.trust.center + R)
        elif sub.trust is not None:
            self.ellipsoid = sub.trust
            R = self.ELLIPSOID_BOX_FACTOR * sub.trust.effective_radius
            lb = np.maximum(lb, sub.trust.center - R)
            ub = np.minimum(ub, sub.trust.center + R)
        self.lb = lb
        self.ub = ub
        self.q_h = sub.n_eq
        self.q_g = sub.n_ineq + (1 if self.ellipsoid is not None else 0)
        self.s_f = 1.0
        self.s_eq = np.ones(self.q_h)
        self.s_in = np.ones(self.q_g)
        if scale_at is not None:
            x0 = np.clip(np.asarray(scale_at, dtype=float), lb, ub)
            g0 = self._grad_raw(x0)
            self.s_f = max(1.0, float(np.max(np.abs(g0))) if g0.size else 1.0)
            if self.q_h:
                J = self._jeq_raw(x0)
                self.s_eq = np.maximum(1.0, np.max(np.abs(J), axis=1))
            if self.q_g:
                J = self._jin_raw(x0)
                self.s_in = np.maximum(1.0, np.max(np.abs(J), axis=1))

    # raw (caller-scale) evaluations -----------------------------------
    def _fun_raw(self, x):
        return float(self.sub.objective(x))

    def _grad_raw(self, x):
        return np.asarray(self.sub.gradient(x), dtype=float)

    def _ceq_raw(self, x):
        if self.q_h == 0:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.sub.equalities(x), dtype=float))

    def _jeq_raw(self, x):
        if self.q_h == 0:
            return np.zeros((0, self.n))
        return np.atleast_2d(np.asarray(self.sub.eq_jacobian(x), dtype=float))

    def _cin_raw(self, x):
        rows = []
        if self.sub.n_ineq:
            rows.append(np.atleast_1d(np.asarray(self.sub.inequalities(x), dtype=float)))
        if self.ellipsoid is not None:
            t = self.ellipsoid
            s = x - t.center
            R = t.effective_radius
            rows.append(np.array([s @ t.matrix @ s - R * R]))
        if not rows:
            return np.zeros(0)
        return np.concatenate(rows)

    def _jin_raw(self, x):
        rows = []
        if self.sub.n_ineq:
            rows.append(np.atleast_2d(np.asarray(self.sub.ineq_jacobian(x), dtype=float)))
        if self.ellipsoid is not None:
            t = self.ellipsoid
            rows.append((2.0 * t.matrix @ (x - t.center))[None, :])
        if not rows:
            return np.zeros((0, self.n))
        return np.vstack(rows)

    # scaled views used by the augmented Lagrangian ---------------------
    def fun(self, x):
        return self._fun_raw(x) / self.s_f

    def grad(self, x):
        return self._grad_raw(x) / self.s_f

    def ceq(self, x):
        return self._ceq_raw(x) / self.s_eq if self.q_h else np.zeros(0)

    def jeq(self, x):
        return self._jeq_raw(x) / self.s_eq[:, None] if self.q_h else np.zeros((0, self.n))

    def cin(self, x):
        return self._cin_raw(x) / self.s_in if self.q_g else np.zeros(0)

    def jin(self, x):
        return self._jin_raw(x) / self.s_in[:, None] if self.q_g else np.zeros((0, self.n))

    def obj_hess(self, x):
        if self.sub.hessian is not None:
            return np.asarray(self.sub.hessian(x), dtype=float) / self.s_f
        H = np.zeros((self.n, self.n))
        for i in range(self.n):
            h = max(1e-6, 1e-6 * abs(x[i]))
            xp = x.copy()
            xm = x.copy()
            xp[i] += h
            xm[i] -= h
            H[:, i] = (self.grad(xp) - self.grad(xm)) / (2 * h)
        return 0.5 * (H + H.T)

    def constraint_curvature(self, x, lam_t, mu_t):
        """sum_i lam_t[i] hess(h_i/s_i) + sum_j mu_t[j] hess(g_j/s_j) with
        lam_t, mu_t in the scaled space, using analytic callbacks where
        provided and central differences on the Jacobians otherwise."""
        n = self.n
        C = np.zeros((n, n))
        lam_c = lam_t / self.s_eq if lam_t.size else lam_t
        mu_base = (mu_t[: self.sub.n_ineq] / self.s_in[: self.sub.n_ineq]
                   if mu_t.size else mu_t[: self.sub.n_ineq])
        fd_eq = lam_c.size > 0 and np.any(lam_c != 0.0) and self.sub.eq_curvature is None
        fd_in = mu_base.size > 0 and np.any(mu_base != 0.0) and self.sub.ineq_curvature is None
        if self.sub.eq_curvature is not None and lam_c.size and np.any(lam_c != 0.0):
            C += self.sub.eq_curvature(x, lam_c)
        if self.sub.ineq_curvature is not None and mu_base.size and np.any(mu_base != 0.0):
            C += self.sub.ineq_curvature(x, mu_base)
        if fd_eq or fd_in:

            def wgrad(pt):
                out = np.zeros(n)
                if fd_eq:
                    out += self._jeq_raw(pt).T @ lam_c
                if fd_in:
                    out += np.atleast_2d(
                        np.asarray(self.sub.ineq_jacobian(pt), dtype=float)
                    ).T @ mu_base
                return out

            F = np.zeros((n, n))
            for i in range(n):
                h = max(1e-6, 1e-6 * abs(x[i]))
                xp = x.copy()
                xm = x.copy()
                xp[i] += h
                xm[i] -= h
                F[:, i] = (wgrad(xp) - wgrad(xm)) / (2 * h)
            C += 0.5 * (F + F.T)
        if self.ellipsoid is not None and mu_t.size and mu_t[-1] != 0.0:
            C += 2.0 * (mu_t[-1] / self.s_in[-1]) * self.ellipsoid.matrix
        return C


# ----------------------------------------------------------------------
# exact dense trust-region step (More-Sorensen through eigh)
# ----------------------------------------------------------------------


def _tr_exact(B: np.ndarray, g: np.ndarray, delta: float) -> np.ndarray:
    """argmin g'p + p'Bp/2 s.t. ||p||_2 <= delta, solved via the secular
    equation on the eigenbasis (hard case included)."""
    lam, Q = np.linalg.eigh(0.5 * (B + B.T))
    a = Q.T @ (-g)
    lam0 = lam[0]
    scale = max(1.0, float(np.max(np.abs(lam))))

    def pvec(nu):
        denom = lam + nu
        denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        return a / denom

    if lam0 > 0:
        p = pvec(0.0)  # unconstrained Newton step
        if np.linalg.norm(p) <= delta:
            return Q @ p
        nu_lo = 0.0
    else:
        nu_lo = -lam0
        low_space = lam - lam0 <= 1e-12 * scale
        if np.all(np.abs(a[low_space]) <= 1e-12 * max(1.0, np.linalg.norm(a))):
            # hard case: gradient orthogonal to the lowest eigenspace
            p = pvec(nu_lo)
            p[low_space] = 0.0
            nrm2 = float(p @ p)
            if nrm2 <= delta * delta:
                out = Q @ p
                tail = delta * delta - nrm2
                if tail > 0:
                    out = out + np.sqrt(tail) * Q[:, 0]
                return out

    # boundary solution via safeguarded Newton on the secular equation
    # phi(nu) = 1/||p(nu)|| - 1/delta, monotone for nu > nu_lo
    a2 = a * a
    hi = nu_lo + max(1e-8 * scale, np.linalg.norm(a) / delta)
    for _ in range(200):
        if np.sqrt(float(np.sum(a2 / (lam + hi) ** 2))) <= delta:
            break
        hi = nu_lo + 2.0 * (hi - nu_lo)
    lo = nu_lo
    nu = 0.5 * (lo + hi)
    for _ in range(60):
        denom = lam + nu
        denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        n2 = float(np.sum(a2 / denom**2))
        n1 = np.sqrt(n2)
        if n1 > delta:
            lo = nu
        else:
            hi = nu
        if abs(n1 - delta) <= 1e-12 * delta or hi - lo <= 1e-15 * max(1.0, hi):
            break
        dn2 = -2.0 * float(np.sum(a2 / denom**3))
        dphi = -0.5 * dn2 / (n2 * n1)  # d(1/n)/dnu
        step = (1.0 / n1 - 1.0 / delta) / dphi if dphi != 0 else 0.0
        nu_new = nu - step
        if not (lo < nu_new < hi):
            nu_new = 0.5 * (lo + hi)
        nu = nu_new
    return Q @ pvec(nu)


# ----------------------------------------------------------------------
# bound-constrained trust-region Newton on the penalized problem
# ----------------------------------------------------------------------


def _pg_norm(x, g, lb, ub) -> float:
    return float(np.max(np.abs(x - np.clip(x - g, lb, ub)))) if x.size else 0.0


def _segment_to_box(x, p, lb, ub):
    """Largest t in [0, 1] with x + t*p inside the box, zeroing coordinates
    that are blocked immediately (at a bound with p pointing out)."""
    p = p.copy()
    for _ in range(2):
        t_max = 1.0
        blocked = None
        for i in np.nonzero(p)[0]:
            room = (ub[i] - x[i]) if p[i] > 0 else (lb[i] - x[i])
            t_i = room / p[i]
            if t_i < t_max:
                t_max = max(t_i, 0.0)
                blocked = i
        if t_max > 1e-12 or blocked is None:
            return p, max(t_max, 0.0)
        p[blocked] = 0.0
    return p, 0.0


def _cauchy_model_step(x, g, B, lb, ub, delta):
    """Backtracking projected-gradient step that decreases the quadratic
    model; the safeguard when the Newton direction is unusable."""
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return None
    t = delta / gn
    for _ in range(60):
        s = np.clip(x - t * g, lb, ub) - x
        if np.max(np.abs(s)) > 0:
            pred = -(g @ s + 0.5 * s @ B @ s)
            if pred > 0:
                return s
        t *= 0.5
    return None


def _tr_newton_box(fun, grad, hess, x0, lb, ub, gtol, max_iter, delta0=None):
    """Minimize a smooth function over a box with a trust-region Newton
    iteration on the free subspace.  Returns (x, n_iters, tag, delta)
    where tag is "converged", "iterlimit" or "stalled"."""
    x = np.clip(x0, lb, ub)
    f = fun(x)
    g = grad(x)
    delta = delta0 if delta0 else max(1.0, 0.1 * float(np.linalg.norm(x)))
    B = None
    it = 0
    while it < max_iter:
        it += 1
        pg = _pg_norm(x, g, lb, ub)
        if pg <= gtol:
            return x, it, "converged", delta
        band = 1e-9 * (1.0 + np.abs(x))
        active = ((x - lb <= band) & (g > 0)) | ((ub - x <= band) & (g < 0))
        free = ~active
        if B is None:
            B = hess(x)
        s = None
        if np.any(free):
            idx = np.where(free)[0]
            p = np.zeros_like(x)
            p[idx] = _tr_exact(B[np.ix_(idx, idx)], g[idx], delta)
            p, t_max = _segment_to_box(x, p, lb, ub)
            if t_max > 0 and np.max(np.abs(p)) > 0:
                cand = t_max * p
                if -(g @ cand + 0.5 * cand @ B @ cand) > 0:
                    s = cand
        if s is None:
            s = _cauchy_model_step(x, g, B, lb, ub, delta)
            if s is None:
                x_t, f_t, ok = _pg_backtrack(fun, x, f, g, lb, ub, delta)
                if not ok:
                    return x, it, "stalled", delta
                x, f = x_t, f_t
                g = grad(x)
                B = None
                continue
        pred = -(g @ s + 0.5 * s @ B @ s)
        x_t = np.clip(x + s, lb, ub)
        f_t = fun(x_t)
        ared = f - f_t
        snorm = float(np.linalg.norm(s))
        ratio = ared / pred if (pred > 0 and np.isfinite(ared)) else -1.0
        if ratio >= 1e-3 and np.isfinite(f_t):
            x, f = x_t, f_t
            g = grad(x)
            B = None
            if f < -1e20:
                return x, it, "stalled", delta
            if ratio >= 0.75 and snorm >= 0.8 * delta:
                delta = min(2.5 * delta, 1e12)
            elif ratio < 0.25:
                delta = max(0.25 * delta, 1e-14 * (1.0 + float(np.linalg.norm(x))))
        else:
            delta = max(0.25 * min(delta, snorm), 1e-16)
            if delta <= 1e-13 * (1.0 + float(np.linalg.norm(x))):
                x_t, f_t, ok = _pg_backtrack(fun, x, f, g, lb, ub, max(delta, 1e-8))
                if not ok:
                    return x, it, "stalled", delta
                x, f = x_t, f_t
                g = grad(x)
                B = None
                delta = max(delta, 1e-6 * (1.0 + float(np.linalg.norm(x))))
    return x, it, "iterlimit", delta


def _pg_backtrack(fun, x, f, g, lb, ub, delta):
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return x, f, False
    t = min(delta, 1.0) / gn
    for _ in range(60):
        x_t = np.clip(x - t * g, lb, ub)
        s = x_t - x
        if np.max(np.abs(s)) == 0.0:
            return x, f, False
        f_t = fun(x_t)
        if np.isfinite(f_t) and f_t <= f + 1e-4 * (g @ s):
            return x_t, f_t, True
        t *= 0.5
    return x, f, False


# ----------------------------------------------------------------------
# augmented-Lagrangian outer loop
# ----------------------------------------------------------------------


def _kkt_parts(intern: _Internal, x, lam, mu):
    gf = intern.grad(x)
    r = gf.copy()
    if lam.size:
        r = r + intern.jeq(x).T @ lam
    if mu.size:
        r = r + intern.jin(x).T @ mu
    # gradient-scaled projected stationarity (desk problems span many
    # orders of magnitude in objective scale)
    scale = max(1.0, float(np.max(np.abs(gf))) if gf.size else 1.0)
    stationarity = _pg_norm(x, r / scale, intern.lb, intern.ub)
    gv = intern.cin(x)
    compl = float(np.max(np.abs(mu * gv) / (1.0 + np.abs(mu)))) if mu.size else 0.0
    h = intern.ceq(x)
    viol = 0.0
    if h.size:
        viol = float(np.max(np.abs(h)))
    if gv.size:
        viol = max(viol, float(np.max(np.maximum(gv, 0.0))))
    return stationarity, compl, viol


def solve_nlp(
    sub: NlpSubproblem,
    tol_kkt: float = 1e-8,
    tol_feas: float = 1e-8,
    max_inner: int = 200,
) -> SubSolution:
    """Solve the subproblem with the built-in (or registered external)
    engine.  Deterministic for fixed inputs.

    A failed first attempt from a feasible start is retried once with a
    large initial penalty, which keeps the iterates near the feasible
    manifold on problems where the objective rewards constraint-violating
    excursions."""
    if _EXTERNAL_SOLVER is not None:
        return _EXTERNAL_SOLVER(sub, tol_kkt, tol_feas, max_inner)

    intern = _Internal(sub, scale_at=sub.start)
    plain = _Internal(sub)
    sol = _solve_al(sub, intern, plain, tol_kkt, tol_feas, max_inner, rho0=10.0)
    if sol.status is SubStatus.OPTIMAL or sol.constraint_violation <= 100 * tol_feas:
        return sol
    retry = _solve_al(sub, intern, plain, tol_kkt, tol_feas, max_inner, rho0=1e4)
    if retry.status is SubStatus.OPTIMAL:
        return retry
    # neither attempt certified: keep the one closer to a KKT point
    s1 = max(sol.kkt_residual, sol.constraint_violation)
    s2 = max(retry.kkt_residual, retry.constraint_violation)
    return sol if s1 <= s2 else retry


def _solve_al(sub, intern, plain, tol_kkt, tol_feas, max_inner, rho0) -> SubSolution:
    x = np.clip(sub.start, intern.lb, intern.ub)
    lam = np.zeros(intern.q_h)
    mu = np.zeros(intern.q_g)
    if sub.warm_eq_duals is not None and sub.warm_eq_duals.shape == lam.shape:
        lam = np.asarray(sub.warm_eq_duals, dtype=float) * intern.s_eq / intern.s_f
    if sub.warm_ineq_duals is not None and sub.warm_ineq_duals.size == sub.n_ineq:
        mu[: sub.n_ineq] = np.maximum(
            np.asarray(sub.warm_ineq_duals, dtype=float), 0.0
        ) * intern.s_in[: sub.n_ineq] / intern.s_f
    rho = rho0
    eta = 0.1258925 / rho**0.1
    gtol = 1e-2
    delta = None
    total_inner = 0
    inner_budget = max(800, 6 * max_inner)
    best = None
    stagnant = 0
    prev_viol = np.inf

    for outer in range(60):

        def la_fun(pt, lam=lam, mu=mu, rho=rho):
            val = intern.fun(pt)
            h = intern.ceq(pt)
            if h.size:
                val += lam @ h + 0.5 * rho * (h @ h)
            gv = intern.cin(pt)
            if gv.size:
                act = np.maximum(0.0, mu + rho * gv)
                val += (act @ act - mu @ mu) / (2.0 * rho)
            return val

        def la_grad(pt, lam=lam, mu=mu, rho=rho):
            r = intern.grad(pt)
            h = intern.ceq(pt)
            if h.size:
                r = r + intern.jeq(pt).T @ (lam + rho * h)
            gv = intern.cin(pt)
            if gv.size:
                act = np.maximum(0.0, mu + rho * gv)
                r = r + intern.jin(pt).T @ act
            return r

        curv_cache = {"x": None, "S": None}

        def la_hess(pt, lam=lam, mu=mu, rho=rho, cache=curv_cache):
            h = intern.ceq(pt)
            gv = intern.cin(pt)
            lam_t = lam + rho * h if h.size else np.zeros(0)
            mu_t = np.maximum(0.0, mu + rho * gv) if gv.size else np.zeros(0)
            # the Lagrangian-curvature part varies slowly; refresh it only
            # when the iterate has moved noticeably within this round
            if cache["x"] is None or float(
                np.max(np.abs(pt - cache["x"]))
            ) > 1e-3 * (1.0 + float(np.max(np.abs(cache["x"])))):
                cache["S"] = intern.obj_hess(pt) + intern.constraint_curvature(pt, lam_t, mu_t)
                cache["x"] = pt.copy()
            B = cache["S"].copy()
            if h.size:
                J = intern.jeq(pt)
                B += rho * (J.T @ J)
            if gv.size:
                act = mu + rho * gv > 0.0
                if np.any(act):
                    J = intern.jin(pt)[act]
                    B += rho * (J.T @ J)
            return B

        x, used, tag, delta = _tr_newton_box(
            la_fun, la_grad, la_hess, x, intern.lb, intern.ub,
            gtol=max(gtol, 0.25 * tol_kkt),
            max_iter=min(max_inner, inner_budget - total_inner), delta0=delta,
        )
        total_inner += used
        delta = max(delta, 1e-6)

        h = intern.ceq(x)
        gv = intern.cin(x)
        lam_trial = lam + rho * h if h.size else lam
        mu_trial = np.maximum(0.0, mu + rho * gv) if gv.size else mu
        viol = 0.0
        if h.size:
            viol = float(np.max(np.abs(h)))
        if gv.size:
            viol = max(viol, float(np.max(np.maximum(gv, 0.0))))

        # certification in the caller's scale
        lam_orig = lam_trial * (intern.s_f / intern.s_eq) if lam_trial.size else lam_trial
        mu_orig = mu_trial * (intern.s_f / intern.s_in) if mu_trial.size else mu_trial
        stat_o, compl_o, viol_o = _kkt_parts(plain, x, lam_orig, mu_orig)
        score = max(stat_o, compl_o, viol_o)
        if best is None or score < best[0]:
            best = (score, x.copy(), lam_orig.copy(), mu_orig.copy(), stat_o, compl_o, viol_o)

        if viol_o <= tol_feas and stat_o <= tol_kkt and compl_o <= tol_kkt:
            return _finish(sub, plain, x, lam_orig, mu_orig, SubStatus.OPTIMAL,
                           max(stat_o, compl_o), viol_o, total_inner)

        if viol <= max(eta, tol_feas):
            # feasibility on schedule: first-order multiplier update
            lam = np.clip(lam_trial, -1e12, 1e12)
            mu = np.clip(mu_trial, 0.0, 1e12)
            eta = max(eta / rho**0.9, 1e-12)
            gtol = max(0.2 * gtol, 0.25 * tol_kkt)
            stagnant = 0
        else:
            rho = min(rho * 10.0, 1e10)
            eta = 0.1258925 / rho**0.1
            gtol = max(0.5 * gtol, 0.25 * tol_kkt)
            if viol > 0.9 * prev_viol:
                stagnant += 1
            else:
                stagnant = 0
            if rho >= 1e10 and stagnant >= 4:
                _, bx, bl, bm, bs, bc, bv = best
                status = (
                    SubStatus.INFEASIBLE
                    if bv > max(1e-4, 100 * tol_feas)
                    else SubStatus.ITER_LIMIT
                )
                return _finish(sub, plain, bx, bl, bm, status,
                               max(bs, bc), bv, total_inner)
        prev_viol = viol
        if total_inner >= inner_budget:
            break

    _, bx, bl, bm, bs, bc, bv = best
    status = (
        SubStatus.INFEASIBLE
        if bv > max(1e-4, 100 * tol_feas) and rho >= 1e10
        else SubStatus.ITER_LIMIT
    )
    if not np.all(np.isfinite(bx)):
        status = SubStatus.NUMERIC_FAIL
    return _finish(sub, plain, bx, bl, bm, status, max(bs, bc), bv, total_inner)


def _finish(sub, intern, x, lam, mu, status, kkt, viol, inner):
    trust_dual = 0.0
    mu_out = mu
    if intern.ellipsoid is not None:
        trust_dual = float(mu[-1]) if mu.size else 0.0
        mu_out = mu[:-1]
    return SubSolution(
        x=x.copy(),
        status=status,
        objective=intern.fun(x),
        eq_duals=np.asarray(lam, dtype=float).copy(),
        ineq_duals=np.asarray(mu_out, dtype=float).copy(),
        trust_dual=trust_dual,
        kkt_residual=float(kkt),
        constraint_violation=float(viol),
        inner_iterations=inner,
    )


def kkt_report(sub: NlpSubproblem, sol: SubSolution):
    """Recompute (stationarity, complementarity, violation) from the
    returned multipliers; the certification the Optimal status promises."""
    intern = _Internal(sub)
    mu = sol.ineq_duals
    if intern.ellipsoid is not None:
        mu = np.concatenate([mu, [sol.trust_dual]])
    return _kkt_parts(intern, sol.x, sol.eq_duals, mu)


# ----------------------------------------------------------------------
# TRF subproblems
# ----------------------------------------------------------------------


def _surrogate_rows(problem: GreyBoxProblem, surrogate: SurrogateModel, x: np.ndarray):
    """Residuals and Jacobian of the coupling rows c_t = y_t - s_t(w)."""
    part = problem.partition
    w = part.w_of(x)
    res = part.y_of(x) - surrogate.evaluate(w)
    J = np.zeros((part.p, part.dim))
    S = surrogate.gradient(w)
    for t, yi in enumerate(part.y_indices):
        J[t, yi] = 1.0
    for t in range(part.p):
        J[t, list(part.w_indices)] = -S[t]
    return res, J


def _surrogate_curvature_full(surrogate: SurrogateModel, w: np.ndarray, t: int) -> np.ndarray:
    """w-curvature of output t for any kind (internal use by the solver)."""
    m = w.size
    kind = surrogate.kind
    if kind in (SurrogateKind.QUADRATIC, SurrogateKind.SIMPLIFIED_QUADRATIC):
        return surrogate.hessian(w, t)
    if kind in (SurrogateKind.LINEAR, SurrogateKind.TAYLOR_SERIES):
        return np.zeros((m, m))
    core = surrogate._payload["core"]
    kern = core.kernel
    kstar = kern.matrix(w[None, :], core.points)[0]
    diff = (w[None, :] - core.points) / kern.lengthscale**2
    alpha_t = core.alpha[:, t]
    H = np.zeros((m, m))
    for i in range(core.points.shape[0]):
        outer = np.outer(diff[i], diff[i]) - np.eye(m) / kern.lengthscale**2
        H += alpha_t[i] * kstar[i] * outer
    return H


def _coupling_curvature(problem, surrogate):
    part = problem.partition
    w_idx = list(part.w_indices)

    def curv(x, weights):
        C = np.zeros((part.dim, part.dim))
        w = part.w_of(x)
        for t, nu in enumerate(weights[-part.p:]):
            if nu == 0.0:
                continue
            C[np.ix_(w_idx, w_idx)] -= nu * _surrogate_curvature_full(surrogate, w, t)
        return C

    return curv


def solve_criticality(problem: GreyBoxProblem, surrogate: SurrogateModel, x: np.ndarray):
    """Criticality measure chi >= 0 from the linearized subproblem with an
    inf-norm unit step.  Returns (chi, duals, degenerate): duals keys
    "eq", "coupling", "ineq" follow the L = f + lam'h + mu'g convention;
    degenerate flags an infeasible linearization (chi = +inf)."""
    x = np.asarray(x, dtype=float)
    glass = problem.glass
    part = problem.partition
    gf = np.asarray(glass.gradient(x), dtype=float)

    A_eq = []
    if glass.n_eq:
        A_eq.append(np.atleast_2d(np.asarray(glass.eq_jacobian(x), dtype=float)))
    _, J_coup = _surrogate_rows(problem, surrogate, x)
    A_eq.append(J_coup)
    A_eq = np.vstack(A_eq)
    b_eq = np.zeros(A_eq.shape[0])

    A_ub = b_ub = None
    if glass.n_ineq:
        A_ub = np.atleast_2d(np.asarray(glass.ineq_jacobian(x), dtype=float))
        b_ub = -np.atleast_1d(np.asarray(glass.inequalities(x), dtype=float))

    lo = np.maximum(-1.0, glass.lower - x)
    hi = np.minimum(1.0, glass.upper - x)
    lo = np.minimum(lo, 0.0)  # v = 0 stays admissible despite roundoff
    hi = np.maximum(hi, 0.0)

    res = linprog(
        c=gf, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=list(zip(lo, hi)), method="highs",
    )
    duals = {
        "eq": np.zeros(glass.n_eq),
        "coupling": np.zeros(part.p),
        "ineq": np.zeros(glass.n_ineq),
    }
    if not res.success:
        return float("inf"), duals, True
    eq_marg = -np.asarray(res.eqlin.marginals, dtype=float)
    duals["eq"] = eq_marg[: glass.n_eq]
    duals["coupling"] = eq_marg[glass.n_eq:]
    if glass.n_ineq:
        duals["ineq"] = -np.asarray(res.ineqlin.marginals, dtype=float)
    return abs(float(res.fun)), duals, False


def _compat_problem(problem, surrogate, x_k, trust):
    part = problem.partition
    glass = problem.glass
    # proximal tie-break: the gap minimizer is typically non-unique (free
    # directions), so prefer the one nearest the center; the reported
    # alpha is the raw residual norm, unaffected by this term
    prox_w = 1e-8 / (1.0 + np.abs(x_k)) ** 2

    def fun(x):
        res, _ = _surrogate_rows(problem, surrogate, x)
        s = x - x_k
        return float(res @ res) + float(s @ (prox_w * s))

    def grad(x):
        res, J = _surrogate_rows(problem, surrogate, x)
        return 2.0 * J.T @ res + 2.0 * prox_w * (x - x_k)

    def hess(x):
        _, J = _surrogate_rows(problem, surrogate, x)
        return 2.0 * J.T @ J + 2.0 * np.diag(prox_w)  # Gauss-Newton model

    return NlpSubproblem(
        n=part.dim,
        objective=fun,
        gradient=grad,
        hessian=hess,
        start=x_k.copy(),
        equalities=glass.equalities if glass.n_eq else None,
        eq_jacobian=glass.eq_jacobian if glass.n_eq else None,
        n_eq=glass.n_eq,
        inequalities=glass.inequalities if glass.n_ineq else None,
        ineq_jacobian=glass.ineq_jacobian if glass.n_ineq else None,
        n_ineq=glass.n_ineq,
        lower=glass.lower,
        upper=glass.upper,
        trust=trust,
    )


def solve_compatibility(
    problem: GreyBoxProblem,
    surrogate: SurrogateModel,
    x_k: np.ndarray,
    delta: float,
    trust_kind: str = "box",
    matrix: Optional[np.ndarray] = None,
    kappa_delta: float = 0.8,
    kappa_mu: float = 1.0,
    mu: float = 0.5,
    tol_kkt: float = 1e-8,
    tol_feas: float = 1e-8,
    max_inner: int = 200,
):
    """Minimize ||y - s(w)||_2 over the glass-feasible set within the
    shrunken trust region of radius kappa_Delta*Delta*min(1, kappa_mu*
    Delta^mu).  Returns (alpha, step d, SubSolution)."""
    x_k = np.asarray(x_k, dtype=float)
    shrink = kappa_delta * min(1.0, kappa_mu * delta**mu)
    trust = TrustConstraint(
        kind=trust_kind, center=x_k, radius=delta, matrix=matrix, shrink=shrink
    )
    sub = _compat_problem(problem, surrogate, x_k, trust)
    sol = solve_nlp(sub, tol_kkt=tol_kkt, tol_feas=tol_feas, max_inner=max_inner)
    res, _ = _surrogate_rows(problem, surrogate, sol.x)
    alpha = float(np.linalg.norm(res))
    return alpha, sol.x - x_k, sol


def solve_trsp(
    problem: GreyBoxProblem,
    surrogate: SurrogateModel,
    x_start: np.ndarray,
    x_k: np.ndarray,
    trust: TrustConstraint,
    tol_kkt: float = 1e-8,
    tol_feas: float = 1e-8,
    max_inner: int = 200,
    warm_eq_duals: Optional[np.ndarray] = None,
    warm_ineq_duals: Optional[np.ndarray] = None,
):
    """Trust-region subproblem: glass objective and constraints with the
    black-box rows replaced by y = s(w), inside the variant's trust
    constraint.  Returns (step r, SubSolution); the solution's eq_duals
    stack the glass duals first and the p coupling duals last."""
    part = problem.partition
    glass = problem.glass
    x_k = np.asarray(x_k, dtype=float)

    def eqs(x):
        res, _ = _surrogate_rows(problem, surrogate, x)
        if glass.n_eq:
            return np.concatenate(
                [np.atleast_1d(np.asarray(glass.equalities(x), dtype=float)), res]
            )
        return res

    def eq_jac(x):
        _, J = _surrogate_rows(problem, surrogate, x)
        if glass.n_eq:
            return np.vstack([np.atleast_2d(np.asarray(glass.eq_jacobian(x), dtype=float)), J])
        return J

    def eq_curv(x, weights):
        C = _coupling_curvature(problem, surrogate)(x, weights)
        lam_glass = weights[: glass.n_eq]
        if glass.n_eq and np.any(lam_glass != 0.0):
            C = C + _fd_weighted_curvature(glass.eq_jacobian, x, lam_glass)
        return C

    sub = NlpSubproblem(
        n=part.dim,
        objective=glass.objective,
        gradient=glass.gradient,
        hessian=glass.hessian_or_fd,
        start=np.asarray(x_start, dtype=float).copy(),
        equalities=eqs,
        eq_jacobian=eq_jac,
        n_eq=glass.n_eq + part.p,
        inequalities=glass.inequalities if glass.n_ineq else None,
        ineq_jacobian=glass.ineq_jacobian if glass.n_ineq else None,
        n_ineq=glass.n_ineq,
        lower=glass.lower,
        upper=glass.upper,
        trust=trust,
        eq_curvature=eq_curv,
        warm_eq_duals=warm_eq_duals,
        warm_ineq_duals=warm_ineq_duals,
    )
    sol = solve_nlp(sub, tol_kkt=tol_kkt, tol_feas=tol_feas, max_inner=max_inner)
    return sol.x - x_k, sol


def _fd_weighted_curvature(jac, x, weights):
    n = x.size
    F = np.zeros((n, n))
    for i in range(n):
        h = max(1e-6, 1e-6 * abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        gp = np.atleast_2d(np.asarray(jac(xp), dtype=float)).T @ weights
        gm = np.atleast_2d(np.asarray(jac(xm), dtype=float)).T @ weights
        F[:, i] = (gp - gm) / (2 * h)
    return 0.5 * (F + F.T)


def cauchy_decrease_diagnostic(
    f_at_d: float, f_at_r: float, chi: float, delta: float, beta: float, kappa_tmd: float
) -> bool:
    """Fraction-of-Cauchy-decrease check: logged per iteration, never gates
    acceptance."""
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    return (f_at_d - f_at_r) >= kappa_tmd * chi * min(chi / beta, delta)
