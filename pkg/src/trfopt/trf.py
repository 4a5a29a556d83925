"""The trust-region filter driver.

Implements the base algorithm's nine-step iteration (surrogate build,
criticality check, compatibility check with restoration, trust-region
subproblem, filter acceptance, switching, radius and sampling-region
updates) and the four Hessian-projection variants that replace the box
trust constraint with an ellipsoidal one (A1 diagonal loading, A2 clamp,
A3 absolute, A4 adaptive switching).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .problem import (
    BlackBoxFault,
    EvalCache,
    GreyBoxProblem,
    infeasibility,
    initial_infeasibility,
)
from .spectral import ProjectionPolicy, adaptive_select, local_hessian
from .subsolver import (
    SubStatus,
    TrustConstraint,
    cauchy_decrease_diagnostic,
    solve_compatibility,
    solve_criticality,
    solve_trsp,
)
from .surrogate import IllPoisedDesignError, SurrogateKind, design_samples, fit

__all__ = [
    "VARIANTS",
    "TrfConfig",
    "default_config",
    "FilterSet",
    "filter_acceptable",
    "add_to_filter",
    "switching_condition",
    "reduction_ratio",
    "update_radius",
    "criticality_update",
    "check_termination",
    "restoration",
    "trf_solve",
    "StepOutcome",
    "TraceRecord",
    "SolveReport",
    "trace_csv",
    "TRACE_COLUMNS",
]

VARIANTS = ("A0", "A1", "A2", "A3", "A4")


# ----------------------------------------------------------------------
# filter
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class FilterSet:
    """Mutually non-dominated (f, theta) pairs; smaller is better in both
    coordinates."""

    entries: tuple = ()

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def add_to_filter(filt: FilterSet, entry: Tuple[float, float]) -> FilterSet:
    """Insert a pair, dropping it if dominated and evicting entries it
    dominates; the Pareto-front reading of the filter."""
    f, theta = float(entry[0]), float(entry[1])
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    for fj, tj in filt.entries:
        if fj <= f and tj <= theta:
            return filt  # dominated insert (or duplicate): unchanged
    kept = tuple(
        (fj, tj) for fj, tj in filt.entries if not (f <= fj and theta <= tj)
    )
    return FilterSet(entries=kept + ((f, theta),))


def filter_acceptable(
    filt: FilterSet,
    current: Tuple[float, float],
    trial: Tuple[float, float],
    gamma_theta: float,
    gamma_f: float,
) -> bool:
    """Trial passes when, against every filter entry and the current pair,
    it improves infeasibility by the theta margin or the objective by the
    f margin."""
    f_t, th_t = trial
    for fj, tj in tuple(filt.entries) + (tuple(current),):
        if not (th_t <= (1.0 - gamma_theta) * tj or f_t <= fj - gamma_f * tj):
            return False
    return True


def is_mutually_nondominated(filt: FilterSet) -> bool:
    ent = filt.entries
    for i, (fi, ti) in enumerate(ent):
        for j, (fj, tj) in enumerate(ent):
            if i == j:
                continue
            if fi <= fj and ti <= tj and (fi < fj or ti < tj):
                return False
    return True


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------


@dataclass
class TrfConfig:
    variant: str = "A0"
    surrogate_kind: SurrogateKind = SurrogateKind.LINEAR
    gamma_c: float = 0.5
    gamma_e: float = 2.5
    eta1: float = 0.05
    eta2: float = 0.75
    gamma_theta: float = 0.01
    gamma_f: float = 0.01
    kappa_theta: float = 0.1
    mu: float = 0.5
    gamma_s: float = 2.0
    kappa_delta: float = 0.8
    kappa_mu: float = 1.0
    xi: float = 0.01
    psi: float = 0.5
    omega: float = 0.5
    delta0: float = 1.0
    sigma0: float = 1.0
    delta_min: float = 1e-8
    eps_theta: float = 1e-6
    eps_chi: float = 1e-5
    eps_delta: float = 1e-4
    eps_comp: float = 1e-6
    eps_r: float = 1e-6
    theta_min: float = 1e-2
    theta_max: Optional[float] = None  # resolved at solve start
    eps1: float = 1e-6
    eps2: float = 1e-6
    eps3: float = 1e-6
    kappa_tmd: float = 1e-4
    max_iter: int = 500
    max_restoration: int = 30
    seed: int = 0
    tol_kkt: float = 1e-8
    tol_feas: float = 1e-8
    max_inner: int = 200

    def validate(self) -> "TrfConfig":
        if self.variant not in VARIANTS:
            raise ValueError("variant must be one of %s" % (VARIANTS,))
        if not (0 < self.gamma_c < 1 < self.gamma_e):
            raise ValueError("need 0 < gamma_c < 1 < gamma_e")
        if not (0 < self.eta1 <= self.eta2 < 1):
            raise ValueError("need 0 < eta1 <= eta2 < 1")
        for name in ("gamma_theta", "gamma_f", "kappa_theta", "kappa_delta", "mu", "psi", "omega"):
            v = getattr(self, name)
            if not (0 < v < 1):
                raise ValueError("%s must lie in (0, 1)" % name)
        if self.gamma_s <= 1.0 / (1.0 + self.mu):
            raise ValueError("gamma_s must exceed 1/(1+mu)")
        if self.xi <= 0 or self.kappa_mu <= 0:
            raise ValueError("xi and kappa_mu must be positive")
        if self.sigma0 > self.delta0:
            raise ValueError("sigma0 must not exceed delta0")
        if self.eps_delta < self.delta_min:
            raise ValueError("eps_delta must be >= delta_min")
        if self.theta_min <= 0:
            raise ValueError("theta_min must be positive")
        if self.theta_max is not None and self.theta_max <= 0:
            raise ValueError("theta_max must be positive")
        if min(self.eps1, self.eps2, self.eps3) <= 0:
            raise ValueError("projection floors must be positive")
        return self

    def with_overrides(self, overrides: dict) -> "TrfConfig":
        cfg = replace(self)
        for key, val in overrides.items():
            if not hasattr(cfg, key):
                raise ValueError("unknown config key %r" % key)
            current = getattr(cfg, key)
            if key == "surrogate_kind":
                val = val if isinstance(val, SurrogateKind) else SurrogateKind.parse(str(val))
            elif key == "variant":
                val = str(val)
            elif isinstance(current, int) and not isinstance(current, bool):
                val = int(val)
            else:
                val = float(val) if current is None or isinstance(current, float) else val
            setattr(cfg, key, val)
        return cfg.validate()


def default_config(variant: str = "A0", surrogate_kind=SurrogateKind.LINEAR) -> TrfConfig:
    """Reference parameter set; every value satisfies the config invariants
    (the A4 projection policy itself starts in absolute mode)."""
    if not isinstance(surrogate_kind, SurrogateKind):
        surrogate_kind = SurrogateKind.parse(str(surrogate_kind))
    return TrfConfig(variant=variant, surrogate_kind=surrogate_kind).validate()


# ----------------------------------------------------------------------
# step mechanics
# ----------------------------------------------------------------------


def switching_condition(
    f_k: float, f_trial: float, theta_k: float, kappa_theta: float, gamma_s: float, theta_min: float
) -> bool:
    """f-type test: enough objective decrease relative to the infeasibility
    scale, gated on near-feasibility of the current iterate."""
    return (f_k - f_trial >= kappa_theta * theta_k**gamma_s) and (theta_k <= theta_min)


def reduction_ratio(theta_k: float, theta_trial: float, predicted: float, eps_theta: float) -> float:
    """Actual over predicted infeasibility reduction, guarded so tiny
    infeasibilities do not shrink the region."""
    if eps_theta <= 0:
        raise ValueError("eps_theta must be positive")
    return (theta_k - theta_trial + eps_theta) / max(predicted, eps_theta)


def update_radius(
    rho: float, step_norm: float, delta_k: float,
    eta1: float, eta2: float, gamma_c: float, gamma_e: float,
) -> float:
    """Ratio test: contract below eta1, hold in between, expand above eta2."""
    if rho < eta1:
        return gamma_c * step_norm
    if rho < eta2:
        return delta_k
    return max(gamma_e * step_norm, delta_k)


def criticality_update(chi: float, sigma_prev: float, xi: float, delta_min: float) -> float:
    """Shrink the sampling region toward chi/xi (floored at delta_min);
    shrinking sigma is preferred over shrinking the trust region."""
    return max(min(sigma_prev, chi / xi), delta_min)


def check_termination(
    theta: float,
    theta_prev: float,
    chi: float,
    sigma: float,
    delta: float,
    delta_prev: float,
    r_norm: Optional[float],
    config: TrfConfig,
) -> Optional[str]:
    """First-order critical point, feasible-point stall, or residual
    optimality; None means continue."""
    if theta <= config.eps_theta and chi <= config.eps_chi and sigma <= config.eps_delta:
        return "critical_point"
    if (
        theta <= config.eps_theta
        and theta_prev <= config.eps_theta
        and delta <= config.delta_min
        and delta_prev <= config.delta_min
    ):
        return "feasible_point"
    if (
        r_norm is not None
        and theta <= config.eps_theta
        and r_norm <= config.eps_r
        and delta > 10.0 * config.eps_r
    ):
        # the radius guard keeps a collapsed trust region (where every step
        # is small by construction) from masquerading as stationarity
        return "residual_optimal"
    return None


@dataclass(frozen=True)
class StepOutcome:
    kind: str  # f_type | theta_type | rejected | restoration | terminated
    rho: Optional[float] = None
    rounds: Optional[int] = None
    reason: Optional[str] = None

    def label(self) -> str:
        if self.kind == "terminated":
            return "terminated:%s" % self.reason
        return self.kind


@dataclass
class TraceRecord:
    k: int
    f: float
    theta: float
    chi: float
    delta: float
    sigma: float
    outcome: str
    policy: str
    bb_calls_cum: int
    # accounting extras, not part of the stable CSV columns
    calls_iter: int = 0
    step_norm: float = float("nan")
    rho: float = float("nan")
    fcd_ok: Optional[bool] = None


TRACE_COLUMNS = ("k", "f", "theta", "chi", "delta", "sigma", "outcome", "policy", "bb_calls_cum")


def trace_csv(trace: List[TraceRecord]) -> str:
    """One CSV row per iteration, stable column order, full decimal
    precision (shortest round-trip floats)."""
    lines = [",".join(TRACE_COLUMNS)]
    for rec in trace:
        lines.append(
            ",".join(
                [
                    str(rec.k),
                    repr(float(rec.f)),
                    repr(float(rec.theta)),
                    repr(float(rec.chi)),
                    repr(float(rec.delta)),
                    repr(float(rec.sigma)),
                    rec.outcome,
                    rec.policy,
                    str(rec.bb_calls_cum),
                ]
            )
        )
    return "\n".join(lines) + "\n"


@dataclass
class SolveReport:
    status: str
    x_final: np.ndarray
    f_final: float
    theta_final: float
    iterations: int
    blackbox_calls: int
    wall_time: float
    trace: List[TraceRecord]
    variant: str
    surrogate: str
    message: str = ""

    @property
    def solved_statuses(self):
        return ("critical_point", "feasible_point", "residual_optimal")

    @property
    def converged(self) -> bool:
        return self.status in self.solved_statuses


# ----------------------------------------------------------------------
# restoration
# ----------------------------------------------------------------------


def restoration(
    problem: GreyBoxProblem,
    x: np.ndarray,
    theta: float,
    delta: float,
    sigma: float,
    surrogate,
    filt: FilterSet,
    f_k: float,
    config: TrfConfig,
    trust_kind: str,
    matrix,
    cache=None,
    seed_base: int = 0,
):
    """Recover a compatible (x, Delta, sigma, surrogate) after a failed
    compatibility check.  Each round re-solves the shrunken-trust gap
    problem, walks the restoration iterate to the candidate, halves the
    sampling radius and refits the surrogate around the new center, with
    the trust radius driven by the ratio test.  Success requires both a
    closed gap and a filter-acceptable candidate.

    Returns (ok, x_new, theta_new, delta, sigma, surrogate, rounds, rho_last).
    The caller has already added (f_k, theta_k) to the filter.
    """
    ev = cache or problem.evaluate_blackbox
    rho_last = None
    rest_x = x
    rest_theta = theta
    for rounds in range(1, config.max_restoration + 1):
        alpha, d, sol = solve_compatibility(
            problem, surrogate, rest_x, delta,
            trust_kind=trust_kind, matrix=matrix,
            kappa_delta=config.kappa_delta, kappa_mu=config.kappa_mu, mu=config.mu,
            tol_kkt=config.tol_kkt, tol_feas=config.tol_feas, max_inner=config.max_inner,
        )
        if sol.status in (SubStatus.NUMERIC_FAIL, SubStatus.INFEASIBLE):
            return False, x, theta, delta, sigma, surrogate, rounds, rho_last
        cand = rest_x + d
        # the candidate's y carries a nonzero gap whenever alpha > 0, so its
        # infeasibility is the y-based measure, not the anchored-surrogate one
        theta_cand = initial_infeasibility(problem, cand, ev)
        # predicted reduction: the gap the compatibility problem says is
        # closable within the shrunken region
        rho_last = reduction_ratio(
            rest_theta, theta_cand, rest_theta - alpha, config.eps_theta
        )
        step_norm = TrustConstraint(
            kind=trust_kind, center=rest_x, radius=delta, matrix=matrix
        ).step_norm(d)
        if rho_last >= config.eta2:
            # the gap model predicted well: regrow the region geometrically
            # so the walk can escape a collapsed radius
            delta = min(max(config.gamma_e * delta, config.gamma_e * step_norm), 1e8)
        else:
            delta = max(
                update_radius(
                    rho_last, step_norm, delta, config.eta1, config.eta2,
                    config.gamma_c, config.gamma_e,
                ),
                config.gamma_c * config.gamma_c * delta,
                config.delta_min / 10.0,
            )
        if alpha <= config.eps_comp and filter_acceptable(
            filt, (f_k, theta), (float(problem.glass.objective(cand)), theta_cand),
            config.gamma_theta, config.gamma_f,
        ):
            sigma = min(sigma, delta)
            return True, cand, theta_cand, delta, sigma, surrogate, rounds, rho_last
        if delta < config.delta_min / 10.0 * (1.0 + 1e-12):
            return False, x, theta, delta, sigma, surrogate, rounds, rho_last
        # walk toward feasibility (only if the candidate actually improved)
        # and rebuild the model around the current center
        if theta_cand < rest_theta:
            rest_x, rest_theta = cand, theta_cand
        w_scale = 1.0 + float(np.max(np.abs(problem.partition.w_of(rest_x))))
        sigma = min(max(sigma / 2.0, 1e-10 * w_scale), delta)
        try:
            samples = design_samples(
                config.surrogate_kind, problem.partition.w_of(rest_x), sigma, problem,
                seed=seed_base + rounds, evaluator=ev,
            )
            surrogate = fit(
                config.surrogate_kind, samples, problem, seed=seed_base + rounds, evaluator=ev
            )
        except (IllPoisedDesignError, BlackBoxFault):
            return False, x, theta, delta, sigma, surrogate, rounds, rho_last
    return False, x, theta, delta, sigma, surrogate, config.max_restoration, rho_last


# ----------------------------------------------------------------------
# the driver
# ----------------------------------------------------------------------


def trf_solve(problem: GreyBoxProblem, config: TrfConfig) -> SolveReport:
    """Run the TRF loop on a grey-box problem until termination.

    Subsolver and restoration failures are recorded in the report status,
    never raised.
    """
    config.validate()
    t_start = time.perf_counter()
    glass = problem.glass
    part = problem.partition
    kind = config.surrogate_kind
    calls0 = problem.black.calls

    x = problem.x0.copy()
    delta = float(config.delta0)
    sigma = min(float(config.sigma0), delta)
    policy = ProjectionPolicy.for_variant(
        config.variant, eps1=config.eps1, eps2=config.eps2, eps3=config.eps3
    )
    filt = FilterSet()
    trust_kind = "box" if config.variant == "A0" else "ellipsoid"

    cache = EvalCache(problem)
    status = "iter_limit"
    message = ""
    trace: List[TraceRecord] = []
    incumbent = None  # best near-feasible visited iterate (x, f, theta)

    try:
        theta = initial_infeasibility(problem, x, cache)
    except BlackBoxFault as exc:
        return SolveReport(
            status="subsolver_fail", x_final=x, f_final=float(glass.objective(x)),
            theta_final=float("nan"), iterations=0,
            blackbox_calls=problem.black.calls - calls0,
            wall_time=time.perf_counter() - t_start, trace=[],
            variant=config.variant, surrogate=kind.short,
            message="black-box fault at x0: %s" % exc,
        )
    theta_max = config.theta_max if config.theta_max is not None else max(1e4, 100.0 * theta)
    theta_prev = float("inf")
    delta_prev = float("inf")
    eq_duals = np.zeros(glass.n_eq)
    ineq_duals = np.zeros(glass.n_ineq)
    coupling_duals = np.zeros(part.p)
    strikes = 0  # consecutive hard subsolver failures before giving up

    for k in range(config.max_iter):
        if k > 0:
            cache.reset()
        calls_at_start = problem.black.calls
        f_k = float(glass.objective(x))

        # Step 2: build the surrogate inside the sampling region.
        try:
            samples = design_samples(
                kind, part.w_of(x), sigma, problem, seed=config.seed + k, evaluator=cache
            )
            surrogate = fit(kind, samples, problem, seed=config.seed + k, evaluator=cache)
        except (IllPoisedDesignError, BlackBoxFault) as exc:
            status, message = "subsolver_fail", "surrogate build failed: %s" % exc
            break

        # Step 3: criticality, termination, sampling-region update.  The
        # criticality multipliers refresh the Lagrangian weights for the
        # Hessian acquired alongside the check.
        chi, crit_duals, degenerate = solve_criticality(problem, surrogate, x)
        if not degenerate:
            eq_duals = crit_duals["eq"]
            ineq_duals = crit_duals["ineq"]
            coupling_duals = crit_duals["coupling"]

        matrix = None
        if trust_kind == "ellipsoid":
            H = local_hessian(
                problem, x, eq_duals, ineq_duals,
                surrogate=surrogate, surrogate_duals=coupling_duals,
            )
            matrix = policy.apply(H)
        reason = check_termination(
            theta, theta_prev, chi, sigma, delta, delta_prev, None, config
        )
        if reason is not None:
            trace.append(TraceRecord(
                k=k, f=f_k, theta=theta, chi=chi, delta=delta, sigma=sigma,
                outcome="terminated:%s" % reason, policy=policy.label(),
                bb_calls_cum=problem.black.calls - calls0,
                calls_iter=problem.black.calls - calls_at_start,
            ))
            status = reason
            break
        sigma_before_update = sigma
        if np.isfinite(chi) and chi < config.xi * sigma:
            sigma = criticality_update(chi, sigma, config.xi, config.delta_min)

        # Step 4: compatibility, restoration on failure.
        alpha, d_step, compat_sol = solve_compatibility(
            problem, surrogate, x, delta,
            trust_kind=trust_kind, matrix=matrix,
            kappa_delta=config.kappa_delta, kappa_mu=config.kappa_mu, mu=config.mu,
            tol_kkt=config.tol_kkt, tol_feas=config.tol_feas, max_inner=config.max_inner,
        )
        if compat_sol.status in (SubStatus.NUMERIC_FAIL, SubStatus.INFEASIBLE):
            strikes += 1
            if strikes >= 3:
                status = "subsolver_fail"
                message = "compatibility problem returned %s" % compat_sol.status.value
                break
            # shrink and retry next iteration
            trace.append(TraceRecord(
                k=k, f=f_k, theta=theta, chi=chi, delta=delta, sigma=sigma_before_update,
                outcome="rejected", policy=policy.label(),
                bb_calls_cum=problem.black.calls - calls0,
                calls_iter=problem.black.calls - calls_at_start,
            ))
            theta_prev, delta_prev = theta, delta
            delta = max(config.gamma_c * delta, config.delta_min / 10.0)
            sigma = min(sigma, config.psi * delta_prev, delta)
            policy = adaptive_select(policy, "rejected", None, config.eta2)
            continue
        if alpha > config.eps_comp:
            filt = add_to_filter(filt, (f_k, theta))
            ok, x_new, theta_new, delta_new, sigma_new, surrogate, rounds, rho_last = restoration(
                problem, x, theta, delta, sigma, surrogate, filt, f_k, config,
                trust_kind, matrix, cache=cache, seed_base=config.seed + 1000 * (k + 1),
            )
            outcome = StepOutcome(kind="restoration", rounds=rounds, rho=rho_last)
            trace.append(TraceRecord(
                k=k, f=f_k, theta=theta, chi=chi, delta=delta, sigma=sigma_before_update,
                outcome=outcome.label(), policy=policy.label(),
                bb_calls_cum=problem.black.calls - calls0,
                calls_iter=problem.black.calls - calls_at_start,
                rho=float("nan") if rho_last is None else rho_last,
            ))
            if not ok:
                status = "restoration_fail"
                break
            theta_prev, delta_prev = theta, delta
            x, theta, delta, sigma = x_new, theta_new, delta_new, sigma_new
            policy = adaptive_select(policy, "restoration", rho_last, config.eta2)
            continue

        # Step 5: the TRSP (warm-started with the previous iteration's duals).
        trust = TrustConstraint(kind=trust_kind, center=x, radius=delta, matrix=matrix)
        r_step, trsp_sol = solve_trsp(
            problem, surrogate, x + d_step, x, trust,
            tol_kkt=config.tol_kkt, tol_feas=config.tol_feas, max_inner=config.max_inner,
            warm_eq_duals=np.concatenate([eq_duals, coupling_duals]),
            warm_ineq_duals=ineq_duals,
        )
        if trsp_sol.status in (SubStatus.NUMERIC_FAIL, SubStatus.INFEASIBLE):
            strikes += 1
            if strikes >= 3:
                status = "subsolver_fail"
                message = "TRSP returned %s" % trsp_sol.status.value
                break
            trace.append(TraceRecord(
                k=k, f=f_k, theta=theta, chi=chi, delta=delta, sigma=sigma_before_update,
                outcome="rejected", policy=policy.label(),
                bb_calls_cum=problem.black.calls - calls0,
                calls_iter=problem.black.calls - calls_at_start,
            ))
            theta_prev, delta_prev = theta, delta
            delta = max(config.gamma_c * delta, config.delta_min / 10.0)
            sigma = min(sigma, config.psi * delta_prev, delta)
            policy = adaptive_select(policy, "rejected", None, config.eta2)
            continue
        strikes = 0
        eq_duals = trsp_sol.eq_duals[: glass.n_eq]
        coupling_duals = trsp_sol.eq_duals[glass.n_eq:]
        ineq_duals = trsp_sol.ineq_duals
        step_norm = trust.step_norm(r_step)
        r_inf = float(np.max(np.abs(r_step))) if r_step.size else 0.0

        reason = check_termination(
            theta, theta_prev, chi, sigma, delta, delta_prev, r_inf, config
        )
        if reason is not None:
            trace.append(TraceRecord(
                k=k, f=f_k, theta=theta, chi=chi, delta=delta, sigma=sigma_before_update,
                outcome="terminated:%s" % reason, policy=policy.label(),
                bb_calls_cum=problem.black.calls - calls0,
                calls_iter=problem.black.calls - calls_at_start,
                step_norm=step_norm,
            ))
            status = reason
            break

        # Step 6: filter acceptance at the trial point.
        x_trial = x + r_step
        f_trial = float(glass.objective(x_trial))
        theta_trial = infeasibility(problem, surrogate, x_trial, cache)
        fcd_ok = cauchy_decrease_diagnostic(
            float(glass.objective(x + d_step)), f_trial, min(chi, 1e100), delta,
            beta=max(2.0, float(np.linalg.norm(matrix, 2)) if matrix is not None else 2.0),
            kappa_tmd=config.kappa_tmd,
        )

        acceptable = theta_trial <= theta_max and filter_acceptable(
            filt, (f_k, theta), (f_trial, theta_trial), config.gamma_theta, config.gamma_f
        )
        rho = float("nan")
        if not acceptable:
            outcome = StepOutcome(kind="rejected")
            # gamma_c^2 floor: a degenerate ellipsoid norm can under-measure
            # the step and would otherwise collapse the radius in one shot
            delta_new = max(
                config.gamma_c * step_norm,
                config.gamma_c * config.gamma_c * delta,
                config.delta_min / 10.0,
            )
            sigma_new = min(sigma, config.psi * delta, delta_new)
            x_new, theta_new = x, theta
        else:
            if switching_condition(
                f_k, f_trial, theta, config.kappa_theta, config.gamma_s, config.theta_min
            ):
                outcome = StepOutcome(kind="f_type")
                delta_new = max(config.gamma_e * step_norm, delta)
                sigma_new = min(sigma, delta_new)
                x_new, theta_new = x_trial, theta_trial
            else:
                rho = reduction_ratio(theta, theta_trial, theta, config.eps_theta)
                outcome = StepOutcome(kind="theta_type", rho=rho)
                filt = add_to_filter(filt, (f_k, theta))
                delta_new = max(
                    update_radius(
                        rho, step_norm, delta, config.eta1, config.eta2,
                        config.gamma_c, config.gamma_e,
                    ),
                    config.gamma_c * config.gamma_c * delta,
                    config.delta_min / 10.0,
                )
                sigma_new = min(sigma, config.psi * delta, delta_new)
                x_new, theta_new = x_trial, theta_trial

        trace.append(TraceRecord(
            k=k, f=f_k, theta=theta, chi=chi, delta=delta, sigma=sigma_before_update,
            outcome=outcome.label(), policy=policy.label(),
            bb_calls_cum=problem.black.calls - calls0,
            calls_iter=problem.black.calls - calls_at_start,
            step_norm=step_norm, rho=rho, fcd_ok=fcd_ok,
        ))
        policy = adaptive_select(
            policy, outcome.kind, None if np.isnan(rho) else rho, config.eta2
        )
        theta_prev, delta_prev = theta, delta
        x, theta, delta, sigma = x_new, theta_new, delta_new, sigma_new

    return SolveReport(
        status=status,
        x_final=x.copy(),
        f_final=float(glass.objective(x)),
        theta_final=float(theta),
        iterations=len(trace),
        blackbox_calls=problem.black.calls - calls0,
        wall_time=time.perf_counter() - t_start,
        trace=trace,
        variant=config.variant,
        surrogate=kind.short,
        message=message,
    )
