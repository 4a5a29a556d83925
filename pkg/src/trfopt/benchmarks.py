"""Grey-box benchmark library.

Five engineering case studies (Himmelblau's process problem, a
liquid-liquid extraction column, pressure vessel design, the alkylation
process and tension/compression spring design) plus a 25-problem synthetic
suite built from standard low-dimensional test functions embedded as
black-box equality components inside glass-box NLPs.

Every problem carries a glass-box oracle optimum computed at suite-build
time by a multistart run of the dense subsolver on the fully glass-box
model (black box replaced by its defining expression).  Benchmark
evaluators expose no analytic gradients: a Taylor surrogate pays for its
derivatives with finite differences, like a real simulator would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .problem import BlackBoxEvaluator, GlassBoxModel, GreyBoxProblem, VariablePartition
from .subsolver import NlpSubproblem, SubStatus, solve_nlp

__all__ = [
    "BenchmarkProblem",
    "SuiteBuildError",
    "build_engineering_suite",
    "build_synthetic_suite",
    "get_suite",
    "find_problem",
    "suite_manifest",
    "is_solved",
]

MANIFEST_HEADER = "# trfopt-suite-manifest v1"
ORACLE_TOL = 1e-3


class SuiteBuildError(RuntimeError):
    """The glass-box oracle failed to converge for a suite member."""


@dataclass
class _Spec:
    """Everything needed to build one grey-box problem and its oracle."""

    name: str
    dims: tuple  # (n_w, n_y, n_z)
    d_func: Callable
    d_grad: Callable  # oracle/consistency use only; never given to the evaluator
    glass_builder: Callable  # () -> GlassBoxModel
    x0_builder: Callable  # () -> np.ndarray with y entries filled from d
    source: str
    recommended: Dict[str, float] = field(default_factory=dict)
    multistart: int = 10


@dataclass
class BenchmarkProblem:
    """A named grey-box problem with its verified glass-box optimum."""

    name: str
    dims: tuple
    oracle_f: float
    oracle_tol: float
    source: str
    recommended: Dict[str, float]
    _spec: _Spec

    def make_problem(self) -> GreyBoxProblem:
        """Fresh problem instance with a fresh evaluation ledger."""
        return _assemble(self._spec)

    def oracle_subproblem(self, start: Optional[np.ndarray] = None) -> NlpSubproblem:
        return _oracle_subproblem(self._spec, start)


def is_solved(report, oracle_f: float, oracle_tol: float = ORACLE_TOL) -> bool:
    """The suite's definition of a solved run: converged status and final
    objective within the relative tolerance of the oracle optimum."""
    return report.converged and abs(report.f_final - oracle_f) <= oracle_tol * max(
        1.0, abs(oracle_f)
    )


def _assemble(spec: _Spec) -> GreyBoxProblem:
    m, p, n = spec.dims
    part = VariablePartition(
        w_indices=tuple(range(m)),
        y_indices=tuple(range(m, m + p)),
        z_indices=tuple(range(m + p, m + p + n)),
    )
    black = BlackBoxEvaluator(spec.d_func, m, p, gradient=None)
    return GreyBoxProblem(glass=spec.glass_builder(), black=black, partition=part, x0=spec.x0_builder())


def _oracle_subproblem(spec: _Spec, start=None) -> NlpSubproblem:
    """Fully glass-box NLP: the coupling y = d(w) becomes ordinary
    equalities with the hidden expression's (finite-difference) Jacobian."""
    m, p, n = spec.dims
    dim = m + p + n
    glass = spec.glass_builder()
    x0 = spec.x0_builder() if start is None else np.asarray(start, dtype=float)

    def eqs(x):
        base = np.atleast_1d(np.asarray(glass.equalities(x), dtype=float)) if glass.n_eq else np.zeros(0)
        coup = x[m : m + p] - np.atleast_1d(np.asarray(spec.d_func(x[:m]), dtype=float))
        return np.concatenate([base, coup])

    def eq_jac(x):
        rows = []
        if glass.n_eq:
            rows.append(np.atleast_2d(np.asarray(glass.eq_jacobian(x), dtype=float)))
        J = np.zeros((p, dim))
        G = np.asarray(spec.d_grad(x[:m]), dtype=float).reshape(p, m)
        J[:, :m] = -G
        J[np.arange(p), m + np.arange(p)] = 1.0
        rows.append(J)
        return np.vstack(rows)

    return NlpSubproblem(
        n=dim,
        objective=glass.objective,
        gradient=glass.gradient,
        hessian=glass.hessian,
        start=x0,
        equalities=eqs,
        eq_jacobian=eq_jac,
        n_eq=glass.n_eq + p,
        inequalities=glass.inequalities if glass.n_ineq else None,
        ineq_jacobian=glass.ineq_jacobian if glass.n_ineq else None,
        n_ineq=glass.n_ineq,
        lower=glass.lower,
        upper=glass.upper,
    )


def _oracle_optimum(spec: _Spec, seed: int) -> float:
    """Multistart glass-box solve; the best feasible optimum is the oracle.
    Random starts are made coupling-consistent (y = d(w)) before solving."""
    m, p, _ = spec.dims
    glass = spec.glass_builder()
    lo = np.where(np.isfinite(glass.lower), glass.lower, -5.0)
    hi = np.where(np.isfinite(glass.upper), glass.upper, 5.0)
    rng = np.random.default_rng(seed)
    best = None
    starts = [spec.x0_builder()]
    for _ in range(spec.multistart - 1):
        x0 = rng.uniform(lo, hi)
        x0[m : m + p] = np.atleast_1d(np.asarray(spec.d_func(x0[:m]), dtype=float))
        starts.append(np.clip(x0, glass.lower, glass.upper))
    for x0 in starts:
        sol = solve_nlp(_oracle_subproblem(spec, x0), tol_kkt=1e-8, tol_feas=1e-8, max_inner=100)
        if sol.status is SubStatus.OPTIMAL and (best is None or sol.objective < best):
            best = sol.objective
    if best is None:
        raise SuiteBuildError("oracle did not converge for %s" % spec.name)
    return float(best)


# ----------------------------------------------------------------------
# engineering case studies
# ----------------------------------------------------------------------
# Layout convention: x = [w..., y..., z...].


def _himmelblau_spec() -> _Spec:
    # Himmelblau's problem 11 (classic coefficients).  Original variables:
    # x1..x5 plus bounded response variables g1..g3 defined by equalities.
    # w = (x2, x3, x5), y = (x3^2, x2*x5), z = (x1, x4, g1, g2, g3).
    dim = 10

    def d(w):
        return np.array([w[1] ** 2, w[0] * w[2]])

    def d_grad(w):
        return np.array([[0.0, 2 * w[1], 0.0], [w[2], 0.0, w[0]]])

    def obj(x):
        return 5.3578547 * x[3] + 0.8356891 * x[5] * x[2] + 37.293239 * x[5] - 40792.141

    def grad(x):
        g = np.zeros(dim)
        g[3] = 5.3578547
        g[5] = 0.8356891 * x[2] + 37.293239
        g[2] = 0.8356891 * x[5]
        return g

    def hess(x):
        H = np.zeros((dim, dim))
        H[5, 2] = H[2, 5] = 0.8356891
        return H

    def eqs(x):
        return np.array([
            x[7] - 85.334407 - 0.0056858 * x[4] - 0.0006262 * x[5] * x[6]
            + 0.0022053 * x[1] * x[2],
            x[8] - 80.51249 - 0.0071317 * x[4] - 0.0029955 * x[5] * x[0]
            - 0.0021813 * x[1] ** 2,
            x[9] - 9.300961 - 0.0047026 * x[1] * x[2] - 0.0012547 * x[5] * x[1]
            - 0.0019085 * x[1] * x[6],
        ])

    def eq_jac(x):
        J = np.zeros((3, dim))
        J[0, 7] = 1.0
        J[0, 4] = -0.0056858
        J[0, 5] = -0.0006262 * x[6]
        J[0, 6] = -0.0006262 * x[5]
        J[0, 1] = 0.0022053 * x[2]
        J[0, 2] = 0.0022053 * x[1]
        J[1, 8] = 1.0
        J[1, 4] = -0.0071317
        J[1, 5] = -0.0029955 * x[0]
        J[1, 0] = -0.0029955 * x[5]
        J[1, 1] = -2 * 0.0021813 * x[1]
        J[2, 9] = 1.0
        J[2, 1] = -0.0047026 * x[2] - 0.0012547 * x[5] - 0.0019085 * x[6]
        J[2, 2] = -0.0047026 * x[1]
        J[2, 5] = -0.0012547 * x[1]
        J[2, 6] = -0.0019085 * x[1]
        return J

    lower = np.array([33, 27, 27, -np.inf, -np.inf, 78, 27, 0, 90, 20], dtype=float)
    upper = np.array([45, 45, 45, np.inf, np.inf, 102, 45, 92, 110, 25], dtype=float)

    def glass():
        return GlassBoxModel(
            dim, obj, grad, hess, equalities=eqs, eq_jacobian=eq_jac, n_eq=3,
            lower=lower, upper=upper,
        )

    def x0():
        w0 = np.array([33.0, 40.0, 40.0])
        y0 = d(w0)
        # original (x1..x5) = (78, 33, 40, 27, 40); response values from eqs
        x = np.zeros(10)
        x[0:3] = w0
        x[3:5] = y0
        x[5], x[6] = 78.0, 27.0
        x[7] = 85.334407 + 0.0056858 * y0[1] + 0.0006262 * 78.0 * 27.0 - 0.0022053 * 40.0 * 40.0
        x[8] = 80.51249 + 0.0071317 * y0[1] + 0.0029955 * 78.0 * 33.0 + 0.0021813 * 40.0 ** 2
        x[9] = 9.300961 + 0.0047026 * 40.0 * 40.0 + 0.0012547 * 78.0 * 40.0 + 0.0019085 * 40.0 * 27.0
        return x

    return _Spec(
        name="himmelblau",
        dims=(3, 2, 5),
        d_func=d,
        d_grad=d_grad,
        glass_builder=glass,
        x0_builder=x0,
        source="Himmelblau problem 11, classic formulation",
        recommended={"delta0": 10.0, "sigma0": 2.0},
    )


def _extraction_spec() -> _Spec:
    # Liquid-liquid extraction with an empirical transfer-unit correlation.
    # x = (vx, vy, NTU, F, Y0); maximize vy*Y0, solved as min of the negative.
    dim = 5

    def d(w):
        return np.array([4.81 * (w[0] / w[1]) ** 0.24])

    def d_grad(w):
        r = w[0] / w[1]
        c = 4.81 * 0.24 * r ** (0.24 - 1.0)
        return np.array([[c / w[1], -c * w[0] / w[1] ** 2]])

    def obj(x):
        return -x[1] * x[4]

    def grad(x):
        g = np.zeros(dim)
        g[1] = -x[4]
        g[4] = -x[1]
        return g

    def hess(x):
        H = np.zeros((dim, dim))
        H[1, 4] = H[4, 1] = -1.0
        return H

    def eqs(x):
        E = math.exp(x[2] * (1.0 - x[3]))
        return np.array([
            x[3] - 1.5 * x[0] / x[1],
            x[4] * (1.0 - x[3] * E) - x[3] * (1.0 - E),
        ])

    def eq_jac(x):
        E = math.exp(x[2] * (1.0 - x[3]))
        J = np.zeros((2, dim))
        J[0, 3] = 1.0
        J[0, 0] = -1.5 / x[1]
        J[0, 1] = 1.5 * x[0] / x[1] ** 2
        J[1, 2] = x[3] * (1.0 - x[3]) * E * (1.0 - x[4])
        J[1, 3] = x[4] * E * (x[2] * x[3] - 1.0) - 1.0 + E - x[2] * x[3] * E
        J[1, 4] = 1.0 - x[3] * E
        return J

    def ineqs(x):
        # flooding limit, plus an operability envelope F*exp(NTU(1-F)) < 1
        # that keeps the transfer-unit balance on its physical branch
        E = math.exp(x[2] * (1.0 - x[3]))
        return np.array([
            x[0] + x[1] - 0.20,
            x[3] * E - 0.98,
        ])

    def ineq_jac(x):
        E = math.exp(x[2] * (1.0 - x[3]))
        J = np.zeros((2, dim))
        J[0, 0] = 1.0
        J[0, 1] = 1.0
        J[1, 2] = x[3] * (1.0 - x[3]) * E
        J[1, 3] = E + x[3] * (-x[2]) * E
        return J

    lower = np.array([0.05, 0.05, 0.5, 0.0, 0.0])
    upper = np.array([0.25, 0.30, 20.0, 10.0, 10.0])

    def glass():
        return GlassBoxModel(
            dim, obj, grad, hess, equalities=eqs, eq_jacobian=eq_jac, n_eq=2,
            inequalities=ineqs, ineq_jacobian=ineq_jac, n_ineq=2,
            lower=lower, upper=upper,
        )

    def x0():
        w0 = np.array([0.12, 0.06])
        ntu = d(w0)[0]
        F = 1.5 * w0[0] / w0[1]
        E = math.exp(ntu * (1.0 - F))
        Y0 = F * (1.0 - E) / (1.0 - F * E)
        return np.array([w0[0], w0[1], ntu, F, Y0])

    return _Spec(
        name="extraction",
        dims=(2, 1, 2),
        d_func=d,
        d_grad=d_grad,
        glass_builder=glass,
        x0_builder=x0,
        source="liquid-liquid extraction column, NTU correlation",
        recommended={"delta0": 1.0, "sigma0": 0.05},
    )


def _pressure_vessel_spec() -> _Spec:
    # Pressure vessel design; the whole cost objective is the black box.
    dim = 5
    PI = 22.0 / 7.0

    def d(w):
        return np.array([
            0.6224 * w[0] * w[2] * w[3] + 1.7781 * w[1] * w[2] ** 2
            + 3.1661 * w[0] ** 2 * w[3] + 19.84 * w[0] ** 2 * w[2]
        ])

    def d_grad(w):
        return np.array([[
            0.6224 * w[2] * w[3] + 2 * 3.1661 * w[0] * w[3] + 2 * 19.84 * w[0] * w[2],
            1.7781 * w[2] ** 2,
            0.6224 * w[0] * w[3] + 2 * 1.7781 * w[1] * w[2] + 19.84 * w[0] ** 2,
            0.6224 * w[0] * w[2] + 3.1661 * w[0] ** 2,
        ]])

    def obj(x):
        return x[4]

    def grad(x):
        g = np.zeros(dim)
        g[4] = 1.0
        return g

    def hess(x):
        return np.zeros((dim, dim))

    def ineqs(x):
        return np.array([
            -x[0] + 0.0193 * x[2],
            -x[1] + 0.0095 * x[2],
            -PI * x[2] ** 2 * x[3] - (4.0 / 3.0) * PI * x[2] ** 3 + 1296000.0,
            x[3] - 240.0,
        ])

    def ineq_jac(x):
        J = np.zeros((4, dim))
        J[0, 0] = -1.0
        J[0, 2] = 0.0193
        J[1, 1] = -1.0
        J[1, 2] = 0.0095
        J[2, 2] = -2 * PI * x[2] * x[3] - 4.0 * PI * x[2] ** 2
        J[2, 3] = -PI * x[2] ** 2
        J[3, 3] = 1.0
        return J

    a = 0.0625
    lower = np.array([a, a, 10.0, 10.0, 0.0])
    upper = np.array([99 * a, 99 * a, 200.0, 200.0, 1e6])

    def glass():
        return GlassBoxModel(
            dim, obj, grad, hess,
            inequalities=ineqs, ineq_jacobian=ineq_jac, n_ineq=4,
            lower=lower, upper=upper,
        )

    def x0():
        w0 = np.array([0.79, 0.9375, 40.312283554875876, 200.0])
        return np.concatenate([w0, d(w0)])

    return _Spec(
        name="pressure_vessel",
        dims=(4, 1, 0),
        d_func=d,
        d_grad=d_grad,
        glass_builder=glass,
        x0_builder=x0,
        source="pressure vessel design (continuous bounds, 22/7 for pi)",
        recommended={"delta0": 50.0, "sigma0": 0.5},
    )


def _alkylation_spec() -> _Spec:
    # Alkylation process (profit maximization, solved as minimization).
    # Original variables o0..o9; w = o7, y = regression yield factor,
    # z = (o0, o1, o2, o3, o4, o5, o6, o8, o9) at x-indices 2..10.
    dim = 11

    def d(w):
        return np.array([1.12 + 0.12167 * w[0] - 0.0067 * w[0] ** 2])

    def d_grad(w):
        return np.array([[0.12167 - 2 * 0.0067 * w[0]]])

    def obj(x):
        return -(0.063 * x[5] * x[8] - 5.04 * x[2] - 0.035 * x[3] - 10.0 * x[4] - 3.36 * x[6])

    def grad(x):
        g = np.zeros(dim)
        g[5] = -0.063 * x[8]
        g[8] = -0.063 * x[5]
        g[2] = 5.04
        g[3] = 0.035
        g[4] = 10.0
        g[6] = 3.36
        return g

    def hess(x):
        H = np.zeros((dim, dim))
        H[5, 8] = H[8, 5] = -0.063
        return H

    def eqs(x):
        return np.array([
            x[5] - x[2] * x[1],
            x[8] - 86.35 - 1.098 * x[0] + 0.038 * x[0] ** 2 - 0.325 * (x[7] - 89.0),
            x[9] - 35.28 + 0.222 * x[10],
            x[10] - 3.0 * x[8] + 133.0,
            x[0] * x[2] - x[3] - x[6],
            x[6] - 1.22 * x[5] + x[2],
            x[7] * x[5] * x[9] + 1000.0 * x[7] * x[4] - 98000.0 * x[4],
        ])

    def eq_jac(x):
        J = np.zeros((7, dim))
        J[0, 5] = 1.0
        J[0, 2] = -x[1]
        J[0, 1] = -x[2]
        J[1, 8] = 1.0
        J[1, 0] = -1.098 + 2 * 0.038 * x[0]
        J[1, 7] = -0.325
        J[2, 9] = 1.0
        J[2, 10] = 0.222
        J[3, 10] = 1.0
        J[3, 8] = -3.0
        J[4, 0] = x[2]
        J[4, 2] = x[0]
        J[4, 3] = -1.0
        J[4, 6] = -1.0
        J[5, 6] = 1.0
        J[5, 5] = -1.22
        J[5, 2] = 1.0
        J[6, 7] = x[5] * x[9] + 1000.0 * x[4]
        J[6, 5] = x[7] * x[9]
        J[6, 9] = x[7] * x[5]
        J[6, 4] = 1000.0 * x[7] - 98000.0
        return J

    lower = np.array([5.69, 1.0, 0, 0, 0, 0, 0, 85, 90, 1.2, 145], dtype=float)
    upper = np.array([12.0, 2.0, 2000, 16000, 120, 5000, 2000, 93, 95, 4, 162], dtype=float)

    def glass():
        return GlassBoxModel(
            dim, obj, grad, hess, equalities=eqs, eq_jacobian=eq_jac, n_eq=7,
            lower=lower, upper=upper,
        )

    def x0():
        o = np.array([
            1309.276241883202, 6210.726557172016, 120.0, 2088.796312316891,
            1239.055259143405, 92.99796451282054, 92.66666666666667, 5.69,
            3.090000000000005, 145.0,
        ])
        w0 = np.array([o[7]])
        return np.concatenate([w0, d(w0), o[0:7], o[8:10]])

    return _Spec(
        name="alkylation",
        dims=(1, 1, 9),
        d_func=d,
        d_grad=d_grad,
        glass_builder=glass,
        x0_builder=x0,
        source="alkylation process (profit maximized; oracle on the minimization form)",
        recommended={"delta0": 200.0, "sigma0": 0.5},
        multistart=14,
    )


def _spring_spec() -> _Spec:
    # Tension/compression spring: minimize weight, the weight expression is
    # the black box.  x = (wire d, coil D, coils N, y).
    dim = 4

    def d(w):
        return np.array([(w[2] + 2.0) * w[1] * w[0] ** 2])

    def d_grad(w):
        return np.array([[
            2.0 * (w[2] + 2.0) * w[1] * w[0],
            (w[2] + 2.0) * w[0] ** 2,
            w[1] * w[0] ** 2,
        ]])

    def obj(x):
        return x[3]

    def grad(x):
        g = np.zeros(dim)
        g[3] = 1.0
        return g

    def hess(x):
        return np.zeros((dim, dim))

    def ineqs(x):
        x1, x2, x3 = x[0], x[1], x[2]
        N = 4.0 * x2 ** 2 - x1 * x2
        D = 12566.0 * (x2 * x1 ** 3 - x1 ** 4)
        return np.array([
            1.0 - (x2 ** 3 * x3) / (71785.0 * x1 ** 4),
            N / D + 1.0 / (5108.0 * x1 ** 2) - 1.0,
            1.0 - 140.45 * x1 / (x2 ** 2 * x3),
            (x1 + x2) / 1.5 - 1.0,
        ])

    def ineq_jac(x):
        x1, x2, x3 = x[0], x[1], x[2]
        J = np.zeros((4, dim))
        J[0, 0] = 4.0 * (x2 ** 3 * x3) / (71785.0 * x1 ** 5)
        J[0, 1] = -3.0 * x2 ** 2 * x3 / (71785.0 * x1 ** 4)
        J[0, 2] = -(x2 ** 3) / (71785.0 * x1 ** 4)
        N = 4.0 * x2 ** 2 - x1 * x2
        D = 12566.0 * (x2 * x1 ** 3 - x1 ** 4)
        dN1, dN2 = -x2, 8.0 * x2 - x1
        dD1 = 12566.0 * (3.0 * x2 * x1 ** 2 - 4.0 * x1 ** 3)
        dD2 = 12566.0 * x1 ** 3
        J[1, 0] = (dN1 * D - N * dD1) / D ** 2 - 2.0 / (5108.0 * x1 ** 3)
        J[1, 1] = (dN2 * D - N * dD2) / D ** 2
        J[2, 0] = -140.45 / (x2 ** 2 * x3)
        J[2, 1] = 2.0 * 140.45 * x1 / (x2 ** 3 * x3)
        J[2, 2] = 140.45 * x1 / (x2 ** 2 * x3 ** 2)
        J[3, 0] = 1.0 / 1.5
        J[3, 1] = 1.0 / 1.5
        return J

    lower = np.array([0.05, 0.25, 2.0, 0.0])
    upper = np.array([2.0, 1.3, 15.0, 50.0])

    def glass():
        return GlassBoxModel(
            dim, obj, grad, hess,
            inequalities=ineqs, ineq_jacobian=ineq_jac, n_ineq=4,
            lower=lower, upper=upper,
        )

    def x0():
        w0 = np.array([0.054, 0.4, 11.0])
        return np.concatenate([w0, d(w0)])

    return _Spec(
        name="spring",
        dims=(3, 1, 0),
        d_func=d,
        d_grad=d_grad,
        glass_builder=glass,
        x0_builder=x0,
        source="tension/compression spring design",
        recommended={"delta0": 2.0, "sigma0": 0.02},
    )


_ENGINEERING = (
    _himmelblau_spec,
    _extraction_spec,
    _pressure_vessel_spec,
    _alkylation_spec,
    _spring_spec,
)


# ----------------------------------------------------------------------
# synthetic suite
# ----------------------------------------------------------------------


def _free_glass(dim, obj, grad, hess, lower, upper, eqs=None, eq_jac=None, n_eq=0,
                ineqs=None, ineq_jac=None, n_ineq=0):
    def build():
        return GlassBoxModel(
            dim, obj, grad, hess, equalities=eqs, eq_jacobian=eq_jac, n_eq=n_eq,
            inequalities=ineqs, ineq_jacobian=ineq_jac, n_ineq=n_ineq,
            lower=lower, upper=upper,
        )

    return build


def _bb_objective_spec(name, m, D, a, b, q, r, x0w, source, box=10.0) -> _Spec:
    """min y + sum q_i (w_i - r_i)^2 / 2 over y = d(w) = (w-a)'diag(D)(w-a) + b.

    The glass quadratic dominates the hidden curvature direction by
    direction (D_i well below q_i), so successive linearization of the
    black box stays contractive; the q_i spread makes the landscape
    anisotropic."""
    dim = m + 1
    D = np.asarray(D, dtype=float)
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)

    def d(w):
        u = w - a
        return np.array([float(u @ (D * u)) + b])

    def d_grad(w):
        return (2.0 * D * (w - a))[None, :]

    def obj(x):
        u = x[:m] - r
        return x[m] + 0.5 * float(u @ (q * u))

    def grad(x):
        g = np.zeros(dim)
        g[:m] = q * (x[:m] - r)
        g[m] = 1.0
        return g

    def hess(x):
        H = np.zeros((dim, dim))
        H[:m, :m] = np.diag(q)
        return H

    lower = np.concatenate([np.full(m, -box), [-1e6]])
    upper = np.concatenate([np.full(m, box), [1e6]])

    def x0():
        w0 = np.asarray(x0w, dtype=float)
        return np.concatenate([w0, d(w0)])

    return _Spec(
        name=name, dims=(m, 1, 0), d_func=d, d_grad=d_grad,
        glass_builder=_free_glass(dim, obj, grad, hess, lower, upper),
        x0_builder=x0, source=source, multistart=6,
    )


def _eason_style_spec(name, alpha, beta, x0w) -> _Spec:
    """Glass-curved coupling: min (w1-1)^2 + (w2-w1)^2 + alpha*(z-1)^2 with
    h: y + w1 - 2z = 0 and d(w) = sin(beta*(w1-w2)) + w1^2."""
    m, p, n = 2, 1, 1
    dim = 4

    def d(w):
        return np.array([math.sin(beta * (w[0] - w[1])) + w[0] ** 2])

    def d_grad(w):
        c = beta * math.cos(beta * (w[0] - w[1]))
        return np.array([[c + 2.0 * w[0], -c]])

    def obj(x):
        return 2.5 * ((x[0] - 1.0) ** 2 + (x[1] - x[0]) ** 2) + alpha * (x[3] - 1.0) ** 2

    def grad(x):
        g = np.zeros(dim)
        g[0] = 5.0 * (x[0] - 1.0) - 5.0 * (x[1] - x[0])
        g[1] = 5.0 * (x[1] - x[0])
        g[3] = 2.0 * alpha * (x[3] - 1.0)
        return g

    def hess(x):
        H = np.zeros((dim, dim))
        H[0, 0] = 10.0
        H[0, 1] = H[1, 0] = -5.0
        H[1, 1] = 5.0
        H[3, 3] = 2.0 * alpha
        return H

    def eqs(x):
        return np.array([x[2] + x[0] - 2.0 * x[3]])

    def eq_jac(x):
        J = np.zeros((1, dim))
        J[0, 2] = 1.0
        J[0, 0] = 1.0
        J[0, 3] = -2.0
        return J

    lower = np.array([-4.0, -4.0, -50.0, -50.0])
    upper = np.array([4.0, 4.0, 50.0, 50.0])

    def x0():
        w0 = np.asarray(x0w, dtype=float)
        y0 = d(w0)
        z0 = (y0[0] + w0[0]) / 2.0
        return np.array([w0[0], w0[1], y0[0], z0])

    return _Spec(
        name=name, dims=(m, p, n), d_func=d, d_grad=d_grad,
        glass_builder=_free_glass(dim, obj, grad, hess, lower, upper,
                                  eqs=eqs, eq_jac=eq_jac, n_eq=1),
        x0_builder=x0, source="glass-coupled trigonometric valley", multistart=6,
    )


def _constrained_circle_spec(name, a, b, x0w) -> _Spec:
    """min w1 + w2 s.t. 1.5 - w1 - 2 w2 - 0.5 y <= 0, |w|^2 <= 1.5,
    y = d(w) = sin(a w1 + b w2)."""
    m, p = 2, 1
    dim = 3

    def d(w):
        return np.array([math.sin(a * w[0] + b * w[1])])

    def d_grad(w):
        c = math.cos(a * w[0] + b * w[1])
        return np.array([[a * c, b * c]])

    def obj(x):
        return x[0] + x[1]

    def grad(x):
        g = np.zeros(dim)
        g[0] = 1.0
        g[1] = 1.0
        return g

    def hess(x):
        return np.zeros((dim, dim))

    def ineqs(x):
        return np.array([
            1.5 - x[0] - 2.0 * x[1] - 0.5 * x[2],
            x[0] ** 2 + x[1] ** 2 - 1.5,
        ])

    def ineq_jac(x):
        J = np.zeros((2, dim))
        J[0, 0] = -1.0
        J[0, 1] = -2.0
        J[0, 2] = -0.5
        J[1, 0] = 2.0 * x[0]
        J[1, 1] = 2.0 * x[1]
        return J

    lower = np.array([0.0, 0.0, -2.0])
    upper = np.array([1.0, 1.0, 2.0])

    def x0():
        w0 = np.asarray(x0w, dtype=float)
        return np.concatenate([w0, d(w0)])

    return _Spec(
        name=name, dims=(m, p, 0), d_func=d, d_grad=d_grad,
        glass_builder=_free_glass(dim, obj, grad, hess, lower, upper,
                                  ineqs=ineqs, ineq_jac=ineq_jac, n_ineq=2),
        x0_builder=x0, source="trigonometric constraint surface", multistart=8,
    )


def _edge_pinned_spec(name, m, D, a, q, r, x0w, box) -> _Spec:
    """Bowl variant whose glass target r lies outside the w-box, pinning
    the optimum to the box face: exercises bound-active convergence."""
    return _bb_objective_spec(
        name, m, D, a, 0.5, q, r, x0w,
        "bound-pinned quadratic bowl", box=box,
    )


def _trig_surface_spec(name, a, b, x0w) -> _Spec:
    """min y + 1.75 |w|^2 with d(w) = sin(a w1) cos(b w2) + 0.1 |w|^2 + 2."""
    m = 2
    dim = 3

    def d(w):
        return np.array([math.sin(a * w[0]) * math.cos(b * w[1]) + 0.1 * float(w @ w) + 2.0])

    def d_grad(w):
        return np.array([[
            a * math.cos(a * w[0]) * math.cos(b * w[1]) + 0.2 * w[0],
            -b * math.sin(a * w[0]) * math.sin(b * w[1]) + 0.2 * w[1],
        ]])

    def obj(x):
        return x[2] + 1.75 * (x[0] ** 2 + x[1] ** 2)

    def grad(x):
        g = np.zeros(dim)
        g[0] = 3.5 * x[0]
        g[1] = 3.5 * x[1]
        g[2] = 1.0
        return g

    def hess(x):
        H = np.zeros((dim, dim))
        H[0, 0] = 3.5
        H[1, 1] = 3.5
        return H

    lower = np.array([-3.0, -3.0, -50.0])
    upper = np.array([3.0, 3.0, 50.0])

    def x0():
        w0 = np.asarray(x0w, dtype=float)
        return np.concatenate([w0, d(w0)])

    return _Spec(
        name=name, dims=(m, 1, 0), d_func=d, d_grad=d_grad,
        glass_builder=_free_glass(dim, obj, grad, hess, lower, upper),
        x0_builder=x0, source="trigonometric surface", multistart=10,
    )


def _two_output_spec(name, a, b, x0w) -> _Spec:
    """min y1 + y2 + 3|w - c|^2 with d(w) = ((w1-a)^2, (w2-b)^2)."""
    m, p = 2, 2
    dim = 4
    c = np.array([a - 0.5, b + 0.5])

    def d(w):
        return np.array([(w[0] - a) ** 2, (w[1] - b) ** 2])

    def d_grad(w):
        return np.array([[2.0 * (w[0] - a), 0.0], [0.0, 2.0 * (w[1] - b)]])

    def obj(x):
        return x[2] + x[3] + 3.0 * ((x[0] - c[0]) ** 2 + (x[1] - c[1]) ** 2)

    def grad(x):
        g = np.zeros(dim)
        g[0] = 6.0 * (x[0] - c[0])
        g[1] = 6.0 * (x[1] - c[1])
        g[2] = 1.0
        g[3] = 1.0
        return g

    def hess(x):
        H = np.zeros((dim, dim))
        H[0, 0] = 6.0
        H[1, 1] = 6.0
        return H

    lower = np.array([-6.0, -6.0, -1e6, -1e6])
    upper = np.array([6.0, 6.0, 1e6, 1e6])

    def x0():
        w0 = np.asarray(x0w, dtype=float)
        return np.concatenate([w0, d(w0)])

    return _Spec(
        name=name, dims=(m, p, 0), d_func=d, d_grad=d_grad,
        glass_builder=_free_glass(dim, obj, grad, hess, lower, upper),
        x0_builder=x0, source="two-output quadratic map", multistart=6,
    )


def _affine_spec(name, m, B, c, q, r, x0w, box=25.0) -> _Spec:
    """min y + sum q_i (w_i - r_i)^2 / 2 with an affine black box
    d(w) = B w + c: every surrogate kind reproduces it exactly."""
    dim = m + 1
    B = np.asarray(B, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)

    def d(w):
        return np.array([float(B @ w) + c])

    def d_grad(w):
        return B[None, :].copy()

    def obj(x):
        u = x[:m] - r
        return x[m] + 0.5 * float(u @ (q * u))

    def grad(x):
        g = np.zeros(dim)
        g[:m] = q * (x[:m] - r)
        g[m] = 1.0
        return g

    def hess(x):
        H = np.zeros((dim, dim))
        H[:m, :m] = np.diag(q)
        return H

    lower = np.concatenate([np.full(m, -box), [-1e6]])
    upper = np.concatenate([np.full(m, box), [1e6]])

    def x0():
        w0 = np.asarray(x0w, dtype=float)
        return np.concatenate([w0, d(w0)])

    return _Spec(
        name=name, dims=(m, 1, 0), d_func=d, d_grad=d_grad,
        glass_builder=_free_glass(dim, obj, grad, hess, lower, upper),
        x0_builder=x0, source="affine black box (exactness class)", multistart=6,
    )


def _zbound_spec(name) -> _Spec:
    """min z s.t. z >= y, y = d(w) = w1^2 + w2^2: the closed-form optimum
    is 0 at w = 0, with the bound-coupled z pinning the objective."""
    m, p, n = 2, 1, 1
    dim = 4

    def d(w):
        return np.array([w[0] ** 2 + w[1] ** 2])

    def d_grad(w):
        return np.array([[2.0 * w[0], 2.0 * w[1]]])

    def obj(x):
        return x[3]

    def grad(x):
        g = np.zeros(dim)
        g[3] = 1.0
        return g

    def hess(x):
        return np.zeros((dim, dim))

    def ineqs(x):
        return np.array([x[2] - x[3]])  # y - z <= 0

    def ineq_jac(x):
        J = np.zeros((1, dim))
        J[0, 2] = 1.0
        J[0, 3] = -1.0
        return J

    lower = np.array([-3.0, -3.0, -20.0, -5.0])
    upper = np.array([3.0, 3.0, 20.0, 20.0])

    def x0():
        w0 = np.array([0.8, -0.6])
        y0 = d(w0)
        return np.array([w0[0], w0[1], y0[0], y0[0]])

    return _Spec(
        name=name, dims=(m, p, n), d_func=d, d_grad=d_grad,
        glass_builder=_free_glass(dim, obj, grad, hess, lower, upper,
                                  ineqs=ineqs, ineq_jac=ineq_jac, n_ineq=1),
        x0_builder=x0, source="bound-coupled paraboloid (closed form)", multistart=6,
    )


def _z_coupled_spec(name, target, x0w) -> _Spec:
    """min z1^2 + z2^2 + y + 2.5|w|^2 with glass coupling z1 + z2 + w1 =
    target and d(w) = w1^2 + w1 w2 + w2^2."""
    m, p, n = 2, 1, 2
    dim = 5

    def d(w):
        return np.array([w[0] ** 2 + w[0] * w[1] + w[1] ** 2])

    def d_grad(w):
        return np.array([[2.0 * w[0] + w[1], w[0] + 2.0 * w[1]]])

    def obj(x):
        return x[3] ** 2 + x[4] ** 2 + x[2] + 2.5 * (x[0] ** 2 + x[1] ** 2)

    def grad(x):
        g = np.zeros(dim)
        g[0] = 5.0 * x[0]
        g[1] = 5.0 * x[1]
        g[2] = 1.0
        g[3] = 2.0 * x[3]
        g[4] = 2.0 * x[4]
        return g

    def hess(x):
        H = np.zeros((dim, dim))
        H[0, 0] = 5.0
        H[1, 1] = 5.0
        H[3, 3] = 2.0
        H[4, 4] = 2.0
        return H

    def eqs(x):
        return np.array([x[3] + x[4] + x[0] - target])

    def eq_jac(x):
        J = np.zeros((1, dim))
        J[0, 3] = 1.0
        J[0, 4] = 1.0
        J[0, 0] = 1.0
        return J

    lower = np.array([-5.0, -5.0, -1e6, -20.0, -20.0])
    upper = np.array([5.0, 5.0, 1e6, 20.0, 20.0])

    def x0():
        w0 = np.asarray(x0w, dtype=float)
        y0 = d(w0)
        z1 = (target - w0[0]) / 2.0
        return np.array([w0[0], w0[1], y0[0], z1, target - w0[0] - z1])

    return _Spec(
        name=name, dims=(m, p, n), d_func=d, d_grad=d_grad,
        glass_builder=_free_glass(dim, obj, grad, hess, lower, upper,
                                  eqs=eqs, eq_jac=eq_jac, n_eq=1),
        x0_builder=x0, source="glass-coupled quadratic", multistart=6,
    )


def _synthetic_specs(seed: int) -> List[_Spec]:
    rng = np.random.default_rng(seed)
    specs: List[_Spec] = []

    # eight anisotropic bowls, m = 2..4: glass stiffness q_i spans orders of
    # magnitude, the hidden curvature D_i is a small fraction of it, and
    # starts sit far out along the flat directions where step shape matters
    bowl_dims = (2, 2, 2, 2, 3, 3, 4, 4)
    for i, m in enumerate(bowl_dims):
        q = np.round(10.0 ** rng.uniform(-0.3, 1.0, size=m), 3)
        n_flat = 1 if m == 2 else 2
        flat = rng.choice(m, size=n_flat, replace=False)
        q[flat] = np.round(10.0 ** rng.uniform(-1.0, -0.7, size=n_flat), 4)
        D = np.round(q * rng.uniform(0.005, 0.02, size=m), 6)
        a = np.round(rng.uniform(-1.5, 1.5, size=m), 3)
        r = a + np.round(rng.uniform(-0.15, 0.15, size=m), 3)
        start = a + np.round(
            rng.uniform(3.5, 5.0, size=m) / np.sqrt(q) * rng.choice([-1.0, 1.0], size=m), 3
        )
        specs.append(_bb_objective_spec(
            "bowl_%02d" % (i + 1), m, D, a, float(np.round(rng.uniform(0.0, 2.0), 3)),
            q, r, np.clip(start, -24.0, 24.0),
            "anisotropic quadratic bowl", box=25.0,
        ))

    for i in range(2):
        alpha = float(np.round(rng.uniform(1.0, 3.0), 3))
        beta = float(np.round(rng.uniform(0.4, 0.8), 3))
        start = np.round(rng.uniform(-1.0, 1.0, size=2), 3)
        specs.append(_eason_style_spec("coupled_%02d" % (i + 1), alpha, beta, start))

    for i in range(3):
        a = float(np.round(rng.uniform(0.8, 1.8), 3))
        b = float(np.round(rng.uniform(0.8, 1.8), 3))
        specs.append(_constrained_circle_spec("circle_%02d" % (i + 1), a, b, [0.8, 0.8]))

    # three bound-pinned anisotropic bowls: the glass target sits outside
    # the w-box, so the optimum lands on a box face at the end of a long
    # flat-direction walk
    for i in range(3):
        m = 2
        q = np.round(10.0 ** rng.uniform(-0.3, 0.7, size=m), 3)
        flat = rng.integers(m)
        q[flat] = np.round(10.0 ** rng.uniform(-1.0, -0.7), 4)
        D = np.round(q * rng.uniform(0.005, 0.02, size=m), 6)
        a = np.round(rng.uniform(-1.0, 1.0, size=m), 3)
        box = 10.0
        r = np.round(rng.choice([-1.0, 1.0], size=m) * (box + rng.uniform(2.0, 5.0, size=m)), 3)
        start = np.clip(-np.sign(r) * np.round(rng.uniform(2.0, 5.0, size=m), 3), -box, box)
        specs.append(_edge_pinned_spec("pinned_%02d" % (i + 1), m, D, a, q, r, start, box))

    for i in range(2):
        a = float(np.round(rng.uniform(0.7, 1.2), 3))
        b = float(np.round(rng.uniform(0.7, 1.2), 3))
        start = np.round(rng.uniform(-1.5, 1.5, size=2), 3)
        specs.append(_trig_surface_spec("trig_%02d" % (i + 1), a, b, start))

    for i in range(3):
        a = float(np.round(rng.uniform(-1.0, 1.0), 3))
        b = float(np.round(rng.uniform(-1.0, 1.0), 3))
        start = np.round(rng.uniform(2.0, 4.0, size=2), 3)
        specs.append(_two_output_spec("twoout_%02d" % (i + 1), a, b, start))

    for i in range(2):
        target = float(np.round(rng.uniform(1.0, 3.0), 3))
        start = np.round(rng.uniform(-2.0, 2.0, size=2), 3)
        specs.append(_z_coupled_spec("zcoup_%02d" % (i + 1), target, start))

    # the two closed-form members the library's examples lean on
    m = 3
    B = np.round(rng.uniform(-1.5, 1.5, size=m), 3)
    q = np.array([0.1, 1.0, 6.0])
    r = np.round(rng.uniform(-1.0, 1.0, size=m), 3)
    start = r + np.array([9.0, -2.5, 0.9])
    specs.append(_affine_spec("affine_01", m, B, float(np.round(rng.uniform(-1, 1), 3)),
                              q, r, start))
    specs.append(_zbound_spec("zbound_01"))

    assert len(specs) == 25
    return specs


# ----------------------------------------------------------------------
# suite assembly
# ----------------------------------------------------------------------

_SUITE_CACHE: Dict[tuple, List[BenchmarkProblem]] = {}


def _build(specs: List[_Spec], seed: int) -> List[BenchmarkProblem]:
    out = []
    for spec in specs:
        oracle = _oracle_optimum(spec, seed)
        out.append(BenchmarkProblem(
            name=spec.name, dims=spec.dims, oracle_f=oracle, oracle_tol=ORACLE_TOL,
            source=spec.source, recommended=dict(spec.recommended), _spec=spec,
        ))
    return out


def build_engineering_suite(seed: int = 0) -> List[BenchmarkProblem]:
    key = ("engineering", seed)
    if key not in _SUITE_CACHE:
        _SUITE_CACHE[key] = _build([f() for f in _ENGINEERING], seed)
    return list(_SUITE_CACHE[key])


def build_synthetic_suite(seed: int = 0) -> List[BenchmarkProblem]:
    key = ("synthetic", seed)
    if key not in _SUITE_CACHE:
        _SUITE_CACHE[key] = _build(_synthetic_specs(seed), seed)
    return list(_SUITE_CACHE[key])


def get_suite(selector: str, seed: int = 0) -> List[BenchmarkProblem]:
    if selector == "engineering":
        return build_engineering_suite(seed)
    if selector == "synthetic":
        return build_synthetic_suite(seed)
    if selector == "all":
        return build_engineering_suite(seed) + build_synthetic_suite(seed)
    names = [s.strip() for s in selector.split(",") if s.strip()]
    pool = {p.name: p for p in build_engineering_suite(seed) + build_synthetic_suite(seed)}
    missing = [n for n in names if n not in pool]
    if missing:
        raise KeyError("unknown benchmark problems: %s" % ", ".join(missing))
    return [pool[n] for n in names]


def find_problem(name: str, seed: int = 0) -> BenchmarkProblem:
    return get_suite(name, seed)[0]


def suite_manifest(problems: List[BenchmarkProblem], seed: int = 0) -> str:
    """Stable, versioned manifest: one record per problem."""
    lines = [MANIFEST_HEADER, "name,n_w,n_y,n_z,oracle_f,oracle_tol,seed,source"]
    for p in problems:
        lines.append(
            "%s,%d,%d,%d,%s,%s,%d,%s"
            % (p.name, p.dims[0], p.dims[1], p.dims[2], repr(p.oracle_f),
               repr(p.oracle_tol), seed, p.source.replace(",", ";"))
        )
    return "\n".join(lines) + "\n"
