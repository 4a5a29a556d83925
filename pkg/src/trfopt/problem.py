"""Grey-box problem structure.

A grey-box problem couples an equation-oriented (glass-box) model, for
which values and derivatives are available, with an opaque black-box map
``d(w)`` whose evaluations are counted and treated as expensive.  The full
variable vector is ``x = (w, y, z)``: the black-box inputs ``w``, the
decoupling variables ``y`` standing in for ``d(w)``, and the remaining
glass-box variables ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "BlackBoxFault",
    "VariablePartition",
    "GlassBoxModel",
    "BlackBoxEvaluator",
    "GreyBoxProblem",
    "EvalCache",
    "infeasibility",
    "initial_infeasibility",
    "subprocess_blackbox",
]

FD_STEP = 1e-6


class BlackBoxFault(RuntimeError):
    """Raised when the black-box evaluator misbehaves (non-finite output,
    broken subprocess, bad shapes).  Carries the offending input."""

    def __init__(self, message: str, w: Optional[np.ndarray] = None):
        super().__init__(message)
        self.w = None if w is None else np.asarray(w, dtype=float).copy()


@dataclass(frozen=True)
class VariablePartition:
    """Index lists splitting x into (w, y, z).

    The three lists must be pairwise disjoint and jointly cover
    0..dim-1; a grey-box problem has m >= 1 inputs and p >= 1 outputs.
    """

    w_indices: tuple
    y_indices: tuple
    z_indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "w_indices", tuple(int(i) for i in self.w_indices))
        object.__setattr__(self, "y_indices", tuple(int(i) for i in self.y_indices))
        object.__setattr__(self, "z_indices", tuple(int(i) for i in self.z_indices))
        if len(self.w_indices) < 1 or len(self.y_indices) < 1:
            raise ValueError("need at least one black-box input and one output")
        merged = sorted(self.w_indices + self.y_indices + self.z_indices)
        if merged != list(range(len(merged))):
            raise ValueError(
                "w/y/z index lists must be disjoint and cover 0..dim-1, got %r" % (merged,)
            )

    @property
    def m(self) -> int:
        return len(self.w_indices)

    @property
    def p(self) -> int:
        return len(self.y_indices)

    @property
    def n(self) -> int:
        return len(self.z_indices)

    @property
    def dim(self) -> int:
        return self.m + self.p + self.n

    def w_of(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[list(self.w_indices)]

    def y_of(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[list(self.y_indices)]

    def z_of(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[list(self.z_indices)]


def _empty_vec(x):
    return np.zeros(0)


def _empty_jac_factory(dim):
    def _empty_jac(x):
        return np.zeros((0, dim))

    return _empty_jac


class GlassBoxModel:
    """Equation-oriented part: objective with derivatives, constraint
    residuals with Jacobians, and variable bounds.

    objective/gradient/hessian take the full x; ``equalities`` returns the
    h-residual vector (h(x) = 0 feasible) and ``inequalities`` the
    g-residual vector (g(x) <= 0 feasible).
    """

    def __init__(
        self,
        dim: int,
        objective: Callable[[np.ndarray], float],
        gradient: Callable[[np.ndarray], np.ndarray],
        hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        equalities: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        eq_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        n_eq: int = 0,
        inequalities: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        ineq_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        n_ineq: int = 0,
        lower: Optional[Sequence[float]] = None,
        upper: Optional[Sequence[float]] = None,
    ):
        self.dim = int(dim)
        self.objective = objective
        self.gradient = gradient
        self.hessian = hessian
        self.n_eq = int(n_eq)
        self.n_ineq = int(n_ineq)
        self.equalities = equalities if equalities is not None else _empty_vec
        self.eq_jacobian = eq_jacobian if eq_jacobian is not None else _empty_jac_factory(dim)
        self.inequalities = inequalities if inequalities is not None else _empty_vec
        self.ineq_jacobian = (
            ineq_jacobian if ineq_jacobian is not None else _empty_jac_factory(dim)
        )
        self.lower = (
            np.full(dim, -np.inf) if lower is None else np.asarray(lower, dtype=float).copy()
        )
        self.upper = (
            np.full(dim, np.inf) if upper is None else np.asarray(upper, dtype=float).copy()
        )
        if self.lower.shape != (dim,) or self.upper.shape != (dim,):
            raise ValueError("bounds must have length dim")

    def hessian_or_fd(self, x: np.ndarray) -> np.ndarray:
        """Objective Hessian, central-differenced from the gradient when no
        analytic evaluator was supplied."""
        if self.hessian is not None:
            return np.asarray(self.hessian(x), dtype=float)
        x = np.asarray(x, dtype=float)
        n = x.size
        H = np.zeros((n, n))
        for i in range(n):
            h = max(FD_STEP, FD_STEP * abs(x[i]))
            xp = x.copy()
            xm = x.copy()
            xp[i] += h
            xm[i] -= h
            H[:, i] = (np.asarray(self.gradient(xp)) - np.asarray(self.gradient(xm))) / (2 * h)
        return 0.5 * (H + H.T)


class BlackBoxEvaluator:
    """The opaque map d: R^m -> R^p with call accounting.

    Every invocation of the map bumps ``calls`` by one; finite-difference
    gradients charge 2m.  The map must be deterministic within a solve
    (stochastic simulators are the caller's problem to seed).
    """

    def __init__(
        self,
        func: Callable[[np.ndarray], Sequence[float]],
        m: int,
        p: int,
        gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self.func = func
        self.m = int(m)
        self.p = int(p)
        self.analytic_gradient = gradient
        self.calls = 0

    def __call__(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if w.shape != (self.m,):
            raise BlackBoxFault("black-box input has wrong length %d" % w.size, w)
        if not np.all(np.isfinite(w)):
            raise BlackBoxFault("non-finite black-box input", w)
        self.calls += 1
        out = np.atleast_1d(np.asarray(self.func(w), dtype=float))
        if out.shape != (self.p,):
            raise BlackBoxFault(
                "black-box returned %d values, expected %d" % (out.size, self.p), w
            )
        if not np.all(np.isfinite(out)):
            raise BlackBoxFault("non-finite black-box output", w)
        return out

    def gradient_matrix(self, w: np.ndarray) -> np.ndarray:
        """p-by-m Jacobian of d at w: analytic if supplied, otherwise
        central differences with per-coordinate step max(1e-6, 1e-6|w_i|)."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if not np.all(np.isfinite(w)):
            raise BlackBoxFault("non-finite black-box input", w)
        if self.analytic_gradient is not None:
            G = np.asarray(self.analytic_gradient(w), dtype=float).reshape(self.p, self.m)
            if not np.all(np.isfinite(G)):
                raise BlackBoxFault("non-finite analytic black-box gradient", w)
            return G
        G = np.zeros((self.p, self.m))
        for i in range(self.m):
            h = max(FD_STEP, FD_STEP * abs(w[i]))
            wp = w.copy()
            wm = w.copy()
            wp[i] += h
            wm[i] -= h
            G[:, i] = (self(wp) - self(wm)) / (2 * h)
        if not np.all(np.isfinite(G)):
            raise BlackBoxFault("non-finite finite-difference quotient", w)
        return G


@dataclass
class GreyBoxProblem:
    """A glass-box model, a black-box evaluator and the variable partition.

    One instance is confined to a single solve at a time; the call counter
    is not safe for concurrent mutation.
    """

    glass: GlassBoxModel
    black: BlackBoxEvaluator
    partition: VariablePartition
    x0: np.ndarray = field(default=None)

    def __post_init__(self):
        part = self.partition
        if self.glass.dim != part.dim:
            raise ValueError(
                "glass-box dimension %d does not match partition dimension %d"
                % (self.glass.dim, part.dim)
            )
        if self.black.m != part.m or self.black.p != part.p:
            raise ValueError("black-box dimensions do not match the partition")
        if self.x0 is None:
            raise ValueError("an initial point x0 is required")
        self.x0 = np.asarray(self.x0, dtype=float).copy()
        if self.x0.shape != (part.dim,):
            raise ValueError("x0 must have length %d" % part.dim)
        if np.any(self.x0 < self.glass.lower - 1e-12) or np.any(
            self.x0 > self.glass.upper + 1e-12
        ):
            raise ValueError("x0 violates variable bounds")

    @property
    def dim(self) -> int:
        return self.partition.dim

    def evaluate_blackbox(self, w: np.ndarray) -> np.ndarray:
        return self.black(w)

    def blackbox_gradient(self, w: np.ndarray) -> np.ndarray:
        return self.black.gradient_matrix(w)

    def glass_residuals(self, x: np.ndarray):
        """(h(x), g(x)) residual vectors for diagnostics."""
        x = np.asarray(x, dtype=float)
        return (
            np.atleast_1d(np.asarray(self.glass.equalities(x), dtype=float)),
            np.atleast_1d(np.asarray(self.glass.inequalities(x), dtype=float)),
        )

    def w_bounds(self):
        idx = list(self.partition.w_indices)
        return self.glass.lower[idx], self.glass.upper[idx]


class EvalCache:
    """Iteration-scoped memo over a black-box evaluator.

    Repeated evaluation at bitwise-identical w within one iteration is
    served from the cache and charged once (the sampling design, the
    center-theta evaluation and the trial evaluation share points).
    """

    def __init__(self, problem: GreyBoxProblem):
        self.problem = problem
        self._store: dict = {}

    def __call__(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        key = w.tobytes()
        hit = self._store.get(key)
        if hit is None:
            hit = self.problem.evaluate_blackbox(w)
            self._store[key] = hit
        return hit

    def reset(self):
        self._store.clear()


def infeasibility(problem: GreyBoxProblem, surrogate, x: np.ndarray, evaluator=None) -> float:
    """theta(x) = ||s(w) - d(w)||_2 at the w-components of x.

    Charges one black-box call (through ``evaluator`` when the caller
    supplies an iteration cache).
    """
    w = problem.partition.w_of(x)
    d_val = (evaluator or problem.evaluate_blackbox)(w)
    s_val = surrogate.evaluate(w)
    return float(np.linalg.norm(s_val - d_val))


def initial_infeasibility(problem: GreyBoxProblem, x: np.ndarray, evaluator=None) -> float:
    """theta at a point whose y-components carry the surrogate prediction:
    ||y - d(w)||_2.  Used at iteration 0, before any surrogate exists."""
    part = problem.partition
    d_val = (evaluator or problem.evaluate_blackbox)(part.w_of(x))
    return float(np.linalg.norm(part.y_of(x) - d_val))


def subprocess_blackbox(argv: Sequence[str], m: int, p: int) -> BlackBoxEvaluator:
    """Wrap an external executable as a black-box evaluator.

    Protocol: the child reads one line of m space-separated decimals on
    stdin and writes one line of p space-separated decimals on stdout.
    Non-zero exit or a malformed line is a black-box fault.
    """
    import subprocess

    argv = list(argv)

    def run(w: np.ndarray) -> np.ndarray:
        line = " ".join(repr(float(v)) for v in w) + "\n"
        try:
            proc = subprocess.run(
                argv, input=line, capture_output=True, text=True, timeout=60.0
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BlackBoxFault("external evaluator failed to run: %s" % exc, w)
        if proc.returncode != 0:
            raise BlackBoxFault(
                "external evaluator exited with status %d" % proc.returncode, w
            )
        tokens = proc.stdout.strip().split()
        if len(tokens) != p:
            raise BlackBoxFault(
                "external evaluator wrote %d values, expected %d" % (len(tokens), p), w
            )
        try:
            return np.array([float(t) for t in tokens])
        except ValueError:
            raise BlackBoxFault("external evaluator wrote a malformed line", w)

    return BlackBoxEvaluator(run, m, p)
