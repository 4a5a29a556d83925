"""Local Hessian acquisition and positive-semidefinite projections.

Three projections make an indefinite Hessian usable inside an ellipsoidal
trust-region constraint: diagonal loading (shift the whole spectrum),
clamping (floor the eigenvalues) and absolute projection (keep curvature
magnitudes).  An adaptive policy switches between clamp and absolute from
the per-iteration step outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .problem import GreyBoxProblem

__all__ = [
    "SpectralFault",
    "local_hessian",
    "eigendecompose",
    "project_diagonal_loading",
    "project_clamp",
    "project_absolute",
    "ProjectionPolicy",
    "adaptive_select",
]

SYM_TOL = 1e-12
FD_STEP = 1e-6


class SpectralFault(RuntimeError):
    """Non-finite second derivatives or a failed eigendecomposition."""


def _check_symmetric(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(H)):
        raise SpectralFault("matrix has non-finite entries")
    scale = 1.0 + np.max(np.abs(H))
    if np.max(np.abs(H - H.T)) > SYM_TOL * scale:
        raise ValueError("matrix is not symmetric")
    return H


def local_hessian(
    problem: GreyBoxProblem,
    x: np.ndarray,
    eq_duals: Optional[np.ndarray] = None,
    ineq_duals: Optional[np.ndarray] = None,
    surrogate=None,
    surrogate_duals: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Hessian of the glass-box Lagrangian f + lam'h + mu'g at x.

    Multipliers default to zero.  The objective curvature is analytic when
    the glass box supplies it; constraint curvature is central-differenced
    from the analytic Jacobians.  When a quadratic-family surrogate and the
    duals of its y-coupling rows are given, their curvature enters the
    w-block (other kinds contribute nothing there).
    """
    x = np.asarray(x, dtype=float)
    glass = problem.glass
    H = glass.hessian_or_fd(x).copy()

    lam = np.zeros(glass.n_eq) if eq_duals is None else np.asarray(eq_duals, dtype=float)
    mu = np.zeros(glass.n_ineq) if ineq_duals is None else np.asarray(ineq_duals, dtype=float)
    if (lam.size and np.any(lam != 0.0)) or (mu.size and np.any(mu != 0.0)):

        def weighted_grad(pt):
            out = np.zeros(x.size)
            if lam.size:
                out += np.asarray(glass.eq_jacobian(pt), dtype=float).T @ lam
            if mu.size:
                out += np.asarray(glass.ineq_jacobian(pt), dtype=float).T @ mu
            return out

        C = np.zeros((x.size, x.size))
        for i in range(x.size):
            h = max(FD_STEP, FD_STEP * abs(x[i]))
            xp = x.copy()
            xm = x.copy()
            xp[i] += h
            xm[i] -= h
            C[:, i] = (weighted_grad(xp) - weighted_grad(xm)) / (2 * h)
        H += 0.5 * (C + C.T)

    if surrogate is not None and surrogate_duals is not None:
        w_idx = list(problem.partition.w_indices)
        w = problem.partition.w_of(x)
        for t, nu in enumerate(np.asarray(surrogate_duals, dtype=float)):
            if nu == 0.0:
                continue
            Hs = surrogate.hessian(w, t)
            if Hs is None:
                continue
            # y-coupling rows are c_t = y_t - s_t(w); curvature is -nu * s_t''
            H[np.ix_(w_idx, w_idx)] -= nu * Hs

    H = 0.5 * (H + H.T)
    if not np.all(np.isfinite(H)):
        raise SpectralFault("non-finite second derivatives at the current iterate")
    return H


def eigendecompose(H: np.ndarray):
    """Full symmetric eigendecomposition (eigenvalues ascending)."""
    H = _check_symmetric(H)
    try:
        lam, Q = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise SpectralFault("eigendecomposition failed: %s\n%r" % (exc, H))
    return lam, Q


def project_diagonal_loading(H: np.ndarray, eps1: float) -> np.ndarray:
    """H + tau*I with tau = max(eps1 - lambda_min, 0); already-PSD input with
    margin is returned unchanged."""
    if eps1 <= 0:
        raise ValueError("eps1 must be positive")
    H = _check_symmetric(H)
    lam_min = float(eigendecompose(H)[0][0])
    tau = max(eps1 - lam_min, 0.0)
    if tau == 0.0:
        return H.copy()
    return H + tau * np.eye(H.shape[0])


def project_clamp(H: np.ndarray, eps2: float) -> np.ndarray:
    """Spectral clamp: eigenvalues below eps2 are raised to eps2."""
    if eps2 <= 0:
        raise ValueError("eps2 must be positive")
    lam, Q = eigendecompose(H)
    lam_c = np.maximum(lam, eps2)
    return 0.5 * ((Q * lam_c) @ Q.T + ((Q * lam_c) @ Q.T).T)


def project_absolute(H: np.ndarray, eps3: float) -> np.ndarray:
    """Absolute projection: eigenvalue magnitudes kept, small magnitudes
    floored at eps3."""
    if eps3 <= 0:
        raise ValueError("eps3 must be positive")
    lam, Q = eigendecompose(H)
    lam_a = np.where(np.abs(lam) <= eps3, eps3, np.abs(lam))
    return 0.5 * ((Q * lam_a) @ Q.T + ((Q * lam_a) @ Q.T).T)


@dataclass(frozen=True)
class ProjectionPolicy:
    """Which PSD projection the trust-region constraint uses.

    mode: "none" (box constraint, A0), "diagonal_loading" (A1),
    "clamp" (A2), "absolute" (A3) or "adaptive" (A4, switching between
    clamp and absolute; starts absolute).
    """

    mode: str
    eps1: float = 1e-6
    eps2: float = 1e-6
    eps3: float = 1e-6
    current: str = "absolute"  # adaptive-mode inner choice

    _MODES = ("none", "diagonal_loading", "clamp", "absolute", "adaptive")

    def __post_init__(self):
        if self.mode not in self._MODES:
            raise ValueError("unknown projection mode %r" % self.mode)
        if min(self.eps1, self.eps2, self.eps3) <= 0:
            raise ValueError("projection floors must be positive")
        if self.current not in ("clamp", "absolute"):
            raise ValueError("adaptive inner policy must be clamp or absolute")

    @classmethod
    def for_variant(cls, variant: str, eps1=1e-6, eps2=1e-6, eps3=1e-6) -> "ProjectionPolicy":
        mode = {
            "A0": "none",
            "A1": "diagonal_loading",
            "A2": "clamp",
            "A3": "absolute",
            "A4": "adaptive",
        }[variant]
        return cls(mode=mode, eps1=eps1, eps2=eps2, eps3=eps3)

    @property
    def effective_mode(self) -> str:
        return self.current if self.mode == "adaptive" else self.mode

    def apply(self, H: np.ndarray) -> Optional[np.ndarray]:
        """Projected PSD Hessian for the trust constraint; None for A0."""
        mode = self.effective_mode
        if mode == "none":
            return None
        if mode == "diagonal_loading":
            return project_diagonal_loading(H, self.eps1)
        if mode == "clamp":
            return project_clamp(H, self.eps2)
        return project_absolute(H, self.eps3)

    def label(self) -> str:
        if self.mode == "adaptive":
            return "adaptive:%s" % self.current
        return self.mode


def adaptive_select(
    policy: ProjectionPolicy,
    outcome_kind: str,
    rho: Optional[float],
    eta2: float,
) -> ProjectionPolicy:
    """Next-iteration inner policy for the adaptive mode.

    Strong surrogate agreement (an f-type step, or a theta-type /
    restoration step with rho >= eta2) selects the clamp; a rejected step
    or weak agreement falls back to the absolute projection.
    """
    if policy.mode != "adaptive":
        return policy
    if outcome_kind == "f_type":
        return replace(policy, current="clamp")
    if outcome_kind in ("theta_type", "restoration"):
        if rho is not None and rho >= eta2:
            return replace(policy, current="clamp")
        return replace(policy, current="absolute")
    return replace(policy, current="absolute")
