"""Local surrogate models of the black-box map.

Six interchangeable forms are supported: interpolating/least-squares
polynomials (linear, full quadratic, simplified quadratic without cross
terms), a first-order Taylor expansion using black-box derivatives, a
zero-mean Gaussian-process regressor with a squared-exponential kernel,
and a hybrid Taylor + GP-residual model.  All models are anchored so that
the prediction at the sampling center equals the true black-box value
there exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .problem import GreyBoxProblem

__all__ = [
    "SurrogateKind",
    "SampleSet",
    "KernelSpec",
    "SurrogateModel",
    "IllPoisedDesignError",
    "required_samples",
    "design_samples",
    "fit",
    "gp_posterior",
    "fully_linear_diagnostic",
]

CONDITION_LIMIT = 1e8


class IllPoisedDesignError(RuntimeError):
    """Sample design too degenerate to fit (condition number beyond limit
    even after one jitter retry)."""


class SurrogateKind(Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    SIMPLIFIED_QUADRATIC = "simplified_quadratic"
    GAUSSIAN_PROCESS = "gaussian_process"
    TAYLOR_SERIES = "taylor_series"
    HYBRID = "hybrid"

    @classmethod
    def parse(cls, name: str) -> "SurrogateKind":
        aliases = {
            "l": cls.LINEAR,
            "linear": cls.LINEAR,
            "q": cls.QUADRATIC,
            "quadratic": cls.QUADRATIC,
            "sq": cls.SIMPLIFIED_QUADRATIC,
            "simplified_quadratic": cls.SIMPLIFIED_QUADRATIC,
            "gp": cls.GAUSSIAN_PROCESS,
            "gaussian_process": cls.GAUSSIAN_PROCESS,
            "ts": cls.TAYLOR_SERIES,
            "taylor_series": cls.TAYLOR_SERIES,
            "h": cls.HYBRID,
            "hybrid": cls.HYBRID,
        }
        key = name.strip().lower().replace("-", "_")
        if key not in aliases:
            raise ValueError("unknown surrogate kind %r" % name)
        return aliases[key]

    @property
    def short(self) -> str:
        return {
            SurrogateKind.LINEAR: "l",
            SurrogateKind.QUADRATIC: "q",
            SurrogateKind.SIMPLIFIED_QUADRATIC: "sq",
            SurrogateKind.GAUSSIAN_PROCESS: "gp",
            SurrogateKind.TAYLOR_SERIES: "ts",
            SurrogateKind.HYBRID: "h",
        }[self]


@dataclass
class SampleSet:
    """Design points inside the sampling region (an inf-norm ball of radius
    ``radius`` around ``center``) with their black-box values."""

    center: np.ndarray
    radius: float
    points: np.ndarray  # (n_pts, m)
    values: np.ndarray  # (n_pts, p)
    design_condition: float

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.radius <= 0:
            raise ValueError("sampling radius must be positive")
        if self.points.shape[0] != self.values.shape[0]:
            raise ValueError("one value row per design point required")
        span = np.max(np.abs(self.points - self.center[None, :]))
        if span > self.radius * (1 + 1e-12):
            raise ValueError("design point outside the sampling region")
        if not any(np.array_equal(pt, self.center) for pt in self.points):
            raise ValueError("center must be among the design points")
        seen = set()
        for pt in self.points:
            key = pt.tobytes()
            if key in seen:
                raise ValueError("design points must be pairwise distinct")
            seen.add(key)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def center_value(self) -> np.ndarray:
        for pt, val in zip(self.points, self.values):
            if np.array_equal(pt, self.center):
                return val
        raise ValueError("center not found among design points")


@dataclass
class KernelSpec:
    """Squared-exponential kernel: k(a,b) = sigma_f2 * exp(-|a-b|^2 / (2 l^2)).

    The kernel matrix must be symmetric positive definite after the nugget
    is added to its diagonal.
    """

    lengthscale: float
    signal_variance: float
    nugget: float = 1e-10

    def __post_init__(self):
        if self.lengthscale <= 0 or self.signal_variance <= 0 or self.nugget < 0:
            raise ValueError("kernel needs lengthscale > 0, signal variance > 0, nugget >= 0")

    def matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        sq = (
            np.sum(A * A, axis=1)[:, None]
            + np.sum(B * B, axis=1)[None, :]
            - 2.0 * A @ B.T
        )
        np.maximum(sq, 0.0, out=sq)
        return self.signal_variance * np.exp(-0.5 * sq / self.lengthscale**2)


def required_samples(kind: SurrogateKind, m: int) -> int:
    """Design size for each form: full quadratics need (m+1)(m+2)/2 points
    while the simplified form needs only 2m+1; Taylor needs the center
    alone (plus the gradient cost charged separately)."""
    if m < 1:
        raise ValueError("black-box input dimension must be >= 1")
    if kind is SurrogateKind.LINEAR:
        return m + 1
    if kind is SurrogateKind.QUADRATIC:
        return (m + 1) * (m + 2) // 2
    if kind is SurrogateKind.TAYLOR_SERIES:
        return 1
    # simplified quadratic, GP and hybrid all run on the 2m+1 stencil
    return 2 * m + 1


def _n_features(kind: SurrogateKind, m: int) -> int:
    if kind is SurrogateKind.LINEAR:
        return m
    if kind is SurrogateKind.SIMPLIFIED_QUADRATIC:
        return 2 * m
    if kind is SurrogateKind.QUADRATIC:
        return 2 * m + m * (m - 1) // 2
    return m  # geometry diagnostic basis for the non-polynomial kinds


def _features(kind: SurrogateKind, U: np.ndarray) -> np.ndarray:
    """Centered polynomial basis, without the fixed bias column."""
    U = np.atleast_2d(U)
    cols = [U]
    if kind in (SurrogateKind.SIMPLIFIED_QUADRATIC, SurrogateKind.QUADRATIC):
        cols.append(U * U)
    if kind is SurrogateKind.QUADRATIC:
        m = U.shape[1]
        cross = [U[:, i] * U[:, j] for i in range(m) for j in range(i + 1, m)]
        if cross:
            cols.append(np.stack(cross, axis=1))
    return np.concatenate(cols, axis=1)


def _feature_gradient(kind: SurrogateKind, u: np.ndarray) -> np.ndarray:
    """d(features)/du at a single centered point, shape (n_features, m)."""
    m = u.size
    rows = [np.eye(m)]
    if kind in (SurrogateKind.SIMPLIFIED_QUADRATIC, SurrogateKind.QUADRATIC):
        rows.append(np.diag(2.0 * u))
    if kind is SurrogateKind.QUADRATIC:
        cross = np.zeros((m * (m - 1) // 2, m))
        r = 0
        for i in range(m):
            for j in range(i + 1, m):
                cross[r, i] = u[j]
                cross[r, j] = u[i]
                r += 1
        rows.append(cross)
    return np.concatenate(rows, axis=0)


def _stencil(kind: SurrogateKind, center: np.ndarray, sigma: float, lo, hi) -> np.ndarray:
    """Coordinate stencil clipped into the variable bounds: the center, then
    +sigma steps, then -sigma steps, then the pairwise corner points for the
    full quadratic.  Steps shorten when a bound is closer than sigma; a
    direction blocked entirely falls back to a half-step the other way."""
    m = center.size
    pts = [center.copy()]
    plus = []
    minus = []
    for i in range(m):
        room_up = hi[i] - center[i]
        room_dn = center[i] - lo[i]
        step_up = min(sigma, room_up)
        step_dn = min(sigma, room_dn)
        if step_up <= sigma * 1e-9 and step_dn <= sigma * 1e-9:
            raise IllPoisedDesignError(
                "black-box input %d is fixed by its bounds; no sampling design exists" % i
            )
        if step_up <= sigma * 1e-9:
            step_up = -0.5 * step_dn
        if step_dn <= sigma * 1e-9:
            step_dn = -0.5 * step_up
        p = center.copy()
        p[i] += step_up
        plus.append(p)
        q = center.copy()
        q[i] -= step_dn
        minus.append(q)
    pts.extend(plus)
    pts.extend(minus)
    if kind is SurrogateKind.QUADRATIC:
        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        for i in range(m):
            for j in range(i + 1, m):
                corner = center.copy()
                for k in (i, j):
                    room_up = hi[k] - center[k]
                    room_dn = center[k] - lo[k]
                    step = sigma * inv_sqrt2
                    if room_up >= step:
                        corner[k] += min(step, room_up)
                    else:
                        corner[k] -= min(step, room_dn)
                pts.append(corner)
    out = np.array(pts)
    # snap to the floating grid: adding a tiny step to a large coordinate
    # can round just past the sampling-region membership tolerance
    for row in out:
        for k in range(m):
            guard = 0
            while abs(row[k] - center[k]) > sigma and guard < 4:
                row[k] = np.nextafter(row[k], center[k])
                guard += 1
    return out


def design_samples(
    kind: SurrogateKind,
    center: np.ndarray,
    sigma: float,
    problem: GreyBoxProblem,
    seed: int = 0,
    evaluator=None,
) -> SampleSet:
    """Deterministic sampling design of ``required_samples`` size inside the
    inf-ball of radius sigma, with black-box values evaluated and charged.

    ``design_condition`` is the condition number of the (sigma-scaled)
    polynomial basis matrix for the kind, a pure geometry measure.
    """
    if sigma <= 0:
        raise ValueError("sampling radius must be positive")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    m = center.size
    lo, hi = problem.w_bounds()
    pts = _stencil(kind, center, sigma, lo, hi)[: required_samples(kind, m)]
    ev = evaluator or problem.evaluate_blackbox
    values = np.array([ev(pt) for pt in pts])
    cond = _design_condition(kind, center, sigma, pts)
    return SampleSet(center=center, radius=sigma, points=pts, values=values, design_condition=cond)


def _design_condition(kind, center, sigma, pts) -> float:
    U = (pts - center[None, :]) / sigma
    basis_kind = kind
    if kind in (
        SurrogateKind.GAUSSIAN_PROCESS,
        SurrogateKind.HYBRID,
        SurrogateKind.TAYLOR_SERIES,
    ):
        basis_kind = SurrogateKind.LINEAR
    Phi = _features(basis_kind, U)
    nonzero = Phi[np.any(Phi != 0.0, axis=1)]
    if nonzero.shape[0] == 0:
        return 1.0
    return float(np.linalg.cond(nonzero))


class _GpCore:
    """GP posterior pieces shared by the GP and hybrid kinds.

    With ``center_targets`` the training values are mean-centered before
    the zero-mean posterior is formed (and the mean added back), so the
    far-field prediction reverts to the local level rather than to zero.
    """

    def __init__(self, points: np.ndarray, targets: np.ndarray, kernel: KernelSpec,
                 center_targets: bool = False):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.targets = np.atleast_2d(np.asarray(targets, dtype=float))  # (n_pts, p)
        self.kernel = kernel
        self.prior_mean = (
            self.targets.mean(axis=0) if center_targets else np.zeros(self.targets.shape[1])
        )
        K = kernel.matrix(self.points, self.points)
        nugget = kernel.nugget
        n = K.shape[0]
        while True:
            try:
                self.chol = np.linalg.cholesky(K + nugget * np.eye(n))
                break
            except np.linalg.LinAlgError:
                nugget = 1e-10 if nugget == 0 else nugget * 10.0
                if nugget > 1e-4:
                    raise IllPoisedDesignError(
                        "kernel matrix not positive definite even at nugget 1e-4"
                    )
        self.nugget = nugget
        self.alpha = np.linalg.solve(
            self.chol.T, np.linalg.solve(self.chol, self.targets - self.prior_mean[None, :])
        )  # (n_pts, p)

    def mean(self, w: np.ndarray) -> np.ndarray:
        kstar = self.kernel.matrix(np.atleast_2d(w), self.points)  # (1, n_pts)
        return (kstar @ self.alpha)[0] + self.prior_mean

    def mean_gradient(self, w: np.ndarray) -> np.ndarray:
        """(p, m) gradient of the posterior mean."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        kstar = self.kernel.matrix(w[None, :], self.points)[0]  # (n_pts,)
        diff = w[None, :] - self.points  # (n_pts, m)
        dk = -(kstar[:, None] * diff) / self.kernel.lengthscale**2  # (n_pts, m)
        return self.alpha.T @ dk


def gp_posterior(points, targets, kernel: KernelSpec) -> _GpCore:
    """Raw zero-mean GP posterior over the given training set (no target
    centering, no anchoring); exposes ``mean`` and ``mean_gradient``."""
    return _GpCore(points, targets, kernel, center_targets=False)


class SurrogateModel:
    """A fitted local model of d(w), immutable after fit.

    ``evaluate`` and ``gradient`` are deterministic, side-effect-free and
    make no black-box calls.
    """

    def __init__(self, kind, center, radius, d_center, payload):
        self.kind = kind
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        self.d_center = np.atleast_1d(np.asarray(d_center, dtype=float))
        self._payload = payload

    @property
    def m(self) -> int:
        return self.center.size

    @property
    def p(self) -> int:
        return self.d_center.size

    def evaluate(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        kind = self.kind
        if kind is SurrogateKind.TAYLOR_SERIES:
            grad = self._payload["gradient"]
            return self.d_center + grad @ (w - self.center)
        if kind is SurrogateKind.GAUSSIAN_PROCESS:
            core: _GpCore = self._payload["core"]
            return core.mean(w) + self._payload["shift"]
        if kind is SurrogateKind.HYBRID:
            grad = self._payload["gradient"]
            ts = self.d_center + grad @ (w - self.center)
            core: _GpCore = self._payload["core"]
            return ts + core.mean(w) + self._payload["shift"]
        coef = self._payload["coef"]  # (n_features, p)
        scale = self._payload["scale"]
        u = (w - self.center) / scale
        phi = _features(kind, u[None, :])[0]
        return self.d_center + coef.T @ phi

    def gradient(self, w: np.ndarray) -> np.ndarray:
        """(p, m) Jacobian of the surrogate at w, in closed form."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        kind = self.kind
        if kind is SurrogateKind.TAYLOR_SERIES:
            return self._payload["gradient"].copy()
        if kind is SurrogateKind.GAUSSIAN_PROCESS:
            core: _GpCore = self._payload["core"]
            return core.mean_gradient(w)
        if kind is SurrogateKind.HYBRID:
            core: _GpCore = self._payload["core"]
            return self._payload["gradient"] + core.mean_gradient(w)
        coef = self._payload["coef"]
        scale = self._payload["scale"]
        u = (w - self.center) / scale
        dphi = _feature_gradient(kind, u)  # (n_features, m)
        return (coef.T @ dphi) / scale

    def hessian(self, w: np.ndarray, output: int) -> Optional[np.ndarray]:
        """(m, m) curvature of one output for the quadratic family; None for
        the kinds without stored second derivatives."""
        if self.kind not in (SurrogateKind.QUADRATIC, SurrogateKind.SIMPLIFIED_QUADRATIC):
            return None
        coef = self._payload["coef"][:, output]
        scale = self._payload["scale"]
        m = self.m
        H = np.diag(2.0 * coef[m : 2 * m])
        if self.kind is SurrogateKind.QUADRATIC:
            r = 2 * m
            for i in range(m):
                for j in range(i + 1, m):
                    H[i, j] += coef[r]
                    H[j, i] += coef[r]
                    r += 1
        return H / scale**2


def _default_kernel(samples: SampleSet, targets: np.ndarray) -> KernelSpec:
    # lengthscale tied to the sampling radius keeps the kernel well scaled
    # as the region shrinks; signal variance from the observed spread.
    sig = float(np.var(targets))
    return KernelSpec(
        lengthscale=2.0 * float(samples.radius),
        signal_variance=max(sig, 1e-12),
        nugget=1e-10,
    )


def _fit_polynomial(kind, samples: SampleSet) -> SurrogateModel:
    d_center = samples.center_value()
    scale = samples.radius
    U = (samples.points - samples.center[None, :]) / scale
    Phi = _features(kind, U)
    rhs = samples.values - d_center[None, :]
    coef, *_ = np.linalg.lstsq(Phi, rhs, rcond=None)
    return SurrogateModel(
        kind, samples.center, samples.radius, d_center, {"coef": coef, "scale": scale}
    )


def _jitter_samples(samples: SampleSet, problem, seed, evaluator=None) -> SampleSet:
    rng = np.random.default_rng(seed)
    lo, hi = problem.w_bounds()
    pts = samples.points.copy()
    for i in range(pts.shape[0]):
        if np.array_equal(pts[i], samples.center):
            continue
        shift = rng.uniform(-0.05, 0.05, size=pts.shape[1]) * samples.radius
        pts[i] = np.clip(pts[i] + shift, lo, hi)
        pts[i] = np.clip(
            pts[i], samples.center - samples.radius, samples.center + samples.radius
        )
    ev = evaluator or problem.evaluate_blackbox
    values = np.array([ev(pt) for pt in pts])
    cond = _design_condition(SurrogateKind.LINEAR, samples.center, samples.radius, pts)
    return SampleSet(samples.center, samples.radius, pts, values, cond)


def fit(
    kind: SurrogateKind,
    samples: SampleSet,
    problem: GreyBoxProblem,
    kernel: Optional[KernelSpec] = None,
    seed: int = 0,
    evaluator=None,
) -> SurrogateModel:
    """Fit a surrogate of the given kind to the sample set.

    An ill-poised design (condition number beyond 1e8) is jittered once
    (seeded, non-center points only) and refit before raising.
    """
    m = samples.center.size
    if samples.n_points < required_samples(kind, m):
        raise ValueError(
            "%s needs %d sample points, got %d"
            % (kind.value, required_samples(kind, m), samples.n_points)
        )
    if not np.isfinite(samples.design_condition):
        raise IllPoisedDesignError("design condition is not finite")
    if samples.design_condition > CONDITION_LIMIT:
        samples = _jitter_samples(samples, problem, seed, evaluator)
        if samples.design_condition > CONDITION_LIMIT:
            raise IllPoisedDesignError(
                "design condition %.3g beyond limit after jitter" % samples.design_condition
            )

    if kind in (
        SurrogateKind.LINEAR,
        SurrogateKind.QUADRATIC,
        SurrogateKind.SIMPLIFIED_QUADRATIC,
    ):
        return _fit_polynomial(kind, samples)

    d_center = samples.center_value()

    if kind is SurrogateKind.TAYLOR_SERIES:
        grad = problem.blackbox_gradient(samples.center)
        return SurrogateModel(
            kind, samples.center, samples.radius, d_center, {"gradient": grad}
        )

    if kind is SurrogateKind.GAUSSIAN_PROCESS:
        kern = kernel or _default_kernel(samples, samples.values)
        core = _GpCore(samples.points, samples.values, kern, center_targets=True)
        shift = d_center - core.mean(samples.center)
        return SurrogateModel(
            kind, samples.center, samples.radius, d_center, {"core": core, "shift": shift}
        )

    if kind is SurrogateKind.HYBRID:
        grad = problem.blackbox_gradient(samples.center)
        ts_at_pts = d_center[None, :] + (samples.points - samples.center[None, :]) @ grad.T
        residuals = samples.values - ts_at_pts
        kern = kernel or _default_kernel(samples, residuals)
        core = _GpCore(samples.points, residuals, kern, center_targets=True)
        shift = -core.mean(samples.center)  # residual at the center is zero by construction
        return SurrogateModel(
            kind,
            samples.center,
            samples.radius,
            d_center,
            {"core": core, "shift": shift, "gradient": grad},
        )

    raise ValueError("unknown surrogate kind %r" % kind)


def fully_linear_diagnostic(
    model: SurrogateModel,
    problem: GreyBoxProblem,
    sigma: float,
    n_probe: int,
    seed: int = 0,
):
    """Probe the model-accuracy contract: max value error and max gradient
    error over seeded points in the sigma-ball around the model center.

    The gradient term is reported only when the black-box has an analytic
    gradient (NaN otherwise).  Charges black-box calls.  Diagnostic only;
    never gates the solver.
    """
    rng = np.random.default_rng(seed)
    lo, hi = problem.w_bounds()
    val_err = 0.0
    grad_err = np.nan if problem.black.analytic_gradient is None else 0.0
    for _ in range(n_probe):
        w = model.center + rng.uniform(-sigma, sigma, size=model.m)
        w = np.clip(w, lo, hi)
        d_val = problem.evaluate_blackbox(w)
        val_err = max(val_err, float(np.linalg.norm(model.evaluate(w) - d_val)))
        if problem.black.analytic_gradient is not None:
            d_grad = problem.blackbox_gradient(w)
            grad_err = max(
                grad_err, float(np.linalg.norm(model.gradient(w) - d_grad))
            )
    return val_err, grad_err
