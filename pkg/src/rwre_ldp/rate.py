"""Position-level rate function by tilting the passage-time growth curve.

For a rightward velocity xi the rate is the Legendre-type value

    I(xi) = r* - xi * lambda(r*),

where r* makes the tilted walk's stationary drift equal xi. Leftward
velocities go through the reflected environment, velocity zero costs
exactly the criticality threshold, and |xi| beyond the jump reach is
impossible. Between zero and the critical drift the graph continues as the
affine segment anchored at the threshold. A classical one-step Legendre
transform for homogeneous environments rides along as an independent
cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .environment import Environment, JumpLaw, reflect
from .errors import AmbiguousBranchError
from .passage import RcEstimate, estimate_rc, lyapunov
from .tilt import ansatz_measure

R_SATURATION = -40.0  # tilt used for |xi| at the jump reach; error O(e^{2r})

# threshold brackets are deterministic and shared across every velocity query
_rc_cached = lru_cache(maxsize=256)(estimate_rc)

# interior root brackets only need a certified subcritical endpoint, so they
# run off a coarse threshold estimate; the zero-velocity branch, whose value
# IS the threshold, refines to rc_tol
_BRACKET_RC_TOL = 1e-4


def _require_periodic(env: Environment) -> None:
    if env.kind not in ("homogeneous", "periodic"):
        raise ValueError("rate evaluation requires a homogeneous or periodic environment")


@dataclass(frozen=True)
class RateResult:
    """One rate-function evaluation with its construction trail."""

    xi: float
    value: float
    branch: str  # "interior" | "zero" | "affine" | "saturated" | "outside"
    r_star: float  # tilt solving the drift equation (nan off the interior)
    lam_star: float
    slope: float  # dI/dxi = -lambda(r*) on the interior branch
    xi_residual: float
    mirrored: bool  # solved through the reflected environment
    rc: RcEstimate | None


def _drift_at(env: Environment, r: float) -> float:
    return ansatz_measure(env, r).drift


def rate(
    env: Environment,
    xi: float,
    rc_est: RcEstimate | None = None,
    rc_tol: float = 1e-8,
) -> RateResult:
    """Evaluate the rate function at one velocity.

    Interior velocities solve drift(r) = xi by bracketed root finding on the
    monotone drift curve, then assemble r* - xi lambda(r*). The residual of
    the drift equation is reported, not hidden.
    """
    _require_periodic(env)
    b = env.b
    if abs(xi) > b:
        return RateResult(
            xi=xi,
            value=math.inf,
            branch="outside",
            r_star=math.nan,
            lam_star=math.nan,
            slope=math.nan,
            xi_residual=0.0,
            mirrored=False,
            rc=rc_est,
        )
    if xi < 0:
        inner = rate(reflect(env), -xi, rc_est=None, rc_tol=rc_tol)
        return RateResult(
            xi=xi,
            value=inner.value,
            branch=inner.branch,
            r_star=inner.r_star,
            lam_star=inner.lam_star,
            slope=-inner.slope if math.isfinite(inner.slope) else math.nan,
            xi_residual=inner.xi_residual,
            mirrored=True,
            rc=inner.rc,
        )
    if xi < 1e-15:
        rc = rc_est if rc_est is not None else _rc_cached(env, tol=rc_tol)
        return RateResult(
            xi=xi,
            value=rc.value,
            branch="zero",
            r_star=math.nan,
            lam_star=math.nan,
            slope=math.nan,
            xi_residual=0.0,
            mirrored=False,
            rc=rc,
        )
    rc = rc_est if rc_est is not None else _rc_cached(env, tol=max(rc_tol, _BRACKET_RC_TOL))
    hi_base = rc.bracket[0]

    def f(r: float) -> float:
        return _drift_at(env, r) - xi

    # drift decreases from the jump reach toward the critical drift, so
    # bracket from a deep tilt and from just under the threshold
    lo = min(-1.0, hi_base - 1.0)
    while f(lo) <= 0.0 and lo > R_SATURATION:
        lo = max(2.0 * lo, R_SATURATION)
    if f(lo) <= 0.0:
        lam = lyapunov(env, R_SATURATION).value
        return RateResult(
            xi=xi,
            value=R_SATURATION - xi * lam,
            branch="saturated",
            r_star=R_SATURATION,
            lam_star=lam,
            slope=-lam,
            xi_residual=abs(f(R_SATURATION)),
            mirrored=False,
            rc=rc,
        )
    margin = 1e-4
    hi = hi_base - margin
    while hi <= lo:
        margin *= 0.1
        hi = hi_base - margin
    while f(hi) >= 0.0 and margin > 1e-11:
        margin *= 0.1
        hi = hi_base - margin
    if f(hi) >= 0.0:
        # requested velocity below the critical drift: affine continuation
        # from the threshold with the limiting slope; the coarse bracket is
        # too wide to anchor a value, so refine it here
        rc = _rc_cached(env, tol=rc_tol)
        lam_edge = lyapunov(env, hi).value
        affine_value = rc.value - xi * lam_edge
        xi_edge = _drift_at(env, hi)
        if xi > xi_edge * (1.0 + 1e-6) + 1e-12:
            raise AmbiguousBranchError(
                "drift equation lost its bracket near the threshold",
                affine_value=affine_value,
                convex_value=math.nan,
            )
        return RateResult(
            xi=xi,
            value=affine_value,
            branch="affine",
            r_star=math.nan,
            lam_star=lam_edge,
            slope=-lam_edge,
            xi_residual=abs(xi_edge - xi),
            mirrored=False,
            rc=rc,
        )
    r_star = float(brentq(f, lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=300))
    lam_star = lyapunov(env, r_star).value
    return RateResult(
        xi=xi,
        value=r_star - xi * lam_star,
        branch="interior",
        r_star=r_star,
        lam_star=lam_star,
        slope=-lam_star,
        xi_residual=abs(f(r_star)),
        mirrored=False,
        rc=rc,
    )


@dataclass(frozen=True, eq=False)
class RateCurve:
    env: Environment
    xi_grid: tuple[float, ...]
    results: tuple[RateResult, ...]
    convex_ok: bool
    min_value: float
    argmin: float

    def rows(self):
        """(xi, value, r_star, branch, slope) per grid point."""
        return [
            (res.xi, res.value, res.r_star, res.branch, res.slope)
            for res in self.results
        ]


def rate_curve(env: Environment, xi_grid, rc_tol: float = 1e-8) -> RateCurve:
    """Evaluate the rate on a velocity grid, reusing one threshold estimate
    per direction, and check convexity along the finite part."""
    _require_periodic(env)
    rc_left_env = reflect(env)
    results = []
    for xi in xi_grid:
        xi = float(xi)
        if xi >= 0:
            results.append(rate(env, xi, rc_tol=rc_tol))
        else:
            inner = rate(rc_left_env, -xi, rc_tol=rc_tol)
            results.append(
                RateResult(
                    xi=xi,
                    value=inner.value,
                    branch=inner.branch,
                    r_star=inner.r_star,
                    lam_star=inner.lam_star,
                    slope=-inner.slope if math.isfinite(inner.slope) else math.nan,
                    xi_residual=inner.xi_residual,
                    mirrored=True,
                    rc=inner.rc,
                )
            )
    fin = [(res.xi, res.value) for res in results if math.isfinite(res.value)]
    convex = True
    for (x0, v0), (x1, v1), (x2, v2) in zip(fin, fin[1:], fin[2:]):
        s01 = (v1 - v0) / (x1 - x0)
        s12 = (v2 - v1) / (x2 - x1)
        if s12 < s01 - 1e-7:
            convex = False
    vals = [v for _, v in fin]
    k = int(np.argmin(vals)) if vals else 0
    return RateCurve(
        env=env,
        xi_grid=tuple(float(x) for x in xi_grid),
        results=tuple(results),
        convex_ok=convex,
        min_value=vals[k] if vals else math.nan,
        argmin=fin[k][0] if fin else math.nan,
    )


@dataclass(frozen=True)
class XiCritical:
    """Critical drift: the tilted speed in the limit toward the threshold,
    extrapolated in sqrt(distance) to soak up the square-root branch point."""

    value: float
    samples: tuple[tuple[float, float], ...]  # (distance, drift)
    quality: float  # spread of the raw samples; small means flat approach


def xi_critical(env: Environment, rc_est: RcEstimate | None = None) -> XiCritical:
    _require_periodic(env)
    rc = rc_est if rc_est is not None else _rc_cached(env)
    base = rc.bracket[0]
    ds = (1e-3, 1e-4)
    xis = [_drift_at(env, base - d) for d in ds]
    s = [math.sqrt(d) for d in ds]
    a = (xis[0] - xis[1]) / (s[0] - s[1])
    value = max(0.0, xis[1] - a * s[1])
    return XiCritical(
        value=value,
        samples=tuple(zip(ds, xis)),
        quality=abs(xis[0] - xis[1]),
    )


def cramer_oracle(law: JumpLaw, xi: float) -> float:
    """Independent check for homogeneous environments: the one-step Legendre
    transform sup_s [s xi - log sum_z p(z) e^{s z}]."""
    zs = np.array([z for z, _ in law.probs], dtype=float)
    ps = np.array([p for _, p in law.probs])
    if xi > zs.max() or xi < zs.min():
        return math.inf
    if xi == zs.max():
        return -math.log(ps[np.argmax(zs)])
    if xi == zs.min():
        return -math.log(ps[np.argmin(zs)])

    def neg_dual(s: float) -> float:
        m = np.max(s * zs)
        return -(s * xi - (m + math.log(float(np.exp(s * zs - m) @ ps))))

    res = minimize_scalar(neg_dual, bounds=(-60.0, 60.0), method="bounded",
                          options={"xatol": 1e-14})
    return float(-res.fun)


@dataclass(frozen=True)
class SymmetryGap:
    """I(xi) - I(-xi) against the skew predicted by the log odds of the
    unit jumps; the defect vanishes for nearest-neighbor environments."""

    xi: float
    gap: float
    predicted: float
    defect: float


def symmetry_gap(env: Environment, xi: float, rc_tol: float = 1e-8) -> SymmetryGap:
    _require_periodic(env)
    right = rate(env, abs(xi), rc_tol=rc_tol)
    left = rate(env, -abs(xi), rc_tol=rc_tol)
    log_odds = float(
        np.mean([math.log(law.prob(-1) / law.prob(1)) for law in env.laws])
    )
    gap = right.value - left.value
    predicted = abs(xi) * log_odds
    return SymmetryGap(
        xi=abs(xi), gap=gap, predicted=predicted, defect=abs(gap - predicted)
    )


@dataclass(frozen=True)
class AsymmetryDemo:
    """Direction gap of the growth curve on an r grid; constant for
    nearest-neighbor environments, genuinely r-dependent beyond them."""

    rs: tuple[float, ...]
    gaps: tuple[float, ...]
    variation: float


def asymmetry_demo(env: Environment, rs) -> AsymmetryDemo:
    from .passage import lyapunov_bar

    _require_periodic(env)
    gaps = []
    for r in rs:
        r = float(r)
        gaps.append(lyapunov_bar(env, r).value - lyapunov(env, r).value)
    return AsymmetryDemo(
        rs=tuple(float(r) for r in rs),
        gaps=tuple(gaps),
        variation=max(gaps) - min(gaps),
    )
