"""Passage-time moment generating functions and their Lyapunov exponents.

For a walk in environment omega started at x, the level-n passage time
tau_n is the first time the walk reaches [n, n+B). The truncated MGF

    h(x) = E_x[exp(r tau_n); tau_n finite, walk stays above -M]

solves a fixed-point equation h = T h with T the one-step transfer
operator, h pinned to 1 on [n, n+B) and to 0 below -M. Everything in this
module is built from that object: harmonic ratios u_r(x, z), the
exponential growth rate lambda(r) of the MGF per level, its left-passage
mirror, the criticality threshold r_c where the MGF stops being finite,
and the characteristic-polynomial shortcut available in the homogeneous
case.

All fixed-point work is done on log h to avoid underflow across long
windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .environment import Environment, law_at, offsets, reflect
from .errors import (
    DriftMismatchError,
    SlowConvergenceError,
    SupercriticalError,
    WindowExhaustedError,
)

NEG_INF = -np.inf


def contraction_rate(env: Environment, r: float) -> float:
    """Geometric rate certificate c(r) = (1 - (delta e^r)^{2B})^{1/B} for the
    stabilization of harmonic ratios in the level n. Valid for delta e^r < 1;
    close to 1 in any interesting regime, so it is used as a schedule hint
    rather than a stopping rule."""
    eps = env.delta * math.exp(r)
    if eps >= 1.0:
        return 1.0
    return (1.0 - eps ** (2 * env.b)) ** (1.0 / env.b)


def _log_rows(env: Environment, x_lo: int, x_hi: int, r: float) -> np.ndarray:
    """log(prob) + r per site x in [x_lo, x_hi) and offset, -inf off support."""
    b = env.b
    out = np.full((x_hi - x_lo, 2 * b), NEG_INF)
    if env.kind == "iid":
        lo, hi = env.window
        if x_lo < lo or x_hi - 1 > hi:
            raise WindowExhaustedError(
                f"need laws on [{x_lo}, {x_hi - 1}] but window is [{lo}, {hi}]; widen the window"
            )
    for x in range(x_lo, x_hi):
        arr = env.laws[env.site_class(x)].as_array()
        with np.errstate(divide="ignore"):
            out[x - x_lo] = np.where(arr > 0, np.log(np.maximum(arr, 1e-300)) + r, NEG_INF)
    return out


@dataclass(frozen=True, eq=False)
class MgfSolve:
    """Truncated passage-time MGF on sites [-m_trunc, level + b)."""

    r: float
    level: int
    m_trunc: int
    b: int
    log_h: np.ndarray  # indexed by x + m_trunc, length m_trunc + level + b
    iterations: int
    converged: bool
    sup_update: float
    status: str  # "converged" | "max-iter" | "supercritical-or-diverged"
    err_bound: float  # left-truncation bound; nan when r >= 0

    def log_h_at(self, x: int) -> float:
        i = x + self.m_trunc
        if i < 0:
            return NEG_INF
        if i >= len(self.log_h):
            raise IndexError(f"site {x} outside solve range")
        return float(self.log_h[i])

    def h_at(self, x: int) -> float:
        return float(math.exp(self.log_h_at(x))) if np.isfinite(self.log_h_at(x)) else 0.0

    @property
    def h(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_h)


def default_m_trunc(env: Environment, r: float, level: int, tol: float = 1e-12) -> int:
    """Left-truncation depth: the certificate value when affordable, else a
    proportional fallback. The certificate rate is so close to 1 for small
    delta e^r that honoring it literally would demand windows of 1e5+ sites;
    callers that need certified truncation error grow m explicitly."""
    c = contraction_rate(env, r)
    cap = max(4 * level, 256)
    if c < 1.0:
        cert = level + int(math.ceil(math.log(tol) / math.log(c)))
        if 0 < cert <= cap:
            return cert
    return cap


def hit_mgf(
    env: Environment,
    r: float,
    level: int,
    m_trunc: int | None = None,
    tol: float = 1e-12,
    max_iter: int | None = None,
    warm: MgfSolve | None = None,
) -> MgfSolve:
    """Monotone fixed-point solve for the truncated passage-time MGF.

    Starts from the indicator of the target slab (or from a previous solve)
    and applies the transfer operator until the sup-norm update falls below
    tol. Cold starts increase pointwise at every step. Divergence is
    declared when any site exceeds a rigorous envelope for subcritical
    values, or when updates keep growing over 50 consecutive sweeps.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    b = env.b
    if m_trunc is None:
        m_trunc = default_m_trunc(env, r, level, tol)
    if max_iter is None:
        max_iter = max(20_000, 40 * (m_trunc + level))
    lp = _log_rows(env, -m_trunc, level, r)  # interior sites only
    W = m_trunc + level
    pad = b
    logh = np.full(pad + W + b, NEG_INF)
    logh[pad + W:] = 0.0  # target slab [level, level+b)
    if warm is not None:
        # copy overlapping interior values; safe because the fixed point is
        # unique in the subcritical box and iterates stay sandwiched
        for x in range(max(-warm.m_trunc, -m_trunc), min(warm.level, level)):
            logh[pad + x + m_trunc] = warm.log_h[x + warm.m_trunc]

    # envelope: true subcritical values satisfy h(x) <= (delta e^r)^{-B(level-x)}
    # (and h <= 1 when r <= 0); crossing it certifies divergence
    xs = np.arange(-m_trunc, level)
    log_eps = math.log(env.delta) + r
    if r <= 0:
        cap = np.full(W, 1e-6)
    else:
        cap = b * (level - xs) * (-log_eps) + math.log(10.0)

    offs = offsets(b)
    sup_hist: list[float] = []
    status = "max-iter"
    converged = False
    sup = math.inf
    it = 0
    interior = slice(pad, pad + W)
    while it < max_iter:
        it += 1
        cands = np.empty((2 * b, W))
        for j, z in enumerate(offs):
            cands[j] = lp[:, j] + logh[pad + z: pad + z + W]
        new = np.logaddexp.reduce(cands, axis=0)
        old = logh[interior]
        with np.errstate(invalid="ignore"):
            diff = np.abs(new - old)
        newly_finite = np.isfinite(new) & ~np.isfinite(old)
        diff = np.where(np.isfinite(diff), diff, 0.0)
        sup = math.inf if newly_finite.any() else float(diff.max(initial=0.0))
        logh[interior] = new
        if sup <= tol:
            status = "converged"
            converged = True
            break
        if it % 16 == 0 and bool(np.any(new > cap)):
            status = "supercritical-or-diverged"
            break
        sup_hist.append(sup)
        if len(sup_hist) >= 51 and math.isfinite(sup):
            last = sup_hist[-51:]
            if all(l2 >= l1 for l1, l2 in zip(last, last[1:])) and sup > 1e3 * tol:
                status = "supercritical-or-diverged"
                break

    if r < 0:
        # paths killed at -m_trunc must cross the window down and up again:
        # at least 2 m_trunc / B extra steps, each weighted e^r
        err = math.exp(2.0 * r * m_trunc / b) / (1.0 - math.exp(r))
    else:
        err = math.nan
    return MgfSolve(
        r=r,
        level=level,
        m_trunc=m_trunc,
        b=b,
        log_h=logh[pad:],
        iterations=it,
        converged=converged,
        sup_update=sup,
        status=status,
        err_bound=err,
    )


@dataclass(frozen=True)
class BruteMgf:
    value: float
    tail_bound: float
    max_len: int


def brute_mgf(env: Environment, r: float, level: int, max_len: int) -> BruteMgf:
    """Exact finite-horizon passage-time MGF by exhaustive path weight
    propagation: sum of e^{r k} P(tau_level = k) over k <= max_len, plus the
    rigorous geometric tail bound e^{r max_len} / (1 - e^r). Requires r < 0
    so that the tail is summable."""
    if r >= 0:
        raise ValueError("brute-force oracle needs r < 0")
    b = env.b
    lo = -b * max_len - 1
    probs = {}

    def row(x: int) -> np.ndarray:
        if x not in probs:
            probs[x] = env.laws[env.site_class(x)].as_array()
        return probs[x]

    offs = offsets(b)
    size = level - lo
    mass = np.zeros(size)
    mass[-lo] = 1.0
    total = 0.0
    for k in range(1, max_len + 1):
        new = np.zeros(size)
        hit = 0.0
        nz = np.nonzero(mass)[0]
        for i in nz:
            x = i + lo
            pr = row(x)
            for j, z in enumerate(offs):
                if pr[j] == 0.0:
                    continue
                y = x + int(z)
                w = mass[i] * pr[j]
                if y >= level:
                    hit += w
                elif y >= lo:
                    new[y - lo] += w
        total += math.exp(r * k) * hit
        mass = new
        if not mass.any():
            break
    tail = math.exp(r * max_len) / (1.0 - math.exp(r))
    return BruteMgf(value=total, tail_bound=tail, max_len=max_len)


# ---------------------------------------------------------------------------
# nearest-neighbor recursion


@dataclass(frozen=True, eq=False)
class ZetaSolve:
    """Per-class one-level passage MGFs zeta(x) = E_x[e^{r tau_{x+1}}] for
    nearest-neighbor environments."""

    r: float
    zeta: np.ndarray
    cycles: int
    residual: float
    converged: bool
    spread: np.ndarray  # window mode: per-site bracketing-seed disagreement
    edge_spread: float  # spread over the right half, where it has contracted


def zeta_nn(
    env: Environment, r: float, tol: float = 1e-15, max_cycles: int = 2_000_000
) -> ZetaSolve:
    """One-level passage MGFs for B = 1 via the forward recursion

        zeta(x) = p(x) e^r / (1 - q(x) e^r zeta(x-1)).

    Periodic environments iterate the cycle to its minimal fixed point;
    a nonpositive denominator or unbounded growth signals a supercritical
    tilt. Window environments run the recursion twice from bracketing
    seeds and report the residual spread at the window's left edge.
    """
    if env.b != 1:
        raise ValueError("zeta recursion requires nearest-neighbor jumps")
    e = math.exp(r)
    if env.kind in ("homogeneous", "periodic"):
        L = env.period
        p = np.array([law.prob(1) for law in env.laws])
        q = np.array([law.prob(-1) for law in env.laws])
        zeta = np.zeros(L)
        upper = 1.0 if r <= 0 else 1.0 / (env.delta * e)
        cycles = 0
        prev = zeta.copy()
        while cycles < max_cycles:
            cycles += 1
            for i in range(L):
                den = 1.0 - q[i] * e * zeta[(i - 1) % L]
                if den <= 0.0:
                    raise SupercriticalError(
                        f"zeta recursion denominator {den} <= 0 at class {i}",
                        r=r,
                        diagnostics={"cycles": cycles, "class": i},
                    )
                zeta[i] = p[i] * e / den
            if np.any(zeta > 1.01 * upper):
                raise SupercriticalError(
                    "zeta recursion exceeded its subcritical bound",
                    r=r,
                    diagnostics={"cycles": cycles, "max_zeta": float(zeta.max())},
                )
            change = float(np.max(np.abs(zeta - prev)))
            if change <= tol:
                break
            prev = zeta.copy()
        resid = 0.0
        for i in range(L):
            resid = max(
                resid,
                abs(p[i] * e / zeta[i] + q[i] * e * zeta[(i - 1) % L] - 1.0),
            )
        return ZetaSolve(
            r=r,
            zeta=zeta,
            cycles=cycles,
            residual=resid,
            converged=change <= tol,
            spread=np.zeros(L),
            edge_spread=0.0,
        )

    lo, hi = env.window
    upper_seed = 1.0 if r <= 0 else 1.0 / (env.delta * e)
    runs = []
    for seed in (0.0, upper_seed):
        z_prev = seed
        vals = np.empty(hi - lo + 1)
        for k, x in enumerate(range(lo, hi + 1)):
            law = law_at(env, x)
            den = 1.0 - law.prob(-1) * e * z_prev
            if den <= 0.0:
                raise SupercriticalError(
                    f"zeta recursion denominator {den} <= 0 at site {x}", r=r
                )
            z_prev = law.prob(1) * e / den
            vals[k] = z_prev
        runs.append(vals)
    spread = np.abs(runs[0] - runs[1])
    edge = float(spread[len(spread) // 2:].max())
    return ZetaSolve(
        r=r,
        zeta=runs[0],
        cycles=1,
        residual=edge,
        converged=True,
        spread=spread,
        edge_spread=edge,
    )


# ---------------------------------------------------------------------------
# harmonic ratio system for periodic environments
#
# theta_i = log u_r(T_i omega, 1). Row-stochasticity of the tilted kernel
# gives one equation per class:
#   Phi_i(theta) = sum_z pi_i(z) exp(r + S_iz(theta)) - 1 = 0,
# with S_iz the signed partial sums of theta along the jump.


@lru_cache(maxsize=256)
def _law_terms(env: Environment):
    """Per class: list of (prob, z, wrapped index tuple, sign)."""
    L = env.period
    out = []
    for i in range(L):
        terms = []
        for z, pz in env.laws[i].probs:
            if z > 0:
                ks = tuple((i + k) % L for k in range(z))
                sgn = 1.0
            else:
                ks = tuple((i - k) % L for k in range(1, -z + 1))
                sgn = -1.0
            terms.append((pz, z, ks, sgn))
        out.append(terms)
    return out


def _ratio_residual(env: Environment, r: float, theta: np.ndarray):
    L = len(theta)
    Phi = np.zeros(L)
    J = np.zeros((L, L))
    for i, terms in enumerate(_law_terms(env)):
        for pz, z, ks, sgn in terms:
            s = sum(theta[k] for k in ks)
            t = pz * math.exp(r + sgn * s)
            Phi[i] += t
            for k in ks:
                J[i, k] += sgn * t
        Phi[i] -= 1.0
    return Phi, J


def _newton_ratios(
    env: Environment, r: float, theta0: np.ndarray, tol: float = 1e-14, max_iter: int = 40
):
    theta = theta0.astype(float).copy()
    bound = -(math.log(env.delta) + r) + 1e-6  # |log u(.,1)| <= -log(delta e^r)
    res = math.inf
    best = math.inf
    worse = 0
    for _ in range(max_iter):
        Phi, J = _ratio_residual(env, r, theta)
        res = float(np.max(np.abs(Phi)))
        if res <= tol:
            return theta, res, True
        if res > 10.0 * best:
            worse += 1
            if worse >= 2:  # residual blowing up: no solution nearby
                return theta, res, False
        else:
            worse = 0
        best = min(best, res)
        try:
            step = np.linalg.solve(J, Phi)
        except np.linalg.LinAlgError:
            return theta, res, False
        ns = float(np.max(np.abs(step)))
        if ns > 2.0:
            step *= 2.0 / ns
        theta = theta - step
        if np.max(np.abs(theta)) > 4 * bound + 10:
            return theta, res, False
    Phi, _ = _ratio_residual(env, r, theta)
    res = float(np.max(np.abs(Phi)))
    return theta, res, res <= tol


def _vi_seed_at(env: Environment, r: float, n: int) -> np.ndarray:
    """Per-class log-ratio estimates from one value-iteration box of size n.
    Raises SupercriticalError when the box certifies divergence."""
    L = env.period
    b = env.b
    # seeds only need zone ratios, which stabilize within a few multiples of
    # the box width; full convergence is the polish's job
    sol = hit_mgf(env, r, level=n, m_trunc=n, tol=1e-7, max_iter=8 * 2 * n + 400)
    if sol.status == "supercritical-or-diverged":
        raise SupercriticalError(
            "value iteration certifies divergence",
            r=r,
            diagnostics={"level": n, "iterations": sol.iterations},
        )
    # ratios in a zone centered at 0, far from both boundaries
    span = L * max(1, (4 * b + L - 1) // L + 1)
    sums = np.zeros(L)
    counts = np.zeros(L)
    for x in range(-span, span):
        la = sol.log_h_at(x + 1) - sol.log_h_at(x)
        if math.isfinite(la):
            sums[x % L] += la
            counts[x % L] += 1
    return sums / np.maximum(counts, 1)


# solved anchors per environment, reused as warm starts by nearby tilts
_RATIO_ANCHORS: dict[Environment, list[tuple[float, tuple[float, ...]]]] = {}


def _record_anchor(env: Environment, r: float, theta: np.ndarray) -> None:
    lst = _RATIO_ANCHORS.setdefault(env, [])
    lst.append((r, tuple(float(t) for t in theta)))
    if len(lst) > 400:
        lst.sort()
        del lst[::2]  # thin, keeping the spread


def _nearest_anchor(env: Environment, r: float, below: bool):
    cands = _RATIO_ANCHORS.get(env, [])
    if below:
        cands = [(ar, th) for ar, th in cands if ar <= r]
    if not cands:
        return None
    return min(cands, key=lambda item: abs(item[0] - r))


def _sane(env: Environment, r: float, theta: np.ndarray) -> bool:
    bound = -(math.log(env.delta) + r)
    return bool(np.max(np.abs(theta)) <= bound + 1e-8)


@lru_cache(maxsize=512)
def _theta_cached(env: Environment, r: float) -> tuple[tuple[float, ...], float, float, int, int]:
    """Polished per-class log ratios for periodic environments.

    Returns (theta, residual, seed_gap, n_used, m_used). Strategy: zeta
    recursion for B=1; otherwise Newton from the nearest solved anchor or a
    value-iteration seed, with anchored continuation as the near-critical
    fallback.
    """
    if env.b == 1:
        zs = zeta_nn(env, r)
        theta = -np.log(zs.zeta)
        theta, res, ok = _newton_ratios(env, r, theta)
        if not ok:
            raise SlowConvergenceError(
                f"ratio polish failed at r={r}", diagnostics={"residual": res}
            )
        return tuple(theta), res, zs.residual, zs.cycles, 0

    near = _nearest_anchor(env, r, below=False)
    if near is not None and abs(near[0] - r) <= 0.25:
        theta, res, ok = _newton_ratios(env, r, np.array(near[1]))
        if ok and _sane(env, r, theta):
            _record_anchor(env, r, theta)
            return tuple(theta), res, abs(near[0] - r), 0, 0

    # the seed only needs to land in the Newton basin; precision comes from
    # the polish, so the boxes stay small and loose
    seed_tol = 1e-4
    n = max(16, 4 * env.b * env.period)
    prev = None
    gap = math.inf
    while n <= 256:
        seed = _vi_seed_at(env, r, n)
        if prev is not None:
            gap = float(np.max(np.abs(seed - prev)))
        theta, res, ok = _newton_ratios(env, r, seed)
        lam_seed = -float(np.mean(seed))
        lam_pol = -float(np.mean(theta))
        scale = gap if math.isfinite(gap) else seed_tol
        if (
            ok
            and _sane(env, r, theta)
            and abs(lam_pol - lam_seed) <= max(10 * max(scale, seed_tol), 1e-3)
        ):
            _record_anchor(env, r, theta)
            return tuple(theta), res, scale, n, n
        prev = seed
        n *= 2
    # near-critical fallback: walk the solution in from a safely subcritical
    # tilt, halving the step on failure; no real solution exists past the
    # critical tilt, so stalling certifies supercriticality
    anchor = _nearest_anchor(env, r, below=True)
    if anchor is None:
        anchor_r = math.floor((r - 0.5) * 8.0) / 8.0
        cur_theta = np.array(_theta_cached(env, anchor_r)[0])
    else:
        anchor_r = anchor[0]
        cur_theta = np.array(anchor[1])
    cur_r = anchor_r
    floor = 1e-13 * max(1.0, abs(r))
    while cur_r < r:
        step = r - cur_r
        ok = False
        while step >= floor:
            trial, res, ok = _newton_ratios(env, cur_r + step, cur_theta)
            if ok and _sane(env, cur_r + step, trial):
                break
            ok = False
            step *= 0.5
        if not ok:
            raise SupercriticalError(
                "ratio continuation stalled; no subcritical solution at this tilt",
                r=r,
                diagnostics={"reached": cur_r, "residual": res},
            )
        cur_r = cur_r + step
        cur_theta = trial
        _record_anchor(env, cur_r, cur_theta)
    return tuple(cur_theta), res, gap, 256, 256


@dataclass(frozen=True, eq=False)
class ULimit:
    """Stabilized harmonic ratios u_r(T_x omega, z).

    For periodic environments rows are indexed by site class and the values
    solve the row-stochasticity system exactly (to `residual`); for window
    environments rows are ratios of one large truncated solve and carry an
    observed Cauchy gap instead.
    """

    env: Environment
    r: float
    mode: str  # "periodic-exact" | "window"
    sites: tuple[int, ...]  # classes (periodic) or absolute sites (window)
    log_u: np.ndarray  # shape (len(sites), 2B)
    n_used: int
    m_used: int
    cauchy_gap: float
    residual: float
    contraction: float

    @property
    def b(self) -> int:
        return self.env.b

    def _row(self, x: int) -> int:
        if self.mode == "periodic-exact":
            return x % len(self.sites)
        i = x - self.sites[0]
        if not (0 <= i < len(self.sites)):
            raise WindowExhaustedError(f"site {x} outside stabilized range {self.sites[0]}..{self.sites[-1]}")
        return i

    def log_u_at(self, x: int, z: int) -> float:
        offs = offsets(self.b)
        j = int(np.where(offs == z)[0][0])
        return float(self.log_u[self._row(x), j])

    def u_at(self, x: int, z: int) -> float:
        return math.exp(self.log_u_at(x, z))

    @property
    def log_a(self) -> np.ndarray:
        """log u(., +1) per row."""
        offs = offsets(self.b)
        j = int(np.where(offs == 1)[0][0])
        return self.log_u[:, j]


def _theta_to_log_u(theta: np.ndarray, b: int) -> np.ndarray:
    L = len(theta)
    offs = offsets(b)
    out = np.zeros((L, 2 * b))
    for i in range(L):
        for j, z in enumerate(offs):
            z = int(z)
            if z > 0:
                out[i, j] = sum(theta[(i + k) % L] for k in range(z))
            else:
                out[i, j] = -sum(theta[(i - k) % L] for k in range(1, -z + 1))
    return out


def u_limit(
    env: Environment,
    r: float,
    tol: float = 1e-10,
    site_range: tuple[int, int] | None = None,
) -> ULimit:
    """Harmonic ratios in the stabilized (large-level) limit.

    Periodic and homogeneous environments get the exactly-periodic solution;
    sampled windows get finite-level ratios with a doubling-based gap
    estimate over `site_range` (defaults to the widest range the window
    supports).
    """
    if env.kind in ("homogeneous", "periodic"):
        theta_t, res, gap, n_used, m_used = _theta_cached(env, r)
        theta = np.array(theta_t)
        log_u = _theta_to_log_u(theta, env.b)
        bound = -(math.log(env.delta) + r)
        if float(np.max(np.abs(theta))) > bound + 1e-8:
            raise SlowConvergenceError(
                "stabilized ratios violate their ellipticity bounds",
                diagnostics={"max_log_ratio": float(np.max(np.abs(theta))), "bound": bound},
            )
        return ULimit(
            env=env,
            r=r,
            mode="periodic-exact",
            sites=tuple(range(env.period)),
            log_u=log_u,
            n_used=n_used,
            m_used=m_used,
            cauchy_gap=gap,
            residual=res,
            contraction=contraction_rate(env, r),
        )

    lo, hi = env.window
    b = env.b
    if site_range is None:
        site_range = (lo + b, hi - 2 * b)
    s_lo, s_hi = site_range
    if s_hi < s_lo:
        raise WindowExhaustedError(
            f"window [{lo}, {hi}] too narrow for any stabilized site; widen the window"
        )
    level = hi + 1
    m = -lo
    full = hit_mgf(env, r, level=level, m_trunc=m, tol=min(tol, 1e-12))
    if full.status == "supercritical-or-diverged":
        raise SupercriticalError("window solve diverged", r=r)
    half = hit_mgf(env, r, level=max(s_hi + b + 1, level // 2), m_trunc=m, tol=min(tol, 1e-12))
    offs = offsets(b)
    sites = tuple(range(s_lo, s_hi + 1))
    log_u = np.zeros((len(sites), 2 * b))
    gap = 0.0
    for i, x in enumerate(sites):
        for j, z in enumerate(offs):
            log_u[i, j] = full.log_h_at(x + int(z)) - full.log_h_at(x)
            other = half.log_h_at(x + int(z)) - half.log_h_at(x)
            if math.isfinite(other):
                gap = max(gap, abs(log_u[i, j] - other))
    return ULimit(
        env=env,
        r=r,
        mode="window",
        sites=sites,
        log_u=log_u,
        n_used=full.level,
        m_used=m,
        cauchy_gap=gap,
        residual=math.nan,
        contraction=contraction_rate(env, r),
    )


# ---------------------------------------------------------------------------
# Lyapunov exponents


@dataclass(frozen=True)
class LambdaSample:
    """One point of the Lyapunov curve with its convergence diagnostics."""

    r: float
    value: float
    converged: bool
    n_used: int
    m_used: int
    se: float  # sampling spread for window averages; 0 for periodic solves
    status: str = "ok"


def lyapunov(env: Environment, r: float, tol: float = 1e-10) -> LambdaSample:
    """Exponential growth rate per level of the right-passage MGF.

    Periodic environments average -log u(., +1) over one period, which is
    exact for the stabilized ratios. Window environments average over the
    window interior and report a standard error. Supercritical tilts yield
    +inf with converged=False.
    """
    try:
        ul = u_limit(env, r, tol=tol)
    except SupercriticalError:
        return LambdaSample(
            r=r, value=math.inf, converged=False, n_used=0, m_used=0, se=math.nan,
            status="supercritical",
        )
    la = ul.log_a
    if ul.mode == "periodic-exact":
        return LambdaSample(
            r=r,
            value=float(-np.mean(la)),
            converged=ul.residual <= max(1e-12, tol),
            n_used=ul.n_used,
            m_used=ul.m_used,
            se=0.0,
        )
    se = float(np.std(la) / math.sqrt(len(la))) if len(la) > 1 else math.nan
    return LambdaSample(
        r=r,
        value=float(-np.mean(la)),
        converged=ul.cauchy_gap <= max(tol, 1e-3),
        n_used=ul.n_used,
        m_used=ul.m_used,
        se=se,
    )


def lyapunov_bar(env: Environment, r: float, tol: float = 1e-10) -> LambdaSample:
    """Left-passage growth rate: the right-passage rate of the reflected
    environment."""
    return lyapunov(reflect(env), r, tol=tol)


@dataclass(frozen=True)
class LambdaPrime:
    """Slope of the Lyapunov curve by two routes."""

    r: float
    value: float
    fd_value: float
    chain_value: float  # nan when no stationary-chain route exists
    gap: float
    h_step: float


def lyapunov_prime(
    env: Environment,
    r: float,
    h_step: float = 1e-5,
    gate: float = 1e-4,
) -> LambdaPrime:
    """d lambda / d r at a subcritical tilt.

    Method 1 is a central finite difference of the Lyapunov curve. Method 2,
    available for periodic environments, is the reciprocal speed of the
    tilted walk's stationary chain. The two must agree within `gate`
    (relative); the slope is always >= 1/B.
    """
    lo = lyapunov(env, r - h_step)
    hi = lyapunov(env, r + h_step)
    if not (math.isfinite(lo.value) and math.isfinite(hi.value)):
        raise SupercriticalError("finite-difference stencil crosses the critical tilt", r=r)
    fd = (hi.value - lo.value) / (2 * h_step)
    chain = math.nan
    if env.kind in ("homogeneous", "periodic"):
        from . import tilt  # deferred: tilt builds on this module

        chain = 1.0 / tilt.stationary_speed(env, r)
    value = chain if math.isfinite(chain) else fd
    gap = abs(fd - chain) if math.isfinite(chain) else math.nan
    if math.isfinite(gap) and gap > gate * max(1.0, abs(value)):
        raise DriftMismatchError(
            f"slope methods disagree: fd={fd!r} chain={chain!r}", drift=1.0 / chain,
            reciprocal_slope=1.0 / fd,
        )
    if value < 1.0 / env.b - 1e-9:
        raise SlowConvergenceError(
            f"slope {value} below its floor 1/B={1.0 / env.b}",
            diagnostics={"fd": fd, "chain": chain},
        )
    return LambdaPrime(r=r, value=value, fd_value=fd, chain_value=chain, gap=gap, h_step=h_step)


# ---------------------------------------------------------------------------
# criticality


@dataclass(frozen=True)
class RcEstimate:
    """Bisection bracket for the largest tilt with finite MGF growth."""

    bracket: tuple[float, float]
    bracket_reflected: tuple[float, float]
    tol: float
    predicate: str
    evaluations: int

    @property
    def value(self) -> float:
        return 0.5 * (self.bracket[0] + self.bracket[1])

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    @property
    def reflect_gap(self) -> float:
        mid_bar = 0.5 * (self.bracket_reflected[0] + self.bracket_reflected[1])
        return abs(self.value - mid_bar)


def _subcritical_predicate(env: Environment):
    """Returns (callable r -> bool, label). True means finite growth."""
    if env.kind in ("homogeneous", "periodic"):
        if env.b == 1:
            def pred(r: float) -> bool:
                try:
                    zeta_nn(env, r, tol=1e-13, max_cycles=200_000)
                    return True
                except SupercriticalError:
                    return False
            return pred, "zeta-cycle"

        def pred(r: float) -> bool:
            try:
                _theta_cached(env, r)
                return True
            except SupercriticalError:
                return False
        return pred, "ratio-continuation"

    lo, hi = env.window

    def pred(r: float) -> bool:
        sol = hit_mgf(env, r, level=hi + 1, m_trunc=-lo, tol=1e-10)
        return sol.status != "supercritical-or-diverged"

    return pred, "window-box"


def _bisect_rc(env: Environment, tol: float) -> tuple[tuple[float, float], int]:
    pred, _ = _subcritical_predicate(env)
    lo = -1e-9  # finite growth is guaranteed at r <= 0
    hi = -math.log(env.delta) + 1e-9
    evals = 0
    if not pred(lo):
        return (lo, lo), 1
    if pred(hi):
        return (hi, hi), 2
    evals = 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        evals += 1
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return (lo, hi), evals


def estimate_rc(env: Environment, tol: float | None = None) -> RcEstimate:
    """Bracket the critical tilt by bisection between 0 and -log(delta).

    The subcriticality predicate matches the stabilized-ratio pipeline:
    cycle recursion for nearest-neighbor, continuation of the ratio system
    otherwise, box divergence for sampled windows (whose bracket carries a
    small upward bias from the finite box; widen the window to shrink it).
    The same bisection runs on the reflected environment; the two midpoints
    estimate the same threshold.
    """
    if tol is None:
        tol = 1e-6 if env.kind in ("homogeneous", "periodic") else 1e-3
    _, label = _subcritical_predicate(env)
    bracket, e1 = _bisect_rc(env, tol)
    bracket_bar, e2 = _bisect_rc(reflect(env), tol)
    return RcEstimate(
        bracket=bracket,
        bracket_reflected=bracket_bar,
        tol=tol,
        predicate=label,
        evaluations=e1 + e2,
    )


# ---------------------------------------------------------------------------
# homogeneous characteristic polynomial


@dataclass(frozen=True, eq=False)
class CharPolyResult:
    """Positive roots of the homogeneous transfer polynomial
    sum_z p(z) e^r x^{z+B} - x^B and the growth rates they encode."""

    r: float
    coefficients: np.ndarray  # degree 2B, index k holds the x^k coefficient
    positive_roots: tuple[float, ...]
    x_right: float | None  # root > 1: right-passage rate is -log x_right
    x_left: float | None  # root < 1: left-passage rate is +log x_left
    residuals: tuple[float, ...]

    @property
    def lambda_right(self) -> float:
        return -math.log(self.x_right) if self.x_right else math.inf

    @property
    def lambda_left(self) -> float:
        return math.log(self.x_left) if self.x_left else math.inf


def _poly_eval(coeff: np.ndarray, x: float) -> float:
    # Horner on a scaled argument keeps the scan stable for x up to 2/(delta e^r)
    acc = 0.0
    for c in coeff[::-1]:
        acc = acc * x + c
    return acc


def char_poly_roots(
    env: Environment, r: float, lam_hint: float | None = None
) -> CharPolyResult:
    """Bracketed root scan of the homogeneous transfer polynomial, r < 0.

    At most two positive roots exist (the coefficient list has exactly two
    sign changes), one on each side of 1 in the subcritical regime. If a
    side ever carries several candidates they are disambiguated against the
    stabilized-ratio growth rate.
    """
    if env.kind != "homogeneous":
        raise ValueError("characteristic polynomial applies to homogeneous environments")
    if r >= 0:
        raise ValueError("root scan requires r < 0")
    b = env.b
    law = env.laws[0]
    coeff = np.zeros(2 * b + 1)
    for z, p in law.probs:
        coeff[z + b] = p * math.exp(r)
    coeff[b] -= 1.0
    eps = env.delta * math.exp(r)
    x_max = 2.0 / eps
    x_min = 0.5 * eps
    grid = np.geomspace(x_min, x_max, 4096)
    vals = np.array([_poly_eval(coeff, x) for x in grid])
    roots = []
    for i in range(len(grid) - 1):
        a, bb = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0:
            for _ in range(200):
                m = 0.5 * (a + bb)
                fm = _poly_eval(coeff, m)
                if fm == 0.0:
                    break
                if fa * fm < 0:
                    bb, fb = m, fm
                else:
                    a, fa = m, fm
                if bb - a <= 1e-16 * max(1.0, abs(m)):
                    break
            roots.append(0.5 * (a + bb))
    roots = sorted(set(roots))
    right = [x for x in roots if x > 1.0 + 1e-12]
    left = [x for x in roots if x < 1.0 - 1e-12]

    def pick(cands: list[float], target_lam: float | None, side: str):
        if not cands:
            return None
        if len(cands) == 1:
            return cands[0]
        if target_lam is None:
            target_lam = lyapunov(env, r).value if side == "right" else -lyapunov_bar(env, r).value
        want = math.exp(-target_lam) if side == "right" else math.exp(target_lam)
        return min(cands, key=lambda x: abs(x - want))

    x_right = pick(right, lam_hint, "right")
    x_left = pick(left, None, "left")
    res = tuple(abs(_poly_eval(coeff, x)) for x in roots)
    return CharPolyResult(
        r=r,
        coefficients=coeff,
        positive_roots=tuple(roots),
        x_right=x_right,
        x_left=x_left,
        residuals=res,
    )


# ---------------------------------------------------------------------------
# curve assembly


@dataclass(frozen=True, eq=False)
class LambdaCurve:
    """Lyapunov curve samples on an r grid, both passage directions."""

    env: Environment
    samples: tuple[LambdaSample, ...]
    samples_bar: tuple[LambdaSample, ...]
    rc: RcEstimate | None
    monotone_ok: bool
    convex_ok: bool
    bound_ok: bool

    def rows(self):
        """(r, lambda, lambda_bar, converged, n_used, m_used) per grid point."""
        out = []
        for s, sb in zip(self.samples, self.samples_bar):
            out.append(
                (
                    s.r,
                    s.value,
                    sb.value,
                    s.converged and sb.converged,
                    max(s.n_used, sb.n_used),
                    max(s.m_used, sb.m_used),
                )
            )
        return out


def lambda_curve(
    env: Environment,
    r_grid,
    tol: float = 1e-10,
    with_rc: bool = True,
    rc_tol: float | None = None,
) -> LambdaCurve:
    """Sample both Lyapunov exponents on a grid and attach diagnostics.

    Checks along the way: lambda is nondecreasing and convex on the finite
    part of the grid, and never exceeds -log(delta e^r).
    """
    rs = [float(r) for r in r_grid]
    samples = tuple(lyapunov(env, r, tol=tol) for r in rs)
    samples_bar = tuple(lyapunov_bar(env, r, tol=tol) for r in rs)
    vals = [s.value for s in samples]
    fin = [(r, v) for r, v in zip(rs, vals) if math.isfinite(v)]
    monotone = all(v2 >= v1 - 1e-9 for (_, v1), (_, v2) in zip(fin, fin[1:]))
    convex = True
    for (r0, v0), (r1, v1), (r2, v2) in zip(fin, fin[1:], fin[2:]):
        # second difference on a possibly uneven grid
        s01 = (v1 - v0) / (r1 - r0)
        s12 = (v2 - v1) / (r2 - r1)
        if s12 < s01 - 1e-8:
            convex = False
    bound = all(
        v <= -(math.log(env.delta) + r) + 1e-9 for (r, v) in fin
    )
    rc = estimate_rc(env, tol=rc_tol) if with_rc else None
    return LambdaCurve(
        env=env,
        samples=samples,
        samples_bar=samples_bar,
        rc=rc,
        monotone_ok=monotone,
        convex_ok=convex,
        bound_ok=bound,
    )
