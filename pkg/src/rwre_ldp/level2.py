"""Pair empirical measures and their entropy functional.

A pair measure assigns weight to (environment class, jump) pairs. The
admissible ones are shift-stationary: the class marginal seen before a jump
must match the one seen after. On that affine set the relative entropy

    J(w) = sum_{i,z} w(i,z) log( w(i,z) / (m1(i) pi_i(z)) )

is convex, and its constrained minimum over measures with a prescribed mean
jump is the positional rate function evaluated at that drift. The minimizer
here is projected gradient descent with Barzilai-Borwein steps, backtracking,
and a Dykstra projection onto (affine constraints) ∩ (floor box). The tilted
pair measure is the conjectured minimizer; the optimizer never assumes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .environment import Environment, offsets
from .errors import InfeasibleDriftError, SlowConvergenceError
from .tilt import AnsatzMeasure

FLOOR = 1e-12


def _require_periodic(env: Environment) -> None:
    if env.kind not in ("homogeneous", "periodic"):
        raise ValueError("pair measures require a homogeneous or periodic environment")


def _support_mask(env: Environment) -> np.ndarray:
    L = env.period
    b = env.b
    mask = np.zeros((L, 2 * b), dtype=bool)
    for i in range(L):
        mask[i] = env.laws[i].as_array() > 0
    return mask


def _law_matrix(env: Environment) -> np.ndarray:
    return np.stack([env.laws[i].as_array() for i in range(env.period)])


@dataclass(frozen=True, eq=False)
class PairMeasure:
    """Probability weights on (class, jump) pairs, aligned with offsets(B)."""

    env: Environment
    weights: np.ndarray  # (L, 2B)

    def __post_init__(self):
        _require_periodic(self.env)
        L, w = self.env.period, self.weights
        if w.shape != (L, 2 * self.env.b):
            raise ValueError(f"weights shape {w.shape} does not match the environment")

    def m1(self) -> np.ndarray:
        """Class marginal before the jump."""
        return self.weights.sum(axis=1)

    def m2(self) -> np.ndarray:
        """Class marginal after the jump: mass arriving at each class."""
        L = self.env.period
        offs = offsets(self.env.b)
        out = np.zeros(L)
        for i in range(L):
            for j, z in enumerate(offs):
                out[(i + int(z)) % L] += self.weights[i, j]
        return out

    def drift(self) -> float:
        offs = offsets(self.env.b).astype(float)
        return float((self.weights * offs[None, :]).sum())

    def shift_defect(self) -> float:
        return float(np.max(np.abs(self.m1() - self.m2())))

    def total(self) -> float:
        return float(self.weights.sum())


def from_ansatz(mu: AnsatzMeasure) -> PairMeasure:
    return PairMeasure(env=mu.env, weights=mu.weights)


def entropy(mu: PairMeasure) -> float:
    """Relative entropy of the pair measure against m1 (x) pi.

    Returns +inf when mass sits on jumps the environment never makes.
    """
    P = _law_matrix(mu.env)
    w = mu.weights
    m1 = mu.m1()
    total = 0.0
    L, cols = w.shape
    for i in range(L):
        for j in range(cols):
            wij = w[i, j]
            if wij <= 0.0:
                continue
            ref = m1[i] * P[i, j]
            if ref <= 0.0:
                return math.inf
            total += wij * math.log(wij / ref)
    return total


def entropy_gradient(mu: PairMeasure) -> np.ndarray:
    """Elementwise log(w / (m1 pi)); the m1-dependence cancels in the
    gradient because the per-class weights sum inside their own marginal."""
    P = _law_matrix(mu.env)
    w = mu.weights
    m1 = mu.m1()
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.log(w / (m1[:, None] * P))
    g = np.where(np.isfinite(g), g, 0.0)
    return g


def _constraints(env: Environment, xi: float, mask: np.ndarray):
    """Equality rows over the supported coordinates: total mass, shift
    stationarity (one redundant row dropped), prescribed drift."""
    L = env.period
    offs = offsets(env.b)
    idx = np.argwhere(mask)
    d = len(idx)
    col = {(int(i), int(j)): k for k, (i, j) in enumerate(idx)}
    rows = [np.ones(d)]
    rhs = [1.0]
    for i in range(L - 1):
        row = np.zeros(d)
        for (ii, jj), k in col.items():
            z = int(offs[jj])
            if ii == i:
                row[k] += 1.0
            if (ii + z) % L == i:
                row[k] -= 1.0
        rows.append(row)
        rhs.append(0.0)
    drow = np.zeros(d)
    for (ii, jj), k in col.items():
        drow[k] = float(offs[jj])
    rows.append(drow)
    rhs.append(xi)
    return np.array(rows), np.array(rhs), idx


def drift_range(env: Environment) -> tuple[float, float]:
    """Extreme mean jumps over shift-stationary pair measures, by linear
    programming over the supported polytope."""
    _require_periodic(env)
    mask = _support_mask(env)
    A, rhs, idx = _constraints(env, 0.0, mask)
    # drop the drift row; keep mass + stationarity
    A_eq, b_eq = A[:-1], rhs[:-1]
    c = A[-1]
    out = []
    for sign in (1.0, -1.0):
        res = linprog(sign * c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if not res.success:
            raise SlowConvergenceError(
                "drift range solve failed", diagnostics={"message": res.message}
            )
        out.append(sign * res.fun)
    lo, hi = out
    return float(lo), float(hi)


@dataclass(frozen=True, eq=False)
class Level2Result:
    """Outcome of the constrained entropy minimization."""

    env: Environment
    xi: float
    measure: PairMeasure
    value: float
    grad_map_norm: float  # norm of the projected-gradient fixed-point residual
    constraint_residual: float
    iterations: int
    converged: bool
    floor: float


def minimize_entropy(
    env: Environment,
    xi: float,
    w0: PairMeasure | None = None,
    tol: float = 1e-10,
    max_iter: int = 20_000,
) -> Level2Result:
    """Minimize the pair entropy at fixed drift xi.

    Projected gradient with BB steps; the projection is Dykstra's alternation
    between the affine constraint set and the floor box, so iterates stay
    feasible to machine precision. Infeasible drifts are rejected up front
    with the attainable range in the error.
    """
    _require_periodic(env)
    mask = _support_mask(env)
    lo, hi = drift_range(env)
    margin = 1e-12
    if not (lo - margin <= xi <= hi + margin):
        raise InfeasibleDriftError(
            f"drift {xi} outside the attainable range [{lo}, {hi}]",
            xi_min=lo,
            xi_max=hi,
        )
    A, rhs, idx = _constraints(env, xi, mask)
    AAt_pinv = np.linalg.pinv(A @ A.T)

    def proj_affine(v: np.ndarray) -> np.ndarray:
        return v - A.T @ (AAt_pinv @ (A @ v - rhs))

    def proj(v: np.ndarray, iters: int = 200) -> np.ndarray:
        x = v.copy()
        p = np.zeros_like(v)
        q = np.zeros_like(v)
        for _ in range(iters):
            y = proj_affine(x + p)
            p = x + p - y
            x = np.maximum(y + q, FLOOR)
            q = y + q - x
            if np.max(np.abs(A @ x - rhs)) < 1e-14 and x.min() >= FLOOR - 1e-15:
                break
        return x

    L = env.period
    P = _law_matrix(env)
    d = len(idx)

    def unflatten(v: np.ndarray) -> np.ndarray:
        w = np.zeros((L, 2 * env.b))
        for k, (i, j) in enumerate(idx):
            w[i, j] = v[k]
        return w

    def fval(v: np.ndarray) -> float:
        return entropy(PairMeasure(env=env, weights=unflatten(v)))

    def gval(v: np.ndarray) -> np.ndarray:
        g2 = entropy_gradient(PairMeasure(env=env, weights=unflatten(v)))
        return np.array([g2[i, j] for (i, j) in idx])

    if w0 is not None:
        v = np.array([w0.weights[i, j] for (i, j) in idx])
    else:
        # untilted product measure, then made feasible
        v = np.array([P[i, j] / L for (i, j) in idx])
    v = proj(v)
    f = fval(v)
    step = 1.0
    v_prev = None
    g_prev = None
    it = 0
    gmap = math.inf
    for it in range(1, max_iter + 1):
        g = gval(v)
        if v_prev is not None:
            dv = v - v_prev
            dg = g - g_prev
            denom = float(dv @ dg)
            step = float(dv @ dv) / denom if denom > 1e-300 else 1.0
            step = float(min(max(step, 1e-8), 1e4))
        v_prev, g_prev = v.copy(), g.copy()
        t = step
        v_new, f_new = v, f
        for _ in range(60):
            cand = proj(v - t * g)
            fc = fval(cand)
            if fc <= f - 1e-4 * float(g @ (v - cand)) + 1e-16:
                v_new, f_new = cand, fc
                break
            t *= 0.5
        else:
            v_new = proj(v - t * g)
            f_new = fval(v_new)
        v, f = v_new, f_new
        gmap = float(np.linalg.norm(proj(v - gval(v)) - v))
        if gmap <= tol:
            break
    resid = float(np.max(np.abs(A @ v - rhs)))
    measure = PairMeasure(env=env, weights=unflatten(v))
    return Level2Result(
        env=env,
        xi=xi,
        measure=measure,
        value=f,
        grad_map_norm=gmap,
        constraint_residual=resid,
        iterations=it,
        converged=gmap <= tol,
        floor=FLOOR,
    )


def empirical_pair_measure(env: Environment, positions: np.ndarray) -> PairMeasure:
    """Pair measure of an observed walk path: visit frequencies of
    (class at the current site, jump taken)."""
    _require_periodic(env)
    x = np.asarray(positions, dtype=np.int64)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("need a path of at least two positions")
    steps = np.diff(x)
    L = env.period
    offs = offsets(env.b)
    jof = {int(z): j for j, z in enumerate(offs)}
    w = np.zeros((L, 2 * env.b))
    for site, z in zip(x[:-1], steps):
        j = jof.get(int(z))
        if j is None:
            raise ValueError(f"observed jump {z} outside the support range")
        w[int(site) % L, j] += 1.0
    return PairMeasure(env=env, weights=w / w.sum())
