"""Tilted walk kernels built from stabilized harmonic ratios.

Once the ratios u_r(x, z) exist, the recipe

    k(x, z) = pi_x(z) e^r u_r(x, z)

defines a genuine Markov kernel: rows sum to one exactly when the ratios
solve their stationarity system, so the row defect doubles as a convergence
meter and is never papered over by renormalizing. The tilted chain is the
walk conditioned to realize a prescribed passage-time tilt, and everything
level-2 needs lives here: its stationary environment density, the raw
occupation profile, the corrector making the tilted increments a telescoping
sum, and the induced pair measure on (environment class, jump).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .environment import Environment, offsets
from .errors import SlowConvergenceError
from .passage import ULimit, u_limit


def _require_periodic(env: Environment, what: str) -> None:
    if env.kind not in ("homogeneous", "periodic"):
        raise ValueError(f"{what} requires a homogeneous or periodic environment")


@dataclass(frozen=True, eq=False)
class TiltedKernel:
    """Markov kernel of the tilted walk, rows indexed by environment class."""

    env: Environment
    r: float
    probs: np.ndarray  # (L, 2B), aligned with offsets(B)
    row_defect: float  # max |row sum - 1|; inherited from the ratio solve
    floor: float  # (delta e^r)^2, a lower bound for the +-1 entries

    @property
    def period(self) -> int:
        return self.probs.shape[0]

    def transition_matrix(self) -> np.ndarray:
        """Projection onto the class cycle: T[i, (i+z) % L]."""
        L = self.period
        T = np.zeros((L, L))
        offs = offsets(self.env.b)
        for i in range(L):
            for j, z in enumerate(offs):
                T[i, (i + int(z)) % L] += self.probs[i, j]
        return T

    def local_drift(self) -> np.ndarray:
        offs = offsets(self.env.b).astype(float)
        return self.probs @ offs


def tilt_kernel(env: Environment, r: float, ulim: ULimit | None = None) -> TiltedKernel:
    """Tilted kernel from the stabilized ratios; periodic environments only."""
    _require_periodic(env, "the tilted kernel")
    if ulim is None:
        ulim = u_limit(env, r)
    L = env.period
    b = env.b
    offs = offsets(b)
    probs = np.zeros((L, 2 * b))
    for i in range(L):
        arr = env.laws[i].as_array()
        for j in range(2 * b):
            if arr[j] > 0:
                probs[i, j] = arr[j] * math.exp(r + ulim.log_u[i, j])
    defect = float(np.max(np.abs(probs.sum(axis=1) - 1.0)))
    floor = (env.delta * math.exp(r)) ** 2
    return TiltedKernel(env=env, r=r, probs=probs, row_defect=defect, floor=floor)


def stationary_distribution(kern: TiltedKernel) -> np.ndarray:
    """Stationary law of the class cycle under the tilted kernel.

    Solved as a bordered linear system; the cycle is irreducible because
    +-1 jumps carry at least the ellipticity floor.
    """
    T = kern.transition_matrix()
    L = T.shape[0]
    if L == 1:
        return np.ones(1)
    A = np.eye(L) - T.T
    A[-1, :] = 1.0  # replace one redundant balance row with normalization
    rhs = np.zeros(L)
    rhs[-1] = 1.0
    stat = np.linalg.solve(A, rhs)
    stat = np.where(np.abs(stat) < 1e-18, 0.0, stat)
    if np.any(stat < -1e-12):
        raise SlowConvergenceError(
            "stationary solve produced negative mass",
            diagnostics={"min": float(stat.min())},
        )
    return stat / stat.sum()


def stationary_speed(env: Environment, r: float) -> float:
    """Mean displacement per step of the tilted walk in its stationary
    environment: the reciprocal slope of the growth-rate curve."""
    kern = tilt_kernel(env, r)
    stat = stationary_distribution(kern)
    speed = float(stat @ kern.local_drift())
    if speed <= 0:
        raise SlowConvergenceError(
            f"tilted walk has nonpositive speed {speed}; ratios are stale",
            diagnostics={"r": r},
        )
    return speed


@dataclass(frozen=True, eq=False)
class InvariantDensity:
    """Stationary environment density of the tilted walk.

    `stat` is the probability vector over classes. `phi` is the same object
    on the raw occupation scale: expected visits per class and per level
    crossed, whose class average equals the slope of the growth-rate curve.
    """

    env: Environment
    r: float
    mode: str  # "exact" | "occupation"
    stat: np.ndarray
    phi: np.ndarray
    speed: float
    gap: float  # occupation mode: TV distance across the last doubling
    floor_ok: bool


def _occupation_stat(env: Environment, r: float, tol: float) -> tuple[np.ndarray, float]:
    """Class-visit frequencies of the tilted walk from banded resolvent
    solves on growing boxes: g = (I - K^T)^{-1} e_0 counts expected visits
    before the walk escapes the box."""
    kern = tilt_kernel(env, r)
    L = env.period
    b = env.b
    offs = offsets(b)
    prev = None
    gap = math.inf
    n = max(64, 8 * L, 8 * b)
    while n <= 8192:
        m = n
        W = m + n  # sites -m .. n-1
        # A = I - K^T in banded storage: ab[b + i - j, j] = A[i, j], and
        # A[xi, xj] = delta - K[xj -> xi]; jumps leaving the box are absorbed
        ab = np.zeros((2 * b + 1, W))
        ab[b, :] = 1.0
        for xj in range(W):
            cls = (xj - m) % L
            for j, z in enumerate(offs):
                xi = xj + int(z)
                if 0 <= xi < W:
                    ab[b + xi - xj, xj] -= kern.probs[cls, j]
        rhs = np.zeros(W)
        rhs[m] = 1.0  # start the walk at the origin
        g = solve_banded((b, b), ab, rhs)
        # average visits per class over whole periods around the box middle
        span = L * max(2, (4 * b) // L + 1)
        c0 = ((n // 2) // L) * L
        sums = np.zeros(L)
        for x in range(c0, c0 + span):
            sums[x % L] += g[x + m]
        stat = sums / sums.sum()
        if prev is not None:
            gap = 0.5 * float(np.abs(stat - prev).sum())
            if gap <= tol:
                return stat, gap
        prev = stat
        n *= 2
    raise SlowConvergenceError(
        "occupation profile did not stabilize", diagnostics={"gap": gap, "level": n // 2}
    )


def invariant_density(
    env: Environment, r: float, mode: str = "exact", tol: float = 1e-8
) -> InvariantDensity:
    """Stationary environment density of the tilted walk.

    exact: stationary vector of the projected class cycle (linear solve).
    occupation: visit frequencies from resolvent solves on doubling boxes,
    kept as an independent check on the exact route.
    """
    _require_periodic(env, "the invariant density")
    if mode not in ("exact", "occupation"):
        raise ValueError(f"unknown invariant density mode {mode!r}")
    kern = tilt_kernel(env, r)
    if mode == "exact":
        stat = stationary_distribution(kern)
        gap = 0.0
    else:
        stat, gap = _occupation_stat(env, r, tol)
    speed = float(stat @ kern.local_drift())
    slope = 1.0 / speed
    phi = stat * env.period * slope
    floor = (env.delta * math.exp(r)) ** (2 * env.b)
    floor_ok = bool(np.all(phi >= floor - 1e-15))
    return InvariantDensity(
        env=env,
        r=r,
        mode=mode,
        stat=stat,
        phi=phi,
        speed=speed,
        gap=gap,
        floor_ok=floor_ok,
    )


@dataclass(frozen=True, eq=False)
class Corrector:
    """Exact gradient structure of the tilted log-ratios.

    values[i, j] = log u(i, z_j) + z_j * lam equals the increment of a
    periodic potential, so sums along any walk path telescope and stay
    within the potential's span.
    """

    env: Environment
    r: float
    lam: float
    values: np.ndarray  # (L, 2B)
    potential: np.ndarray  # (L,)
    span: float

    def increment(self, x: int, z: int) -> float:
        offs = offsets(self.env.b)
        j = int(np.where(offs == z)[0][0])
        return float(self.values[x % self.env.period, j])

    def path_sum(self, start: int, steps) -> float:
        """Telescoped corrector sum along a concrete path."""
        x = start
        total = 0.0
        for z in steps:
            total += self.increment(x, int(z))
            x += int(z)
        return total


def corrector(env: Environment, r: float) -> Corrector:
    """Build the corrector from the stabilized ratios.

    The per-class potential is the cumulative log-ratio plus linear drift;
    exact periodicity follows because the growth rate is exactly the mean
    log-ratio, making the corrector a closed discrete gradient.
    """
    _require_periodic(env, "the corrector")
    ulim = u_limit(env, r)
    L = env.period
    b = env.b
    offs = offsets(b)
    j1 = int(np.where(offs == 1)[0][0])
    theta = ulim.log_u[:, j1]
    lam = -float(np.mean(theta))
    potential = np.zeros(L)
    for i in range(1, L):
        potential[i] = potential[i - 1] + theta[i - 1] + lam
    values = np.zeros((L, 2 * b))
    for i in range(L):
        for j, z in enumerate(offs):
            values[i, j] = ulim.log_u[i, j] + int(z) * lam
    span = float(potential.max() - potential.min()) if L > 1 else 0.0
    return Corrector(env=env, r=r, lam=lam, values=values, potential=potential, span=span)


@dataclass(frozen=True, eq=False)
class AnsatzMeasure:
    """Pair measure (class, jump) of the tilted walk in its stationary
    environment: the conjectured level-2 minimizer at its own drift."""

    env: Environment
    r: float
    lam: float
    weights: np.ndarray  # (L, 2B), sums to 1
    stat: np.ndarray  # first marginal over classes
    drift: float

    @property
    def slope(self) -> float:
        return 1.0 / self.drift


def ansatz_measure(env: Environment, r: float) -> AnsatzMeasure:
    _require_periodic(env, "the tilted pair measure")
    ulim = u_limit(env, r)
    kern = tilt_kernel(env, r, ulim=ulim)
    stat = stationary_distribution(kern)
    weights = stat[:, None] * kern.probs
    drift = float(stat @ kern.local_drift())
    offs = offsets(env.b)
    j1 = int(np.where(offs == 1)[0][0])
    lam = -float(np.mean(ulim.log_u[:, j1]))
    return AnsatzMeasure(
        env=env, r=r, lam=lam, weights=weights, stat=stat, drift=drift
    )
