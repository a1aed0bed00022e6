"""Monte Carlo validation of the analytic layer.

Every check here simulates walks with counter-based streams (one stream per
walker, so any run is reproducible draw by draw) and compares an empirical
statistic against the corresponding analytic value, gating the discrepancy
at a fixed number of standard errors across walkers. Walkers are genuine
replicas, which keeps the z-tests honest: no claim relies on mixing rates
or within-path independence.

Checks cover the untilted law of large numbers (velocity and passage
times), the truncated MGF solver at a negative tilt, a closed-form moment
envelope, the drift of the tilted chain against the stationary prediction,
and the telescoping of corrector increments along simulated paths.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .environment import Environment, env_to_json, offsets
from .errors import SupercriticalError
from .passage import estimate_rc, hit_mgf, lyapunov_prime
from .tilt import ansatz_measure, corrector, stationary_speed, tilt_kernel

GATE_SIGMAS = 3.0


def _require_periodic(env: Environment) -> None:
    if env.kind not in ("homogeneous", "periodic"):
        raise ValueError("simulation checks require a homogeneous or periodic environment")


def _cum_rows(env: Environment, r: float | None) -> tuple[np.ndarray, np.ndarray]:
    """Per-class jump CDF rows and the shared offset vector.

    Tilted rows sum to one up to the kernel's convergence defect; the last
    CDF entry is clamped so sampling never falls off the table.
    """
    if r is None:
        rows = np.stack([law.as_array() for law in env.laws])
    else:
        rows = tilt_kernel(env, r).probs.copy()
    cum = np.cumsum(rows, axis=1)
    cum[:, -1] = 1.0
    return cum, offsets(env.b)


@dataclass(frozen=True, eq=False)
class WalkSample:
    """Endpoint ensemble of independent walkers started at the origin."""

    positions: np.ndarray  # (n_walkers,) int64 after n_steps
    n_steps: int
    seed: int
    r: float | None
    pair_counts: np.ndarray | None  # (L, 2B) transition tallies, if requested
    corrector_sums: np.ndarray | None  # (n_walkers,) accumulated increments


def _walk_block(cum, offs, seed, n_steps, j_lo, j_hi, fvals):
    """Walkers j_lo..j_hi-1; pure function of (seed, walker index), so any
    split into blocks reproduces the serial run bit for bit."""
    keys = np.array([rng.stream_key(seed, j) for j in range(j_lo, j_hi)], dtype=np.uint64)
    L = cum.shape[0]
    x = np.zeros(j_hi - j_lo, dtype=np.int64)
    counts = np.zeros(cum.shape, dtype=np.int64)
    csums = np.zeros(j_hi - j_lo) if fvals is not None else None
    for t in range(n_steps):
        u = rng.uniform_at(keys, t)
        cls = x % L
        idx = (u[:, None] > cum[cls]).sum(axis=1)
        np.add.at(counts, (cls, idx), 1)
        if fvals is not None:
            csums += fvals[cls, idx]
        x += offs[idx]
    return x, counts, csums


def _blocks(n: int, threads: int) -> list[tuple[int, int]]:
    k = max(1, min(threads, n))
    step = -(-n // k)
    return [(a, min(a + step, n)) for a in range(0, n, step)]


def walk_ensemble(
    env: Environment,
    seed: int,
    n_steps: int,
    n_walkers: int,
    r: float | None = None,
    count_pairs: bool = False,
    track_corrector: bool = False,
    threads: int = 1,
) -> WalkSample:
    """Run independent walkers; walker j consumes stream (seed, j).

    With `r` the walkers follow the tilted kernel instead of the bare
    environment. Pair counts pool (site class, jump) transitions over all
    walkers and steps. `threads` splits the ensemble into walker blocks;
    the counter-based streams make the result identical for any split.
    """
    _require_periodic(env)
    cum, offs = _cum_rows(env, r)
    fvals = corrector(env, r).values if track_corrector else None
    blocks = _blocks(n_walkers, threads)
    if len(blocks) == 1:
        parts = [_walk_block(cum, offs, seed, n_steps, 0, n_walkers, fvals)]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(
                pool.map(lambda ab: _walk_block(cum, offs, seed, n_steps, *ab, fvals), blocks)
            )
    x = np.concatenate([p[0] for p in parts])
    counts = sum(p[1] for p in parts)
    csums = np.concatenate([p[2] for p in parts]) if track_corrector else None
    return WalkSample(
        positions=x, n_steps=n_steps, seed=seed, r=r,
        pair_counts=counts if count_pairs else None, corrector_sums=csums,
    )


def _passage_block(cum, offs, seed, level, max_steps, j_lo, j_hi):
    keys = np.array([rng.stream_key(seed, j) for j in range(j_lo, j_hi)], dtype=np.uint64)
    L = cum.shape[0]
    x = np.zeros(j_hi - j_lo, dtype=np.int64)
    tau = np.full(j_hi - j_lo, max_steps, dtype=np.int64)
    active = np.ones(j_hi - j_lo, dtype=bool)
    for t in range(max_steps):
        if not active.any():
            break
        u = rng.uniform_at(keys, t)
        cls = x % L
        idx = (u[:, None] > cum[cls]).sum(axis=1)
        x[active] += offs[idx[active]]
        arrived = active & (x >= level)
        tau[arrived] = t + 1
        active &= ~arrived
    return tau, active


def passage_ensemble(
    env: Environment,
    seed: int,
    level: int,
    n_walkers: int,
    max_steps: int,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """First times the walkers reach `level`, with a censoring mask.

    Draw t of every stream belongs to step t whether or not the walker is
    still active, so the ensemble is reproducible independent of who has
    already arrived or how the ensemble is split into blocks. Censored
    walkers report max_steps.
    """
    _require_periodic(env)
    cum, offs = _cum_rows(env, None)
    blocks = _blocks(n_walkers, threads)
    if len(blocks) == 1:
        parts = [_passage_block(cum, offs, seed, level, max_steps, 0, n_walkers)]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(
                pool.map(lambda ab: _passage_block(cum, offs, seed, level, max_steps, *ab), blocks)
            )
    tau = np.concatenate([p[0] for p in parts])
    censored = np.concatenate([p[1] for p in parts])
    return tau, censored


@dataclass(frozen=True, eq=False)
class CheckResult:
    """One empirical-vs-analytic comparison.

    For stochastic checks `z` is (observed - expected) / se over walker
    replicas and the gate is in sigmas. Deterministic checks carry se = 0
    and use `gate` as an absolute ceiling on `observed - expected`.
    """

    name: str
    observed: float
    expected: float
    se: float
    z: float
    gate: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {
            "name": self.name,
            "observed": self.observed,
            "expected": self.expected,
            "se": self.se,
            "z": self.z,
            "gate": self.gate,
            "passed": self.passed,
        }
        out.update({k: v for k, v in sorted(self.extra.items())})
        return out


def _z_result(name, observed, expected, se, gate, **extra) -> CheckResult:
    z = (observed - expected) / se if se > 0 else math.inf * np.sign(observed - expected + 0.0)
    if observed == expected:
        z = 0.0
    return CheckResult(
        name=name, observed=float(observed), expected=float(expected),
        se=float(se), z=float(z), gate=gate, passed=bool(abs(z) <= gate),
        extra=extra,
    )


def empirical_velocity_check(
    env: Environment,
    seed: int,
    n_steps: int = 10_000,
    n_walkers: int = 200,
    gate: float = GATE_SIGMAS,
    threads: int = 1,
) -> CheckResult:
    """Mean endpoint velocity against the stationary speed of the untilted
    chain. Needs a transient environment; the speed call raises otherwise."""
    v = stationary_speed(env, 0.0)
    sample = walk_ensemble(env, seed, n_steps, n_walkers, threads=threads)
    per_walker = sample.positions / n_steps
    se = float(np.std(per_walker, ddof=1) / math.sqrt(n_walkers))
    return _z_result(
        "empirical-velocity", float(np.mean(per_walker)), v, se, gate,
        n_steps=n_steps, n_walkers=n_walkers,
    )


def passage_lln_check(
    env: Environment,
    seed: int,
    level: int = 2_000,
    n_walkers: int = 200,
    gate: float = GATE_SIGMAS,
    threads: int = 1,
) -> CheckResult:
    """Mean passage time per level against the slope of the growth curve at
    tilt zero (which equals the reciprocal speed)."""
    slope = lyapunov_prime(env, 0.0).value
    max_steps = int(50 * level * slope)
    tau, censored = passage_ensemble(env, seed, level, n_walkers, max_steps, threads=threads)
    per_walker = tau / level
    se = float(np.std(per_walker, ddof=1) / math.sqrt(n_walkers))
    return _z_result(
        "passage-lln", float(np.mean(per_walker)), slope, se, gate,
        level=level, n_walkers=n_walkers, censored=int(censored.sum()),
    )


def mgf_match_check(
    env: Environment,
    r: float,
    seed: int,
    level: int = 8,
    n_walkers: int = 50_000,
    gate: float = GATE_SIGMAS,
    threads: int = 1,
) -> CheckResult:
    """Empirical mean of exp(r * passage time) against the MGF solve.

    Requires r < 0 so censored walkers contribute at most exp(r max_steps),
    which is reported as the truncation bias bound.
    """
    if r >= 0:
        raise ValueError("the direct MGF estimate needs a negative tilt")
    sol = hit_mgf(env, r, level)
    expected = sol.h_at(0)
    max_steps = max(200, int(-12.0 / r) + 50 * level)
    tau, censored = passage_ensemble(env, seed, level, n_walkers, max_steps, threads=threads)
    vals = np.exp(r * tau.astype(float))
    vals[censored] = 0.0
    se = float(np.std(vals, ddof=1) / math.sqrt(n_walkers))
    return _z_result(
        "mgf-match", float(np.mean(vals)), expected, se, gate,
        r=r, level=level, censored=int(censored.sum()),
        truncation_bias_bound=math.exp(r * max_steps),
    )


def moment_envelope_check(
    env: Environment,
    r: float,
    m: int,
    seed: int,
    level: int = 8,
    n_walkers: int = 50_000,
    gate: float = GATE_SIGMAS,
    threads: int = 1,
) -> CheckResult:
    """One-sided: E[tau^m exp(r tau)] must stay below its analytic envelope.

    For any s between r and the critical tilt, t^m e^{rt} <= m! (s-r)^{-m}
    e^{st}, so the envelope is m! (s-r)^{-m} times the MGF at s, evaluated
    at the midpoint s of the certified subcritical gap. Passes when the
    empirical mean does not exceed the envelope by more than `gate` standard
    errors.
    """
    if r >= 0:
        raise ValueError("the moment envelope check needs a negative tilt")
    rc_lo = estimate_rc(env, tol=1e-4).bracket[0]
    s = 0.5 * (r + rc_lo)
    envelope = math.factorial(m) * (s - r) ** (-m) * hit_mgf(env, s, level).h_at(0)
    max_steps = max(200, int(-12.0 / r) + 50 * level)
    tau, censored = passage_ensemble(env, seed, level, n_walkers, max_steps, threads=threads)
    t = tau.astype(float)
    vals = t**m * np.exp(r * t)
    vals[censored] = 0.0
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n_walkers))
    slack = (mean - envelope) / se if se > 0 else -math.inf
    return CheckResult(
        name="moment-envelope", observed=mean, expected=envelope, se=se,
        z=float(slack), gate=gate, passed=bool(slack <= gate),
        extra={"r": r, "m": m, "midpoint_tilt": s, "censored": int(censored.sum())},
    )


def tilted_drift_check(
    env: Environment,
    r: float,
    seed: int,
    n_steps: int = 5_000,
    n_walkers: int = 200,
    gate: float = GATE_SIGMAS,
    threads: int = 1,
) -> CheckResult:
    """Drift of the simulated tilted chain against the stationary
    prediction; also reports the pooled (class, jump) occupation gap."""
    mu = ansatz_measure(env, r)
    sample = walk_ensemble(env, seed, n_steps, n_walkers, r=r, count_pairs=True, threads=threads)
    per_walker = sample.positions / n_steps
    se = float(np.std(per_walker, ddof=1) / math.sqrt(n_walkers))
    emp = sample.pair_counts / sample.pair_counts.sum()
    tv = 0.5 * float(np.abs(emp - mu.weights).sum())
    return _z_result(
        "tilted-drift", float(np.mean(per_walker)), mu.drift, se, gate,
        r=r, n_steps=n_steps, n_walkers=n_walkers, pair_tv=tv,
    )


def corrector_path_check(
    env: Environment,
    r: float,
    seed: int,
    n_steps: int = 5_000,
    n_walkers: int = 50,
    tol: float = 1e-9,
    threads: int = 1,
) -> CheckResult:
    """Accumulated corrector increments along tilted paths.

    The running sum telescopes to a potential difference, so it must agree
    with the endpoint value exactly and stay within the potential span no
    matter how long the path is. Deterministic gate.
    """
    cor = corrector(env, r)
    sample = walk_ensemble(
        env, seed, n_steps, n_walkers, r=r, track_corrector=True, threads=threads
    )
    L = len(env.laws) if env.kind == "periodic" else 1
    endpoint = cor.potential[sample.positions % L] - cor.potential[0]
    telescope_err = float(np.max(np.abs(sample.corrector_sums - endpoint)))
    worst = float(np.max(np.abs(sample.corrector_sums)))
    span = cor.span
    passed = telescope_err <= tol and worst <= span + tol
    return CheckResult(
        name="corrector-path", observed=worst, expected=span, se=0.0,
        z=0.0, gate=tol, passed=bool(passed),
        extra={
            "r": r, "telescope_error": telescope_err,
            "sublinearity_ratio": worst / n_steps,
        },
    )


@dataclass(frozen=True, eq=False)
class McReport:
    """Batch of checks on one environment, JSON-ready."""

    env: Environment
    seed: int
    checks: tuple[CheckResult, ...]
    wall_time: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {
            "environment": env_to_json(self.env),
            "seed": self.seed,
            "algorithm": rng.ALGORITHM,
            "all_passed": self.all_passed,
            "wall_time_s": self.wall_time,
            "checks": [c.row() for c in self.checks],
        }


STANDARD_CHECKS = (
    "empirical-velocity",
    "passage-lln",
    "mgf-match",
    "moment-envelope",
    "tilted-drift",
    "corrector-path",
)


def run_standard_checks(
    env: Environment,
    seed: int,
    r: float = -0.3,
    include: tuple[str, ...] = STANDARD_CHECKS,
    n_steps: int = 10_000,
    n_walkers: int = 200,
    mgf_walkers: int = 50_000,
    level: int = 8,
    gate: float = GATE_SIGMAS,
    threads: int = 1,
) -> McReport:
    """Run the named checks with distinct sub-seeds per check.

    Velocity and passage checks require a transient environment; ask only
    for the tilted checks on recurrent input.
    """
    t0 = time.time()
    out: list[CheckResult] = []
    sub = {name: seed + 1000 * k for k, name in enumerate(STANDARD_CHECKS)}
    for name in include:
        if name == "empirical-velocity":
            out.append(empirical_velocity_check(env, sub[name], n_steps, n_walkers, gate, threads))
        elif name == "passage-lln":
            out.append(passage_lln_check(env, sub[name], max(200, n_steps // 5), n_walkers, gate, threads))
        elif name == "mgf-match":
            out.append(mgf_match_check(env, r, sub[name], level, mgf_walkers, gate, threads))
        elif name == "moment-envelope":
            out.append(moment_envelope_check(env, r, 2, sub[name], level, mgf_walkers, gate, threads))
        elif name == "tilted-drift":
            out.append(tilted_drift_check(env, r, sub[name], n_steps // 2, n_walkers, gate, threads))
        elif name == "corrector-path":
            out.append(corrector_path_check(env, r, sub[name], n_steps // 2, threads=threads))
        else:
            raise ValueError(f"unknown check {name!r}")
    return McReport(env=env, seed=seed, checks=tuple(out), wall_time=time.time() - t0)
