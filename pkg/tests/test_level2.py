"""Pair-measure entropy: identities, gradients, and the constrained minimizer."""

import math

import numpy as np
import pytest
from hypothesis import given, settings

from rwre_ldp.environment import JumpLaw, homogeneous, periodic
from rwre_ldp.errors import InfeasibleDriftError
from rwre_ldp.level2 import (
    PairMeasure,
    drift_range,
    empirical_pair_measure,
    entropy,
    entropy_gradient,
    from_ansatz,
    minimize_entropy,
)
from rwre_ldp.tilt import ansatz_measure

from .strategies import jump_laws

SYM_NN = homogeneous(JumpLaw(b=1, probs=((-1, 0.5), (1, 0.5))))
PER2_NN = periodic(
    [
        JumpLaw(b=1, probs=((-1, 0.2), (1, 0.8))),
        JumpLaw(b=1, probs=((-1, 0.6), (1, 0.4))),
    ]
)
WIDE = homogeneous(JumpLaw(b=2, probs=((-2, 1 / 7), (-1, 3 / 7), (1, 1 / 7), (2, 2 / 7))))
DRIFT2 = homogeneous(JumpLaw(b=2, probs=((-2, 0.1), (-1, 0.2), (1, 0.3), (2, 0.4))))


class TestPairMeasure:
    def test_marginals_by_hand(self):
        w = np.array([[1 / 3, 1 / 3], [0.0, 1 / 3]])  # (class, [-1, +1])
        mu = PairMeasure(env=PER2_NN, weights=w)
        np.testing.assert_allclose(mu.m1(), [2 / 3, 1 / 3])
        # class 0 receives: (0,-1)->1, (1,+1)->0; mass arriving at 0 is
        # w[1,+1] + w[1,-1]... both jumps from class 1 land on class 0
        np.testing.assert_allclose(mu.m2(), [1 / 3, 2 / 3])
        assert mu.drift() == pytest.approx(1 / 3)

    def test_ansatz_is_shift_stationary(self):
        mu = from_ansatz(ansatz_measure(PER2_NN, -0.2))
        assert mu.shift_defect() < 1e-13
        assert mu.total() == pytest.approx(1.0, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            PairMeasure(env=PER2_NN, weights=np.ones((3, 2)) / 6)


class TestEntropy:
    @pytest.mark.parametrize(
        "env,r",
        [(SYM_NN, -0.1), (PER2_NN, -0.2), (WIDE, -0.5), (DRIFT2, -0.8)],
    )
    def test_tilted_measure_identity(self, env, r):
        # entropy of the tilted pair measure telescopes to r - xi * growth rate
        mu = ansatz_measure(env, r)
        val = entropy(from_ansatz(mu))
        assert val == pytest.approx(r - mu.drift * mu.lam, abs=1e-12)

    def test_untilted_measure_has_zero_entropy(self):
        mu = ansatz_measure(DRIFT2, 0.0)
        assert entropy(from_ansatz(mu)) == pytest.approx(0.0, abs=1e-12)

    def test_infinite_off_support(self):
        w = np.array([[0.5, 0.25], [0.0, 0.25]])
        env = periodic(
            [
                JumpLaw(b=1, probs=((-1, 0.5), (1, 0.5))),
                JumpLaw(b=1, probs=((-1, 0.5), (1, 0.5))),
            ]
        )
        # charge a supported pair normally: finite
        assert math.isfinite(entropy(PairMeasure(env=env, weights=w)))
        law_no_up = JumpLaw(b=2, probs=((-2, 0.2), (-1, 0.4), (1, 0.4)))
        env2 = homogeneous(law_no_up)
        w2 = np.zeros((1, 4))
        w2[0, :] = [0.25, 0.25, 0.25, 0.25]  # charges z=+2, unsupported
        assert entropy(PairMeasure(env=env2, weights=w2)) == math.inf

    def test_gradient_matches_finite_difference(self):
        mu = from_ansatz(ansatz_measure(PER2_NN, -0.3))
        g = entropy_gradient(mu)
        rng = np.random.default_rng(2)
        direction = rng.normal(size=mu.weights.shape)
        eps = 1e-7
        up = PairMeasure(env=PER2_NN, weights=mu.weights + eps * direction)
        dn = PairMeasure(env=PER2_NN, weights=mu.weights - eps * direction)
        fd = (entropy(up) - entropy(dn)) / (2 * eps)
        assert fd == pytest.approx(float((g * direction).sum()), abs=1e-6)


class TestDriftRange:
    def test_full_support(self):
        lo, hi = drift_range(WIDE)
        assert lo == pytest.approx(-2.0, abs=1e-9)
        assert hi == pytest.approx(2.0, abs=1e-9)

    def test_nearest_neighbor(self):
        lo, hi = drift_range(PER2_NN)
        assert lo == pytest.approx(-1.0, abs=1e-9)
        assert hi == pytest.approx(1.0, abs=1e-9)

    def test_truncated_support(self):
        env = homogeneous(JumpLaw(b=2, probs=((-2, 0.2), (-1, 0.4), (1, 0.4))))
        lo, hi = drift_range(env)
        assert lo == pytest.approx(-2.0, abs=1e-9)
        assert hi == pytest.approx(1.0, abs=1e-9)


class TestMinimizer:
    @pytest.mark.parametrize("env,r", [(PER2_NN, -0.2), (WIDE, -0.5)])
    def test_recovers_tilted_measure(self, env, r):
        mu = ansatz_measure(env, r)
        res = minimize_entropy(env, mu.drift, tol=1e-10)
        assert res.converged
        expect = r - mu.drift * mu.lam
        assert res.value == pytest.approx(expect, abs=1e-7)
        tv = 0.5 * float(np.abs(res.measure.weights - mu.weights).sum())
        assert tv < 1e-5
        assert res.constraint_residual < 1e-12
        assert res.measure.drift() == pytest.approx(mu.drift, abs=1e-12)
        assert res.measure.shift_defect() < 1e-12

    def test_warm_start_fast(self):
        mu = ansatz_measure(PER2_NN, -0.4)
        res = minimize_entropy(PER2_NN, mu.drift, w0=from_ansatz(mu), tol=1e-9)
        assert res.converged
        assert res.iterations <= 10

    def test_infeasible_drift(self):
        with pytest.raises(InfeasibleDriftError) as exc:
            minimize_entropy(WIDE, 2.5)
        assert exc.value.xi_max == pytest.approx(2.0, abs=1e-9)

    def test_zero_drift_minimum_nonnegative(self):
        res = minimize_entropy(WIDE, 0.0, tol=1e-9)
        # zero-drift law: the untilted measure itself has drift 0, entropy 0
        assert res.value == pytest.approx(0.0, abs=1e-9)


class TestEmpirical:
    def test_hand_path(self):
        mu = empirical_pair_measure(PER2_NN, np.array([0, 1, 2, 1]))
        w = mu.weights
        assert w[0, 1] == pytest.approx(1 / 3)  # class 0, +1
        assert w[1, 1] == pytest.approx(1 / 3)  # class 1, +1
        assert w[0, 0] == pytest.approx(1 / 3)  # class 0 (site 2), -1
        assert mu.total() == pytest.approx(1.0)

    def test_rejects_bad_jump(self):
        with pytest.raises(ValueError):
            empirical_pair_measure(PER2_NN, np.array([0, 3]))


@settings(max_examples=12, deadline=None)
@given(jump_laws(max_b=2))
def test_identity_property(law):
    env = homogeneous(law)
    mu = ansatz_measure(env, -0.6)
    val = entropy(from_ansatz(mu))
    assert val == pytest.approx(-0.6 - mu.drift * mu.lam, abs=1e-10)
