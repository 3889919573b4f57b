import math

import numpy as np
import pytest

from reachctl.arm import (ArmParams, JointState, coriolis_matrix, forward_kinematics,
                          gravity_vector, mass_matrix, step_dynamics, total_energy,
                          uncertainty_terms)
from reachctl.env import JOINT_LIMITS
from reachctl.errors import ConfigError, NumericalBlowup

P = ArmParams()


def com_kinetic_energy(q, qd, p=P):
    """Kinetic energy from centre-of-mass velocities (independent of mass_matrix)."""
    s1, c1 = math.sin(q[0]), math.cos(q[0])
    s12, c12 = math.sin(q[0] + q[1]), math.cos(q[0] + q[1])
    v1 = np.array([-p.lc1 * s1, p.lc1 * c1]) * qd[0]
    v2 = (np.array([-p.l1 * s1 - p.lc2 * s12, p.l1 * c1 + p.lc2 * c12]) * qd[0]
          + np.array([-p.lc2 * s12, p.lc2 * c12]) * qd[1])
    return (0.5 * p.m1 * v1 @ v1 + 0.5 * p.I1 * qd[0] ** 2
            + 0.5 * p.m2 * v2 @ v2 + 0.5 * p.I2 * (qd[0] + qd[1]) ** 2)


def com_potential_energy(q, p=P):
    y1 = p.lc1 * math.sin(q[0])
    y2 = p.l1 * math.sin(q[0]) + p.lc2 * math.sin(q[0] + q[1])
    return p.g * (p.m1 * y1 + p.m2 * y2)


def random_joints(rng, size):
    lo = np.array([l[0] for l in JOINT_LIMITS])
    hi = np.array([l[1] for l in JOINT_LIMITS])
    return lo + rng.random((size, 2)) * (hi - lo)


def test_default_params_are_uniform_rods():
    assert ArmParams() == ArmParams.uniform_rods()
    assert (P.l1, P.l2) == (1.0, 0.8)


def test_params_validation():
    with pytest.raises(ConfigError):
        ArmParams(m1=-1.0)
    with pytest.raises(ConfigError):
        ArmParams(lc1=1.5)
    with pytest.raises(ConfigError):
        ArmParams.from_dict({"l1": 1.0, "mass": 2.0})
    assert ArmParams.from_dict(P.to_dict()) == P


def test_mass_matrix_coupling_vanishes_at_right_angle():
    M = mass_matrix([0.3, math.pi / 2], P)
    assert M[0, 1] == pytest.approx(P.m2 * P.lc2**2 + P.I2, abs=1e-15)


def test_mass_matrix_symmetric_and_positive_definite_on_limits():
    rng = np.random.default_rng(0)
    for q in random_joints(rng, 10_000):
        M = mass_matrix(q, P)
        assert M[0, 1] == M[1, 0]
        np.linalg.cholesky(M)


def test_mass_matrix_matches_kinetic_energy_hessian():
    rng = np.random.default_rng(1)
    h = 1e-3  # energy is quadratic in qdot, central differences are exact up to rounding
    for q in random_joints(rng, 50):
        H = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
                H[i, j] = (com_kinetic_energy(q, ei + ej) - com_kinetic_energy(q, ei - ej)
                           - com_kinetic_energy(q, -ei + ej) + com_kinetic_energy(q, -ei - ej)
                           ) / (4 * h * h)
        np.testing.assert_allclose(mass_matrix(q, P), H, atol=1e-6)


def test_coriolis_examples():
    q = np.array([0.4, -0.9])
    np.testing.assert_allclose(coriolis_matrix(q, [0, 0], P) @ np.zeros(2), 0.0)
    assert np.all(coriolis_matrix([0.7, 0.0], [1.3, -2.0], P) == 0.0)
    assert np.all(coriolis_matrix([0.7, math.pi], [1.3, -2.0], P) == pytest.approx(0.0, abs=1e-15))


def test_skew_symmetry_of_mdot_minus_2c():
    rng = np.random.default_rng(2)
    h = 1e-3
    worst = 0.0
    for q in random_joints(rng, 10_000):
        qd = rng.normal(size=2)
        z = rng.normal(size=2)
        # five-point stencil along qdot, O(h^4)
        Mdot = (-mass_matrix(q + 2 * h * qd, P) + 8 * mass_matrix(q + h * qd, P)
                - 8 * mass_matrix(q - h * qd, P) + mass_matrix(q - 2 * h * qd, P)) / (12 * h)
        worst = max(worst, abs(z @ (Mdot - 2 * coriolis_matrix(q, qd, P)) @ z))
    assert worst <= 1e-9


def test_coriolis_matches_lagrangian_velocity_terms():
    # C qdot must equal d/dt(dT/dqdot)|_{qdd=0} - dT/dq, from the energy oracle
    rng = np.random.default_rng(3)
    h = 1e-5
    for q in random_joints(rng, 20):
        qd = rng.normal(size=2)
        Mdot = (mass_matrix(q + h * qd, P) - mass_matrix(q - h * qd, P)) / (2 * h)
        dT_dq = np.array([(com_kinetic_energy(q + h * e, qd) - com_kinetic_energy(q - h * e, qd))
                          / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(coriolis_matrix(q, qd, P) @ qd, Mdot @ qd - dT_dq, atol=1e-7)


def test_gravity_examples():
    np.testing.assert_allclose(gravity_vector([math.pi / 2, 0.0], P), 0.0, atol=1e-12)
    G = gravity_vector([0.0, 0.0], P)
    assert G[0] == pytest.approx(P.g * (P.m1 * P.lc1 + P.m2 * P.l1 + P.m2 * P.lc2))
    assert G[1] == pytest.approx(P.g * P.m2 * P.lc2)
    heavy = ArmParams(g=2 * P.g)
    q = [0.3, 1.1]
    np.testing.assert_allclose(gravity_vector(q, heavy), 2 * gravity_vector(q, P))


def test_gravity_is_potential_gradient():
    rng = np.random.default_rng(4)
    h = 1e-6
    for q in random_joints(rng, 500):
        fd = np.array([(com_potential_energy(q + h * e) - com_potential_energy(q - h * e)) / (2 * h)
                       for e in np.eye(2)])
        G = gravity_vector(q, P)
        assert np.linalg.norm(G - fd) <= 1e-6 * max(np.linalg.norm(G), 1.0)


def test_uncertainty_terms_reference_values():
    F, d = uncertainty_terms(JointState([0, 0], [0, 0], 0.0), u=0.0)
    np.testing.assert_allclose(F, [0.5, 0.7])
    assert d[0] == 3.0
    rng = np.random.default_rng(5)
    for _ in range(1000):
        _, d = uncertainty_terms(JointState([0, 0], [0, 0], rng.random()), rng)
        assert -0.2 <= d[1] <= 0.0


def test_gravity_compensation_is_equilibrium():
    q = np.array([0.3, -0.8])
    s = JointState(q, [0.0, 0.0])
    for _ in range(500):
        s = step_dynamics(s, gravity_vector(s.x1, P), 1e-3, None, P, mode="rigid")
    assert np.max(np.abs(s.x2)) < 1e-9


def test_free_swing_conserves_energy():
    s = JointState([0.3, 0.5], [0.0, 0.0])
    e0 = total_energy(s, P)
    for _ in range(1000):
        s = step_dynamics(s, [0.0, 0.0], 1e-3, None, P, mode="rigid")
    assert abs(total_energy(s, P) - e0) < 1e-6
    assert s.t == pytest.approx(1.0)


def test_rk4_step_halving_converges():
    def run(dt):
        s = JointState([0.3, 0.5], [0.2, -0.1])
        for _ in range(int(round(1.0 / dt))):
            s = step_dynamics(s, [1.0, -0.5], dt, None, P, mode="rigid")
        return s.x1
    assert np.max(np.abs(run(1e-3) - run(5e-4))) < 1e-6


def test_step_dynamics_deterministic_given_seed():
    s = JointState([0.2, 0.1], [0.0, 0.3], 0.4)
    a = step_dynamics(s, [3.0, 1.0], 1e-3, np.random.default_rng(7), P)
    b = step_dynamics(s, [3.0, 1.0], 1e-3, np.random.default_rng(7), P)
    assert np.array_equal(a.x1, b.x1) and np.array_equal(a.x2, b.x2)


def test_step_dynamics_blowup():
    with pytest.raises(NumericalBlowup):
        step_dynamics(JointState([0, 0], [0, 0]), [1e12, 0.0], 1e-3, None, P)
    with pytest.raises(NumericalBlowup):
        step_dynamics(JointState([0, 0], [0, 0]), [np.nan, 0.0], 1e-3, None, P)


def test_forward_kinematics():
    np.testing.assert_allclose(forward_kinematics([0, 0], P), [1.8, 0, 0])
    np.testing.assert_allclose(forward_kinematics([0, math.pi], P), [0.2, 0, 0], atol=1e-12)
    rng = np.random.default_rng(6)
    for q in rng.uniform(-math.pi, math.pi, (1000, 2)):
        r = np.linalg.norm(forward_kinematics(q, P))
        assert P.l1 - P.l2 - 1e-12 <= r <= P.l1 + P.l2 + 1e-12
