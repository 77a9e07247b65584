import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from cqmech import barrier, constrained as cq
from cqmech.algebra import spin1_representation
from cqmech.errors import NonSymplecticError

from oracles import smeared_gradient

V = barrier.BarrierPotential()
FAM = cq.GaussianPacketFamily(1.0, V)


def test_gaussian_form_is_constant():
    for z in ([-20, 1], [4, 0], [3.3, -2.1]):
        r = cq.form_restriction(FAM, z)
        assert r.sigma[0, 1] == -1.0 and r.sigma[1, 0] == 1.0 and not r.degenerate


def test_grid_family_reproduces_form():
    x = np.linspace(-30, 30, 6001)
    gf = cq.GridFamily(lambda z, x: cq.gaussian_wavefunction(1.0, z[0], z[1], x), x, 2)
    assert np.allclose(cq.form_restriction(gf, [0.5, 1.2]).sigma, [[0, -1], [1, 0]], atol=1e-6)


def test_form_invariant_under_rephasing():
    x = np.linspace(-30, 30, 6001)
    plain = cq.GridFamily(lambda z, x: cq.gaussian_wavefunction(1.0, z[0], z[1], x), x, 2)
    phased = cq.GridFamily(
        lambda z, x: np.exp(1j * (z[0] ** 2 + 3 * z[1])) * cq.gaussian_wavefunction(1.0, z[0], z[1], x), x, 2)
    z = [0.7, -0.4]
    assert np.allclose(cq.form_restriction(plain, z).sigma, cq.form_restriction(phased, z).sigma, atol=1e-6)


def test_one_parameter_family_degenerate():
    x = np.linspace(-20, 20, 2001)
    f = cq.GridFamily(lambda z, x: cq.gaussian_wavefunction(1.0, z[0], 0.0, x), x, 1)
    r = cq.form_restriction(f, [0.0])
    assert r.degenerate and np.all(r.sigma == 0)
    with pytest.raises(NonSymplecticError):
        r.inverse()


def test_rotor_family_rank_six():
    fam = cq.RotorCoherentFamily((1, 2, 3))
    r = cq.form_restriction(fam, np.zeros(9))
    assert r.rank == 6 and r.degenerate
    P = r.kernel.T @ r.kernel
    assert np.allclose(P, np.diag([1, 1, 1, 0, 0, 0, 0, 0, 0]), atol=1e-10)
    with pytest.raises(NonSymplecticError) as e:
        cq.eom_rhs(fam, np.zeros(9))
    assert e.value.kernel.shape == (3, 9)


def test_overlap_failure_reported_with_location():
    class Broken(cq.CoherentFamily):
        n_params = 2

        def tangent_overlaps(self, z):
            raise RuntimeError("boom")

    with pytest.raises(Exception, match="z="):
        cq.form_restriction(Broken(), [1.0, 2.0])


def test_eom_free_flight():
    assert np.allclose(cq.eom_rhs(FAM, [-50, 1]), [2, 0], atol=1e-12)


def test_eom_at_barrier_midpoint():
    assert np.allclose(cq.eom_rhs(FAM, [4, 0]), [0, 0], atol=1e-15)


def test_constant_hamiltonian_no_motion():
    class Flat(cq.GaussianPacketFamily):
        def energy_gradient(self, z):
            return np.zeros(2)

    assert np.all(cq.eom_rhs(Flat(1.0), [1, 2]) == 0)


@settings(max_examples=30)
@given(st.floats(0.1, 10), st.floats(-10, 18), st.floats(-3, 3))
def test_eom_is_canonical(alpha, x, k):
    fam = cq.GaussianPacketFamily(alpha, V)
    assert np.allclose(cq.eom_rhs(fam, [x, k]), [2 * k, -smeared_gradient(alpha, x)], atol=1e-12)


def test_gradient_against_finite_differences():
    h = 1e-6
    for a in (0.3, 1.0, 5.0):
        fam = cq.GaussianPacketFamily(a, V)
        for z in ([-1.0, 0.4], [0.2, 1.3], [7.5, -0.8]):
            g = fam.energy_gradient(z)
            for i in range(2):
                e = np.zeros(2)
                e[i] = h
                fd = (fam.energy(np.add(z, e)) - fam.energy(np.subtract(z, e))) / (2 * h)
                assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_brackets():
    z = [1.0, 0.7]
    ex, ek = np.array([1.0, 0]), np.array([0, 1.0])
    assert cq.bracket_on_family(FAM, ex, ek, z) == pytest.approx(1.0)
    assert cq.bracket_on_family(FAM, ex, ex, z) == 0
    gH = FAM.energy_gradient(z)
    assert cq.bracket_on_family(FAM, ex, gH, z) == pytest.approx(2 * 0.7)
    F, G = np.array([0.3, -1.1]), np.array([2.0, 0.5])
    assert abs(cq.bracket_on_family(FAM, F, G, z) + cq.bracket_on_family(FAM, G, F, z)) <= 1e-12


def test_brackets_match_trajectory_derivatives():
    t = np.linspace(0, 10, 20)
    tr = cq.integrate(FAM, [-6, 1.1], (0, 10), tol=1e-12, t_eval=t)
    h = 1e-4
    for ti, z in zip(t, tr.states):
        zp = cq.integrate(FAM, z, (0, h), tol=1e-13, t_eval=[h], check_energy=False).states[-1]
        zm = cq.integrate(FAM, z, (0, -h), tol=1e-13, t_eval=[-h], check_energy=False).states[-1]
        dz = (zp - zm) / (2 * h)
        gH = FAM.energy_gradient(z)
        for i in range(2):
            assert dz[i] == pytest.approx(cq.bracket_on_family(FAM, np.eye(2)[i], gH, z), abs=1e-6)


def test_transmitting_and_reflecting_trajectories():
    tr = cq.integrate(FAM, [-20, 2], (0, 40), tol=1e-10)
    assert tr.states[-1, 0] > V.L + 10
    tr = cq.integrate(FAM, [-20, 0.5], (0, 80), tol=1e-10)
    assert tr.states[:, 1].min() < 0 and tr.states[-1, 0] < -10
    # turning point: all kinetic energy above the zero point spent against the smeared barrier
    i = np.argmin(np.abs(tr.states[:, 1]))
    assert barrier.smeared_potential(V, 1.0, tr.states[i, 0]) == pytest.approx(0.25, abs=1e-3)


def test_rest_far_from_barrier():
    tr = cq.integrate(FAM, [-200, 0.0], (0, 50), tol=1e-10)
    assert np.all(tr.states == tr.states[0])


def test_energy_conservation_monitor():
    tr = cq.integrate(FAM, [-10, 1.2], (0, 50), tol=1e-12)
    assert np.max(np.abs(tr.energies - tr.energies[0])) <= 100 * 1e-12 * 50


def test_against_reference_integrator():
    a = 1.0
    t = np.linspace(0, 50, 101)
    ref = solve_ivp(lambda t, z: [2 * z[1], -smeared_gradient(a, z[0])], (0, 50), [-10, 1.2],
                    method="DOP853", rtol=1e-13, atol=1e-13, t_eval=t)
    tr = cq.integrate(FAM, [-10, 1.2], (0, 50), tol=1e-12, t_eval=t)
    assert np.max(np.abs(tr.states - ref.y.T)) <= 1e-8


def test_degenerate_family_aborts_integration():
    fam = cq.RotorCoherentFamily((1, 2, 3))
    with pytest.raises(NonSymplecticError):
        cq.integrate(fam, np.zeros(9), (0, 1))


def test_representation_orbit_family_form():
    # spin-1 orbit through |m=1>: rank-2 form (the sphere), degenerate in 3 parameters
    rep = spin1_representation()
    fam = cq.RepresentationOrbitFamily(rep, [1, 0, 0], H=rep.generators[2])
    r = cq.form_restriction(fam, [0.0, 0.0, 0.0])
    assert r.rank == 2


@pytest.mark.parametrize("alpha", [0.5, 0.01])
def test_constrained_transmission_examples(alpha):
    assert cq.constrained_transmission(alpha, 1.2) == 1
    assert cq.constrained_transmission(alpha, 0.8) == 0


def test_constrained_curve_matches_energy_threshold():
    a = 4.0
    vmax = barrier.smeared_potential_max(V, a)
    ks = [0.6, 0.9, np.sqrt(vmax) - 0.02, np.sqrt(vmax) + 0.02, 1.1]
    T = [t for _, t in cq.constrained_curve(a, ks)]
    assert T == [float(k * k > vmax) for k in ks]


def test_nonpositive_kbar_never_transmits():
    assert cq.constrained_transmission(1.0, 0.0) == 0
    assert cq.constrained_transmission(1.0, -1.0) == 0


def test_trajectory_rows():
    tr = cq.integrate(FAM, [-5, 1], (0, 1), t_eval=[0, 1])
    rows = list(tr.rows())
    assert cq.TRAJECTORY_HEADER == ["t", "xbar", "kbar", "H"] and len(rows[0]) == 4
