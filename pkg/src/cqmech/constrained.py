"""Quantum dynamics constrained to a manifold of coherent states.

A family maps parameters ``z`` to normalised states ``psi(z)``.  The restricted
symplectic form is ``sigma = -2 hbar Im <d psi|d psi>`` (using the component of
the tangent vectors orthogonal to ``psi``), and where it is invertible the
parameters move as ``dz/dt = sigma^-1 grad H``.  The orientation of that
inverse is pinned by requiring a Gaussian packet with positive mean wave number
to move to the right.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import algebra, barrier
from .errors import NonSymplecticError, NumericalError, ValidationError
from .ode import dopri5

HBAR = 1.0


class CoherentFamily:
    """Parametrised family of states with tangent-overlap and energy data.

    Subclasses implement ``tangent_overlaps(z)`` (the Hermitian matrix
    ``<d_mu psi | (1 - |psi><psi|) | d_nu psi>``), ``energy(z)`` and
    ``energy_gradient(z)``.  Setting ``constant_form`` lets the integrator
    invert the form once instead of at every stage.
    """

    n_params = 0
    constant_form = False

    def tangent_overlaps(self, z):
        raise NotImplementedError

    def energy(self, z):
        raise NotImplementedError

    def energy_gradient(self, z):
        raise NotImplementedError


class GaussianPacketFamily(CoherentFamily):
    """Minimal-uncertainty packets of fixed width parameter, z = (xbar, kbar)."""

    n_params = 2
    constant_form = True

    def __init__(self, alpha, V=barrier.BarrierPotential()):
        if not alpha > 0:
            raise ValidationError(f"alpha must be positive, got {alpha}")
        self.alpha = float(alpha)
        self.V = V

    def tangent_overlaps(self, z):
        a = self.alpha
        # d_x psi = (x - xbar)/alpha psi, d_k psi = i x psi, with Gaussian moments
        return np.array([[1 / (2 * a), 0.5j], [-0.5j, a / 2]])

    def energy(self, z):
        x, k = z
        return float(barrier.effective_hamiltonian(self.V, self.alpha, x, k))

    def energy_gradient(self, z):
        x, k = float(z[0]), float(z[1])
        a, V0, L = self.alpha, self.V.V0, self.V.L
        dv = V0 / math.sqrt(math.pi * a) * (math.exp(-x * x / a) - math.exp(-(L - x) ** 2 / a))
        return np.array([dv, 2 * k])

    def wavefunction(self, z, x):
        xbar, kbar = z
        return gaussian_wavefunction(self.alpha, xbar, kbar, x)


def gaussian_wavefunction(alpha, xbar, kbar, x):
    x = np.asarray(x, dtype=float)
    return ((np.pi * alpha) ** -0.25 * np.exp(-(x - xbar) ** 2 / (2 * alpha))
            * np.exp(1j * kbar * x))


class GridFamily(CoherentFamily):
    """Family given by a wave-function callable sampled on a 1-D grid.

    Tangent vectors come from central differences in ``z``; the energy uses a
    three-point Laplacian, so this class is a numerical cross-check rather
    than a production path.
    """

    def __init__(self, psi, x, n_params, potential=None, h=1e-5):
        self.psi = psi
        self.x = np.asarray(x, dtype=float)
        self.dx = self.x[1] - self.x[0]
        self.n_params = n_params
        self.potential = None if potential is None else np.asarray(potential, dtype=float)
        self.h = h

    def _ip(self, a, b):
        return np.sum(a.conj() * b) * self.dx

    def _state(self, z):
        p = self.psi(np.asarray(z, dtype=float), self.x)
        return p / np.sqrt(self._ip(p, p).real)

    def tangent_overlaps(self, z):
        z = np.asarray(z, dtype=float)
        psi = self._state(z)
        d = []
        for mu in range(self.n_params):
            e = np.zeros_like(z)
            e[mu] = self.h
            d.append((self._state(z + e) - self._state(z - e)) / (2 * self.h))
        n = self.n_params
        out = np.empty((n, n), dtype=complex)
        proj = [self._ip(psi, dm) for dm in d]
        for mu in range(n):
            for nu in range(n):
                out[mu, nu] = self._ip(d[mu], d[nu]) - proj[mu].conjugate() * proj[nu]
        return out

    def energy(self, z):
        psi = self._state(z)
        lap = np.zeros_like(psi)
        lap[1:-1] = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / self.dx ** 2
        hpsi = -lap
        if self.potential is not None:
            hpsi = hpsi + self.potential * psi
        return float(self._ip(psi, hpsi).real)

    def energy_gradient(self, z):
        z = np.asarray(z, dtype=float)
        g = np.empty(self.n_params)
        for mu in range(self.n_params):
            e = np.zeros_like(z)
            e[mu] = self.h
            g[mu] = (self.energy(z + e) - self.energy(z - e)) / (2 * self.h)
        return g


class RepresentationOrbitFamily(CoherentFamily):
    """Orbit ``exp(-i sum z_a G_a) psi0`` in a finite-dimensional representation."""

    def __init__(self, rep, psi0, H=None, h=1e-6):
        self.rep = rep
        self.psi0 = np.asarray(psi0, dtype=complex) / np.linalg.norm(psi0)
        self.H = None if H is None else np.asarray(H, dtype=complex)
        self.n_params = rep.dim_alg
        self.h = h

    def state(self, z):
        return self.rep.group_element(np.asarray(z, dtype=float)) @ self.psi0

    def tangent_overlaps(self, z):
        z = np.asarray(z, dtype=float)
        psi = self.state(z)
        d = []
        for a in range(self.n_params):
            e = np.zeros_like(z)
            e[a] = self.h
            d.append((self.state(z + e) - self.state(z - e)) / (2 * self.h))
        D = np.array(d)
        proj = D.conj() @ psi
        return D.conj() @ D.T - np.outer(proj, proj.conj())

    def energy(self, z):
        psi = self.state(z)
        return float((psi.conj() @ self.H @ psi).real)

    def energy_gradient(self, z):
        z = np.asarray(z, dtype=float)
        g = np.empty(self.n_params)
        for a in range(self.n_params):
            e = np.zeros_like(z)
            e[a] = self.h
            g[a] = (self.energy(z + e) - self.energy(z - e)) / (2 * self.h)
        return g


class RotorCoherentFamily(CoherentFamily):
    """Nine-parameter rotor family (boosts Q_ij, rotation vector xi) in the sharp-orientation limit.

    Only the symplectic part of the tangent overlaps is modelled: in the
    generator frame ``Im <d_a psi|d_b psi> = rho([E_a, E_b]) / 2`` with ``rho``
    the classical density of the state, so the real (metric) part is returned
    as zero.  That is enough to expose the degeneracy of the form.
    """

    n_params = 9

    def __init__(self, moments):
        from . import rotor
        self._rotor = rotor
        self.moments = rotor.IntrinsicMoments.of(moments)
        self.sc = rotor.rma_structure_constants()

    def _split(self, z):
        z = np.asarray(z, dtype=float)
        q = z[:6]
        Q = np.array([[q[0], q[5], q[4]], [q[5], q[1], q[3]], [q[4], q[3], q[2]]])
        xi = z[6:]
        ang = np.linalg.norm(xi)
        R = np.eye(3) if ang == 0 else self._rotor.rotation(xi, ang)
        return Q, R

    def density(self, z):
        rt = self._rotor
        Q, R = self._split(z)
        Lbar = rt.lbar_from_Q(self.moments, Q)
        return rt.rma_density(rt.inertia_function(self.moments, R), R.T @ Lbar)

    def tangent_overlaps(self, z):
        sig = algebra.poisson_matrix(self.sc, self.density(z))
        return 0.5j * sig

    def energy(self, z):
        Q, _ = self._split(z)
        Lbar = self._rotor.lbar_from_Q(self.moments, Q)
        return 0.5 * float(np.sum(Lbar ** 2 / self.moments.values))

    def energy_gradient(self, z):
        Q, _ = self._split(z)
        I = self.moments.values
        Lbar = self._rotor.lbar_from_Q(self.moments, Q)
        w = Lbar / I
        eps = algebra.levi_civita()
        g = np.zeros(9)
        for a, (i, j) in enumerate(((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))):
            if i != j:
                g[a] = 2 * (I[i] - I[j]) * np.dot(eps[i, j], w)
        return g


@dataclass(frozen=True)
class SymplecticRestriction:
    sigma: np.ndarray
    rank: int
    kernel: np.ndarray

    @property
    def degenerate(self):
        return self.rank < self.sigma.shape[0]

    def inverse(self):
        if self.degenerate:
            raise NonSymplecticError(
                f"restricted form has rank {self.rank} < {self.sigma.shape[0]}: the manifold is "
                "not symplectic and the constrained equations of motion are undefined; "
                "project to the coadjoint orbit (rotor module) or gauge-average instead",
                kernel=self.kernel)
        return np.linalg.inv(self.sigma)


def form_restriction(fam, z, hbar=HBAR):
    try:
        S = np.asarray(fam.tangent_overlaps(z), dtype=complex)
    except Exception as exc:
        raise NumericalError(f"overlap oracle failed at z={np.asarray(z).tolist()}: {exc}") from exc
    if np.max(np.abs(S - S.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(S))):
        raise ValidationError("tangent overlap matrix is not Hermitian")
    sigma = -2 * hbar * S.imag
    sigma = 0.5 * (sigma - sigma.T)
    rank, kernel, _ = algebra.matrix_rank_kernel(sigma)
    return SymplecticRestriction(sigma, rank, kernel)


def eom_rhs(fam, z, hbar=HBAR):
    """Parameter velocity ``sigma^-1 grad H``."""
    inv = form_restriction(fam, z, hbar).inverse()
    return inv @ np.asarray(fam.energy_gradient(z), dtype=float)


def bracket_on_family(fam, grad_F, grad_G, z, hbar=HBAR):
    inv = form_restriction(fam, z, hbar).inverse()
    return float(np.asarray(grad_F, dtype=float) @ inv @ np.asarray(grad_G, dtype=float))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    stopped: bool = False

    def rows(self):
        for t, z, e in zip(self.times, self.states, self.energies):
            yield [t, *z, e]


TRAJECTORY_HEADER = ["t", "xbar", "kbar", "H"]


class DegenerateTrajectoryError(NonSymplecticError):
    def __init__(self, message, kernel, t_last, z_last):
        super().__init__(message, kernel=kernel, z=z_last)
        self.t_last = t_last


def integrate(fam, z0, t_span, tol=1e-10, t_eval=None, stop=None, check_energy=True,
              max_step=np.inf):
    """Follow the constrained flow with adaptive Dormand-Prince steps.

    Energy drift is checked afterwards against ``100 * tol * |t|``.  If the
    form turns degenerate along the way the error carries the last accepted
    state.
    """
    last = {"t": float(t_span[0]), "z": np.array(z0, dtype=float)}

    if getattr(fam, "constant_form", False):
        inv = form_restriction(fam, z0).inverse()

        def f(t, z):
            return inv @ fam.energy_gradient(z)
    else:
        def f(t, z):
            return eom_rhs(fam, z)

    def on_step(t, z):
        last["t"], last["z"] = t, z.copy()
        return bool(stop(t, z)) if stop is not None else False

    try:
        res = dopri5(f, t_span, z0, rtol=tol, atol=tol, t_eval=t_eval, stop=on_step,
                     max_step=max_step)
    except NonSymplecticError as exc:
        raise DegenerateTrajectoryError(str(exc), exc.kernel, last["t"], last["z"]) from None
    energies = np.array([fam.energy(z) for z in res.y])
    if check_energy:
        drift = np.abs(energies - energies[0])
        bound = 100 * tol * np.abs(res.t - res.t[0]) * max(1.0, abs(energies[0]))
        if np.any(drift > bound + 1e-14):
            raise NumericalError(f"energy drift {drift.max():.3e} exceeds 100*tol*|t|")
    return Trajectory(res.t, res.y, energies, stopped=res.stopped)


def start_position(alpha):
    return -10 * np.sqrt(alpha) - 10


def constrained_transmission(alpha, kbar, V=barrier.BarrierPotential(), tol=1e-10,
                             t_max=None, family=None):
    """1 if the constrained packet crosses the barrier, 0 if it is reflected.

    Decided by integrating the trajectory from far upstream, not by the energy
    comparison it should agree with.
    """
    fam = family or GaussianPacketFamily(alpha, V)
    x0 = start_position(alpha)
    x_transmit = V.L + 10 * np.sqrt(alpha) + 10
    if kbar <= 0:
        return 0
    if t_max is None:
        t_max = 1e3 * (x_transmit - x0) / min(kbar, 1.0)
    outcome = {}

    def stop(t, z):
        if z[0] > x_transmit:
            outcome["T"] = 1
        elif z[0] < x0 and z[1] < 0:
            outcome["T"] = 0
        return "T" in outcome

    # the smeared edges are ~sqrt(alpha) wide; keep steps short enough to see them
    speed = 2 * np.sqrt(fam.energy([x0, kbar]))
    integrate(fam, [x0, kbar], (0.0, t_max), tol=tol, stop=stop, t_eval=[0.0],
              max_step=0.2 * np.sqrt(alpha) / speed)
    if "T" not in outcome:
        raise NumericalError(f"no transmit/reflect decision by t={t_max} (alpha={alpha}, kbar={kbar})")
    return outcome["T"]


def constrained_curve(alpha, k_grid, V=barrier.BarrierPotential(), tol=1e-10):
    return [(float(k), float(constrained_transmission(alpha, k, V, tol))) for k in k_grid]
