"""One-dimensional time-dependent Schrodinger solver (Crank-Nicolson).

Used as an independent check on the closed-form transmission coefficient and
to watch a Gaussian packet leave the coherent-state manifold.  Units follow
the rest of the package: hbar = 1, hbar^2/2m = 1, so H = -d^2/dx^2 + V and the
probability current is j = 2 Im(conj(psi) dpsi/dx).
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from . import barrier
from .errors import GeometryError, NumericalError, ValidationError

SUPPORT_SIGMAS = 8.0        # packet support half-width in units of sqrt(alpha)
FLUX_TOL = 1e-8
FLUX_PROBES = 5
EDGE_MASS_TOL = 1e-8
NORM_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValidationError(f"grid needs x_max > x_min, got [{self.x_min}, {self.x_max}]")
        if self.n < 3:
            raise ValidationError(f"grid needs at least 3 points, got {self.n}")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.n)

    @classmethod
    def aligned(cls, x_min, x_max, dx):
        """Grid of spacing ``dx`` whose nodes include x = 0 (and x = L when L/dx is whole)."""
        i0 = math.floor(x_min / dx)
        i1 = math.ceil(x_max / dx)
        return cls(i0 * dx, i1 * dx, i1 - i0 + 1)


@dataclass
class GridState:
    psi: np.ndarray
    t: float = 0.0


def norm(grid, psi):
    return float(np.sum(np.abs(psi) ** 2) * grid.dx)


def init_gaussian(grid, alpha, xbar, kbar):
    """Minimal packet (pi alpha)^(-1/4) exp(-(x - xbar)^2 / 2 alpha + i kbar x), renormalised on the grid."""
    if not alpha > 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    half = SUPPORT_SIGMAS * math.sqrt(alpha)
    if xbar - grid.x_min <= half or grid.x_max - xbar <= half:
        raise GeometryError(f"packet at {xbar} with half-width {half:.3g} does not fit "
                            f"in [{grid.x_min}, {grid.x_max}]; enlarge the grid")
    if abs(kbar) * grid.dx >= math.pi / 2:
        raise GeometryError(f"grid spacing {grid.dx} cannot resolve wave number {kbar}")
    x = grid.x
    psi = (np.pi * alpha) ** -0.25 * np.exp(-(x - xbar) ** 2 / (2 * alpha) + 1j * kbar * x)
    psi /= math.sqrt(norm(grid, psi))
    return GridState(psi, 0.0)


def potential_on_grid(grid, V):
    """Sample ``V`` on the grid.

    A ``BarrierPotential`` is cell-averaged, so a node sitting exactly on a
    barrier edge gets V0/2.  Arrays are taken as already sampled; ``None``
    means free motion.
    """
    if V is None:
        return np.zeros(grid.n)
    if isinstance(V, barrier.BarrierPotential):
        x, h = grid.x, grid.dx
        lo = np.clip(x - h / 2, 0.0, V.L)
        hi = np.clip(x + h / 2, 0.0, V.L)
        return V.V0 * (hi - lo) / h
    v = np.asarray(V, dtype=float)
    if v.shape != (grid.n,):
        raise ValidationError(f"potential array has shape {v.shape}, grid has {grid.n} points")
    return v


def _hamiltonian_bands(grid, v):
    h2 = grid.dx ** 2
    return np.full(grid.n - 1, -1 / h2), 2 / h2 + v


def apply_hamiltonian(grid, v, psi):
    off, diag = _hamiltonian_bands(grid, v)
    out = diag * psi
    out[:-1] += off * psi[1:]
    out[1:] += off * psi[:-1]
    return out


def energy(grid, v, psi):
    return float(np.real(np.vdot(psi, apply_hamiltonian(grid, v, psi))) * grid.dx)


def step(grid, state, dt, V=None):
    """One Crank-Nicolson step: (1 + i dt H/2) psi' = (1 - i dt H/2) psi.

    Dirichlet walls at both ends.  Negative ``dt`` runs backwards in time.
    """
    if dt == 0 or not np.isfinite(dt):
        raise ValidationError(f"dt must be finite and nonzero, got {dt}")
    v = potential_on_grid(grid, V)
    off, diag = _hamiltonian_bands(grid, v)
    c = 0.5j * dt
    rhs = state.psi - c * apply_hamiltonian(grid, v, state.psi)
    ab = np.zeros((3, grid.n), dtype=complex)
    ab[0, 1:] = c * off
    ab[1] = 1 + c * diag
    ab[2, :-1] = c * off
    try:
        psi = linalg.solve_banded((1, 1), ab, rhs)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"tridiagonal solve failed at t={state.t}: {exc}") from exc
    if not np.all(np.isfinite(psi)):
        raise NumericalError(f"non-finite wave function after step at t={state.t}")
    return GridState(psi, state.t + dt)


class Propagator:
    """Crank-Nicolson stepper with the left-hand matrix factorised once."""

    def __init__(self, grid, dt, V=None):
        if dt == 0 or not np.isfinite(dt):
            raise ValidationError(f"dt must be finite and nonzero, got {dt}")
        self.grid, self.dt = grid, dt
        self.v = potential_on_grid(grid, V)
        off, diag = _hamiltonian_bands(grid, self.v)
        c = 0.5j * dt
        lhs = diags([c * off, 1 + c * diag, c * off], [-1, 0, 1], format="csc")
        rhs = diags([-c * off, 1 - c * diag, -c * off], [-1, 0, 1], format="csr")
        try:
            self._lu = splu(lhs)
        except RuntimeError as exc:
            raise NumericalError(f"Crank-Nicolson factorisation failed: {exc}") from exc
        self._rhs = rhs

    def __call__(self, state, n=1):
        psi = state.psi
        for _ in range(n):
            psi = self._lu.solve(self._rhs @ psi)
        return GridState(psi, state.t + n * self.dt)


def probability_current(grid, psi, x0):
    """j = 2 Im(conj(psi) psi') at the node nearest x0 (centred difference)."""
    i = int(round((x0 - grid.x_min) / grid.dx))
    i = min(max(i, 1), grid.n - 2)
    dpsi = (psi[i + 1] - psi[i - 1]) / (2 * grid.dx)
    return float(2 * np.imag(np.conj(psi[i]) * dpsi))


def mass_beyond(grid, psi, x0):
    """Probability on nodes with x > x0."""
    return float(np.sum(np.abs(psi[grid.x > x0]) ** 2) * grid.dx)


def default_resolution(kbar, alpha):
    """Spacing and time step for a packet of mean wave number kbar.

    dx is 1/40 of the shortest significant de Broglie wavelength, capped at
    0.05.  Crank-Nicolson keeps each eigenvector of the discrete Hamiltonian
    invariant, so the measured transmission does not depend on dt; dt only
    sets the timing error, and dt = dx is ample for that.
    """
    k_top = abs(kbar) + 6 / math.sqrt(2 * alpha)
    dx = min(2 * math.pi / k_top / 40, 0.05)
    return dx, dx


def auto_grid(alpha, kbar, V=barrier.BarrierPotential(), dx=None):
    """Grid and start position large enough that nothing reaches the walls.

    Returns ``(grid, xbar, t_est)`` where ``t_est`` is the expected time for
    the packet tail to clear the barrier.
    """
    if dx is None:
        dx, _ = default_resolution(kbar, alpha)
    s = math.sqrt(alpha)
    lam = 2 * math.pi / kbar
    w0 = SUPPORT_SIGMAS * s + 10 * lam
    xbar = -w0
    t_est = 1.5 * (w0 + V.L + SUPPORT_SIGMAS * s) / (2 * kbar)
    sd_end = math.sqrt(alpha / 2 + 2 * t_est ** 2 / alpha)
    half = 10 * sd_end + 10 * lam
    grid = Grid.aligned(xbar - half, V.L + w0 + half, dx)
    return grid, xbar, t_est


@dataclass
class PacketResult:
    transmission: float
    reflection: float
    t_end: float
    steps: int
    norm_drift: float
    state: GridState
    grid: Grid


def transmission_of_packet(alpha, kbar, V=barrier.BarrierPotential(), grid=None, xbar=None,
                           dx=None, dt=None, probe_every=1.0, t_max=None,
                           flux_tol=FLUX_TOL, check_regime=True):
    """Evolve a minimal packet onto the barrier and measure the mass that ends up beyond it.

    The run stops once the current at both barrier edges has stayed below
    ``flux_tol`` for five consecutive probes (after the packet centre has had
    time to arrive).  Mass reaching a wall band raises ``GeometryError``.
    """
    if not kbar > 0:
        raise ValidationError(f"kbar must be positive, got {kbar}")
    if check_regime and not 1 / math.sqrt(2 * alpha) < kbar / 4:
        raise ValidationError(f"momentum spread {1 / math.sqrt(2 * alpha):.3g} is not below kbar/4; "
                              "the packet is too broad in k for the oracle")
    dx0, dt0 = default_resolution(kbar, alpha)
    dx = dx or dx0
    dt = dt or dt0
    t_est = None
    if grid is None:
        grid, xb, t_est = auto_grid(alpha, kbar, V, dx)
        xbar = xb if xbar is None else xbar
    elif xbar is None:
        raise ValidationError("xbar is required with an explicit grid")
    lam = 2 * math.pi / kbar
    if grid.x_min > -10 * lam or grid.x_max < V.L + 10 * lam:
        raise GeometryError("barrier needs a margin of 10 wavelengths inside the grid")
    if t_max is None:
        t_max = 4 * (t_est or (grid.x_max - grid.x_min) / (2 * kbar))

    state = init_gaussian(grid, alpha, xbar, kbar)
    prop = Propagator(grid, dt, V)
    n_probe = max(1, int(round(probe_every / dt)))
    t_arrive = (0 - xbar) / (2 * kbar)
    band = max(0.02 * (grid.x_max - grid.x_min), 10 * grid.dx)
    x = grid.x
    walls = (x < grid.x_min + band) | (x > grid.x_max - band)
    quiet = 0
    steps = 0
    while True:
        state = prop(state, n_probe)
        steps += n_probe
        edge_mass = float(np.sum(np.abs(state.psi[walls]) ** 2) * grid.dx)
        if edge_mass > EDGE_MASS_TOL:
            raise GeometryError(f"mass {edge_mass:.2e} reached the grid walls at t={state.t:.4g}; "
                                "use a larger grid")
        flux = abs(probability_current(grid, state.psi, 0.0)) + \
            abs(probability_current(grid, state.psi, V.L))
        quiet = quiet + 1 if (state.t > t_arrive and flux < flux_tol) else 0
        if quiet >= FLUX_PROBES:
            break
        if state.t > t_max:
            raise NumericalError(f"barrier flux still {flux:.2e} at t={state.t:.4g}")
    n_end = norm(grid, state.psi)
    return PacketResult(transmission=mass_beyond(grid, state.psi, V.L),
                        reflection=float(np.sum(np.abs(state.psi[x < 0]) ** 2) * grid.dx),
                        t_end=state.t, steps=steps, norm_drift=abs(n_end - 1.0),
                        state=state, grid=grid)


def moments(grid, psi):
    """Return (<x>, <p>, var x, var p); p from the discrete Fourier transform."""
    x = grid.x
    rho = np.abs(psi) ** 2
    n = np.trapezoid(rho, x)
    xm = np.trapezoid(x * rho, x) / n
    xv = np.trapezoid((x - xm) ** 2 * rho, x) / n
    phi = np.abs(np.fft.fft(psi)) ** 2
    k = 2 * np.pi * np.fft.fftfreq(grid.n, grid.dx)
    w = phi / phi.sum()
    pm = float(np.sum(k * w))
    pv = float(np.sum((k - pm) ** 2 * w))
    return float(xm), pm, float(xv), pv


TRACK_HEADER = ["t", "x_mean", "p_mean", "x_var", "p_var"]
SNAPSHOT_HEADER = ["x", "re_psi", "im_psi", "abs2"]


def ehrenfest_track(grid, states):
    """Table of (t, <x>, <p>, var x, var p) for a sequence of GridStates."""
    return [[s.t, *moments(grid, s.psi)] for s in states]


def snapshot_rows(grid, state):
    return [[float(x), float(p.real), float(p.imag), float(abs(p) ** 2)]
            for x, p in zip(grid.x, state.psi)]


def overlap(grid, alpha, xbar, kbar, psi):
    """|<alpha, xbar, kbar|psi>|^2 with the family member renormalised on the grid."""
    x = grid.x
    g = np.exp(-(x - xbar) ** 2 / (2 * alpha) + 1j * kbar * x)
    gn = np.sum(np.abs(g) ** 2)
    if gn == 0:
        return 0.0
    return float(abs(np.vdot(g, psi)) ** 2 / (gn * np.sum(np.abs(psi) ** 2)))


def _local_wavenumber(grid, psi, i):
    i = min(max(i, 1), grid.n - 2)
    dpsi = (psi[i + 1] - psi[i - 1]) / (2 * grid.dx)
    return float(np.imag(np.conj(psi[i]) * dpsi) / max(abs(psi[i]) ** 2, 1e-300))


def fidelity_to_family(grid, state, alpha, xatol=1e-8):
    """Best overlap of ``state`` with a fixed-width minimal packet.

    Seeds: the mean position and wave number, then the peak of |psi|^2 with
    the local wave number there.  Each seed is refined by Nelder-Mead.
    """
    psi = state.psi
    xm, pm, _, _ = moments(grid, psi)
    ipk = int(np.argmax(np.abs(psi)))
    seeds = [(xm, pm), (float(grid.x[ipk]), _local_wavenumber(grid, psi, ipk))]
    best = None
    for s in seeds:
        f0 = overlap(grid, alpha, s[0], s[1], psi)
        res = optimize.minimize(lambda z: -overlap(grid, alpha, z[0], z[1], psi), np.array(s),
                                method="Nelder-Mead",
                                options={"xatol": xatol, "fatol": 1e-14, "maxiter": 4000})
        if res.success and -res.fun >= f0:
            cand = (tuple(float(v) for v in res.x), float(-res.fun))
        else:
            warnings.warn(f"fidelity search from seed {s} did not converge; using seeded value",
                          RuntimeWarning, stacklevel=2)
            cand = (tuple(float(v) for v in s), f0)
        if best is None or cand[1] > best[1]:
            best = cand
    return {"best_fit": best[0], "fidelity": min(best[1], 1.0)}
