"""Square-barrier penetration: ideal and Gaussian-smeared classical, quantal.

Units have hbar^2 / 2m = 1, so a free particle of wave number k has energy k^2.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erf, erfc

from .errors import NumericalError, ValidationError

K1_GUARD = 1e-6          # half-width of the band around k = 1 evaluated by the analytic limit
QUAD_ABS_TOL = 1e-9
WINDOW_SIGMAS = 8.0
MODES = ("icm", "cm", "qm", "qm_avg")


@dataclass(frozen=True)
class BarrierPotential:
    V0: float = 1.0
    L: float = 8.0

    def __post_init__(self):
        # V0 = 0 is allowed as the free-particle control case
        if not (self.V0 >= 0 and self.L > 0 and np.isfinite(self.V0) and np.isfinite(self.L)):
            raise ValidationError(f"barrier needs V0 >= 0 and L > 0, got V0={self.V0}, L={self.L}")


@dataclass(frozen=True)
class GaussianEnsemble:
    alpha: float
    xbar: float = 0.0
    kbar: float = 0.0

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def x_variance(self):
        return self.alpha / 2

    @property
    def k_variance(self):
        return 1 / (2 * self.alpha)

    def density(self, x, k):
        """Phase-space probability density of the ensemble."""
        return (np.exp(-(np.asarray(x) - self.xbar) ** 2 / self.alpha)
                * np.exp(-self.alpha * (np.asarray(k) - self.kbar) ** 2) / np.pi)


def _check_alpha(alpha):
    if not (alpha > 0):
        raise ValidationError(f"alpha must be positive, got {alpha}")


def potential(V, x):
    x = np.asarray(x, dtype=float)
    out = np.where((x >= 0) & (x <= V.L), V.V0, 0.0)
    return out if out.ndim else float(out)


def smeared_potential(V, alpha, xbar):
    """Potential averaged over a Gaussian position distribution of width parameter alpha."""
    _check_alpha(alpha)
    xbar = np.asarray(xbar, dtype=float)
    s = np.sqrt(alpha)
    out = 0.5 * V.V0 * (erf((V.L - xbar) / s) + erf(xbar / s))
    return out if out.ndim else float(out)


def smeared_potential_gradient(V, alpha, xbar):
    _check_alpha(alpha)
    xbar = np.asarray(xbar, dtype=float)
    out = V.V0 / np.sqrt(np.pi * alpha) * (np.exp(-xbar ** 2 / alpha)
                                            - np.exp(-(V.L - xbar) ** 2 / alpha))
    return out if out.ndim else float(out)


def smeared_potential_max(V, alpha):
    """Maximum over position; attained at the barrier midpoint by symmetry."""
    return smeared_potential(V, alpha, V.L / 2)


def effective_hamiltonian(V, alpha, x, k):
    """Energy expectation of the minimal packet: k^2 + 1/(2 alpha) + smeared V."""
    return np.asarray(k) ** 2 + 1 / (2 * alpha) + smeared_potential(V, alpha, x)


def t_ideal(k):
    k = np.asarray(k, dtype=float)
    out = np.where(k > 1, 1.0, 0.0)
    return out if out.ndim else float(out)


def t_classical_avg(alpha, kbar):
    """Transmission of the Gaussian classical ensemble: erfc(sqrt(alpha) (1 - kbar)) / 2."""
    _check_alpha(alpha)
    out = 0.5 * erfc(np.sqrt(alpha) * (1 - np.asarray(kbar, dtype=float)))
    return out if np.ndim(out) else float(out)


def _t_quantum_scalar(k, V, argument):
    E = k * k
    V0, L = V.V0, V.L
    if V0 == 0:
        return 1.0
    if abs(k - np.sqrt(V0)) < K1_GUARD:
        # both branches are 0/0 here; analytic limit
        return 4 * E / (4 * E + V0 * V0 * L * L)
    d = E - V0
    num = 8 * E * d / V0 ** 2
    phase = 2 * L * abs(d) if argument == "linear" else 2 * L * np.sqrt(abs(d))
    if d > 0:
        # 1 - cos x = 2 sin^2(x/2), avoids cancellation near threshold
        return num / (num + 2 * np.sin(phase / 2) ** 2)
    if phase > 1400:
        return 0.0  # sinh overflows; the ratio has long underflowed
    return num / (num - 2 * np.sinh(phase / 2) ** 2)


def t_quantum(k, V=BarrierPotential(), argument="sqrt"):
    """Plane-wave transmission through the square barrier.

    ``argument="sqrt"`` uses the standard phase 2 L sqrt|E - V0|;
    ``argument="linear"`` uses 2 L |E - V0| and exists only so the validation
    suite can show that it disagrees with wave-packet simulation.
    """
    if argument not in ("sqrt", "linear"):
        raise ValidationError(f"unknown argument form {argument!r}")
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ValidationError("t_quantum requires k > 0")
    if k.ndim == 0:
        return _t_quantum_scalar(float(k), V, argument)
    return np.array([_t_quantum_scalar(float(x), V, argument) for x in k.ravel()]).reshape(k.shape)


def resonance_wavenumbers(V, k_max):
    """Wave numbers above threshold with sqrt(k^2 - V0) L = n pi, up to k_max."""
    n_max = int(np.floor(np.sqrt(max(k_max ** 2 - V.V0, 0.0)) * V.L / np.pi))
    n = np.arange(1, n_max + 1)
    return np.sqrt(V.V0 + (n * np.pi / V.L) ** 2)


def t_quantum_avg(alpha, kbar, V=BarrierPotential(), argument="sqrt", epsabs=QUAD_ABS_TOL):
    """Transmission of a minimal packet: T_QM(k) averaged over its momentum distribution."""
    _check_alpha(alpha)
    sd = 1 / np.sqrt(2 * alpha)
    a = max(kbar - WINDOW_SIGMAS * sd, 0.0)
    b = kbar + WINDOW_SIGMAS * sd
    if b <= 0:
        return 0.0
    norm = np.sqrt(alpha / np.pi)

    def integrand(k):
        if k <= 0:
            return 0.0
        return t_quantum(k, V, argument) * norm * np.exp(-alpha * (k - kbar) ** 2)

    # split at threshold and resonances so the adaptive rule sees smooth pieces
    pts = [np.sqrt(V.V0)] + list(resonance_wavenumbers(V, b))
    pts = sorted(p for p in pts if a < p < b)
    with np.errstate(all="ignore"):
        val, err, info = integrate.quad(integrand, a, b, points=pts or None, epsabs=epsabs,
                                        epsrel=0.0, limit=2000, full_output=1)[:3]
    if err > 10 * epsabs:
        raise NumericalError(f"quadrature did not converge: alpha={alpha}, kbar={kbar}, "
                             f"estimate={val}, error={err}, evaluations={info.get('neval')}")
    return float(min(max(val, 0.0), 1.0))


def transmission_curve(mode, alpha, k_grid, V=BarrierPotential()):
    """Evaluate one transmission family on a strictly increasing positive k grid.

    Returns a list of ``(k, T)`` tuples.  ``alpha`` is ignored by the ``icm``
    and ``qm`` modes; ``alpha = inf`` for ``cm`` / ``qm_avg`` gives the sharp limits.
    """
    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.ndim != 1 or k_grid.size == 0:
        raise ValidationError("k grid must be a non-empty 1-D sequence")
    if np.any(k_grid <= 0) or np.any(np.diff(k_grid) <= 0):
        raise ValidationError("k grid must be positive and strictly increasing")
    if mode == "icm":
        T = t_ideal(k_grid)
    elif mode == "qm":
        T = t_quantum(k_grid, V)
    elif mode == "cm":
        T = t_ideal(k_grid) if np.isinf(alpha) else t_classical_avg(alpha, k_grid)
    elif mode == "qm_avg":
        T = (t_quantum(k_grid, V) if np.isinf(alpha)
             else np.array([t_quantum_avg(alpha, k, V) for k in k_grid]))
    else:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    return list(zip(k_grid.tolist(), np.asarray(T, dtype=float).tolist()))


CURVE_HEADER = ["k", "T", "mode", "alpha", "V0", "L"]


def curve_rows(mode, alpha, table, V):
    return [[k, T, mode, alpha, V.V0, V.L] for k, T in table]
