"""Asymmetric top from the rotor model algebra [R^6]so(3).

Orientation ``Omega`` maps space to body axes: the space-frame inertia tensor
is ``Omega.T @ diag(I) @ Omega`` and the space-frame angular momentum is
``Omega.T @ Lbody``.  Body-frame Euler equations and the 9-dimensional
Lie-Poisson flow on the algebra dual describe the same motion; both are
integrated here so they can be checked against each other.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import algebra
from .errors import NumericalError, ValidationError
from .ode import dopri5

# basis of the rotor model algebra
RMA_LABELS = ("I11", "I22", "I33", "I23", "I13", "I12", "L1", "L2", "L3")
_INERTIA_INDEX = {(0, 0): 0, (1, 1): 1, (2, 2): 2, (1, 2): 3, (0, 2): 4, (0, 1): 5}
DIAGONAL_INERTIA = (0, 1, 2)


def inertia_index(i, j):
    """Basis index of the inertia component ``I_ij`` (symmetric in ``i, j``)."""
    return _INERTIA_INDEX[(min(i, j), max(i, j))]


def rma_structure_constants():
    eps = algebra.levi_civita()
    c = np.zeros((9, 9, 9))
    for i in range(3):
        for k in range(3):
            L = 6 + k
            for j in range(3):
                I = inertia_index(i, j)
                if i > j:
                    continue
                # [I_ij, L_k] = i sum_l (eps_lik I_lj + eps_ljk I_li)
                for l in range(3):
                    c[I, L, inertia_index(l, j)] += eps[l, i, k]
                    c[I, L, inertia_index(l, i)] += eps[l, j, k]
    for I in range(6):
        for L in range(6, 9):
            c[L, I] = -c[I, L]
    c[6:, 6:, 6:] = eps
    return algebra.StructureConstants(c, name="rma", labels=RMA_LABELS)


@dataclass(frozen=True)
class IntrinsicMoments:
    I1: float
    I2: float
    I3: float

    def __post_init__(self):
        v = self.values
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValidationError(f"moments of inertia must be positive, got {tuple(v)}")
        if len(set(v.tolist())) < 3:
            warnings.warn("moments are not pairwise distinct (symmetric top)", stacklevel=3)

    @property
    def values(self):
        return np.array([self.I1, self.I2, self.I3], dtype=float)

    @classmethod
    def of(cls, m):
        if isinstance(m, cls):
            return m
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return cls(*map(float, m))


def check_orientation(R, tol=1e-10):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValidationError("orientation must be a 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValidationError("orientation is not a proper rotation")
    return R


def project_rotation(R):
    """Nearest rotation matrix (polar factor)."""
    u, _, vt = np.linalg.svd(R)
    q = u @ vt
    if np.linalg.det(q) < 0:
        u[:, -1] *= -1
        q = u @ vt
    return q


def skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotation(axis, angle):
    """Active rotation by ``angle`` about ``axis`` (Rodrigues)."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = skew(a)
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


@dataclass(frozen=True)
class RotorState:
    omega: np.ndarray
    L_body: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", check_orientation(self.omega))
        L = np.asarray(self.L_body, dtype=float)
        if L.shape != (3,):
            raise ValidationError("body angular momentum must be a 3-vector")
        object.__setattr__(self, "L_body", L)

    @property
    def L_space(self):
        return self.omega.T @ self.L_body

    def as_vector(self):
        return np.concatenate([self.omega.ravel(), self.L_body])

    @classmethod
    def from_vector(cls, y):
        return cls(project_rotation(np.reshape(y[:9], (3, 3))), y[9:12])


def inertia_function(moments, R):
    """Space-frame inertia tensor ``R.T diag(I) R``."""
    moments = IntrinsicMoments.of(moments)
    R = check_orientation(R)
    return R.T @ np.diag(moments.values) @ R


def lbar_from_Q(moments, Q):
    """Body angular momentum generated by the boost ``exp(i sum Q_ij I_ij)``."""
    moments = IntrinsicMoments.of(moments)
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (3, 3) or np.max(np.abs(Q - Q.T)) > 1e-12:
        raise ValidationError("Q must be a symmetric 3x3 matrix")
    I = moments.values
    diff = I[:, None] - I[None, :]
    return np.einsum("ij,ijl->l", Q * diff, algebra.levi_civita())


def classical_hamiltonian(moments, state):
    moments = IntrinsicMoments.of(moments)
    return 0.5 * float(np.sum(state.L_body ** 2 / moments.values))


def _checked_inverse(inertia):
    if np.linalg.cond(inertia) > 1e8:
        raise ValidationError("inertia tensor is too close to singular to invert")
    return np.linalg.inv(inertia)


def space_hamiltonian(inertia, L):
    """``1/2 L . inertia^-1 . L`` from space-frame quantities."""
    L = np.asarray(L, dtype=float)
    return 0.5 * float(L @ _checked_inverse(np.asarray(inertia, dtype=float)) @ L)


def euler_rhs(moments, state):
    """Time derivatives ``(dOmega/dt, dLbody/dt)`` of the free top."""
    I = IntrinsicMoments.of(moments).values
    w = state.L_body / I
    return -skew(w) @ state.omega, _cross(state.L_body, w)


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _euler_vector_field(I):
    # hot loop: avoid np.cross and small-matrix allocation overhead
    I1, I2, I3 = (float(x) for x in I)

    def f(t, y):
        L1, L2, L3 = y[9:].tolist()
        w1, w2, w3 = L1 / I1, L2 / I2, L3 / I3
        out = np.empty(12)
        # rows of -skew(w) @ Omega
        out[0:3] = w3 * y[3:6] - w2 * y[6:9]
        out[3:6] = w1 * y[6:9] - w3 * y[0:3]
        out[6:9] = w2 * y[0:3] - w1 * y[3:6]
        out[9:] = (L2 * w3 - L3 * w2, L3 * w1 - L1 * w3, L1 * w2 - L2 * w1)
        return out
    return f


def _project_state(y):
    y = y.copy()
    R = y[:9].reshape(3, 3)
    E = R.T @ R - np.eye(3)
    if np.max(np.abs(E)) < 1e-6:
        # one Newton-Schulz step converges quadratically to the polar factor
        y[:9] = (R - 0.5 * R @ E).ravel()
    else:
        y[:9] = project_rotation(R).ravel()
    return y


@dataclass
class RotorTrajectory:
    t: np.ndarray
    omega: np.ndarray        # (n, 3, 3)
    L_body: np.ndarray       # (n, 3)
    energy: np.ndarray
    lsq: np.ndarray

    def state(self, i):
        return RotorState(self.omega[i], self.L_body[i])

    @property
    def L_space(self):
        return np.einsum("nji,nj->ni", self.omega, self.L_body)

    def rows(self):
        for i, t in enumerate(self.t):
            yield [t, *self.L_body[i], *self.omega[i].ravel(), self.energy[i], self.lsq[i]]


TRAJECTORY_HEADER = ["t", "L1", "L2", "L3",
                     "R11", "R12", "R13", "R21", "R22", "R23", "R31", "R32", "R33", "H", "Lsq"]


def characteristic_period(moments, state):
    """``2 pi / |omega|`` for the initial body angular velocity."""
    w = np.linalg.norm(state.L_body / IntrinsicMoments.of(moments).values)
    return np.inf if w == 0 else 2 * np.pi / w


def evolve_rotor(moments, state0, t_span, tol=1e-10, t_eval=None, check=True):
    """Integrate Euler's equations with the orientation kept on SO(3).

    After the run ``|H(t) - H(0)|`` and ``||L|^2(t) - |L|^2(0)|`` are checked
    against ``100 * tol * |t|`` (scaled by the initial value when it exceeds 1).
    """
    moments = IntrinsicMoments.of(moments)
    I = moments.values
    if t_eval is None:
        t_eval = np.linspace(t_span[0], t_span[1], 201)
    res = dopri5(_euler_vector_field(I), t_span, state0.as_vector(), rtol=tol, atol=tol,
                 t_eval=t_eval, project=_project_state)
    om = res.y[:, :9].reshape(-1, 3, 3)
    L = res.y[:, 9:]
    energy = 0.5 * np.sum(L ** 2 / I, axis=1)
    lsq = np.sum(L ** 2, axis=1)
    traj = RotorTrajectory(res.t, om, L, energy, lsq)
    if check:
        dt = np.abs(res.t - res.t[0])
        for name, q in (("energy", energy), ("|L|^2", lsq)):
            bound = 100 * tol * dt * max(1.0, abs(q[0]))
            if np.any(np.abs(q - q[0]) > bound + 1e-15):
                raise NumericalError(f"{name} drift exceeds 100*tol*|t|")
    return traj


def rma_density(inertia, L):
    """9-component density (I11, I22, I33, I23, I13, I12, L1, L2, L3)."""
    S = np.asarray(inertia, dtype=float)
    return np.array([S[0, 0], S[1, 1], S[2, 2], S[1, 2], S[0, 2], S[0, 1], *L], dtype=float)


def inertia_from_density(rho):
    r = np.asarray(rho, dtype=float)
    return np.array([[r[0], r[5], r[4]], [r[5], r[1], r[3]], [r[4], r[3], r[2]]])


def space_hamiltonian_gradient(rho):
    """Gradient of ``1/2 L I^-1 L`` with respect to the 9 density components."""
    inertia = inertia_from_density(rho)
    L = np.asarray(rho[6:], dtype=float)
    w = _checked_inverse(inertia) @ L
    # dH = -1/2 w.dI.w; an off-diagonal component enters I twice
    g_inertia = np.array([-0.5 * w[0] ** 2, -0.5 * w[1] ** 2, -0.5 * w[2] ** 2,
                          -w[1] * w[2], -w[0] * w[2], -w[0] * w[1]])
    return np.concatenate([g_inertia, w])


def evolve_lie_poisson(rho0, t_span, tol=1e-10, t_eval=None, sc=None):
    sc = sc or rma_structure_constants()

    def f(t, rho):
        return algebra.lie_poisson_rhs(sc, rho, space_hamiltonian_gradient(rho))

    return dopri5(f, t_span, rho0, rtol=tol, atol=tol, t_eval=t_eval)


def lie_poisson_crosscheck(moments, state0, t_span, tol=1e-11, n_out=201):
    """Max deviation between the Euler-equation and 9-dim Lie-Poisson trajectories.

    Both flows are integrated independently; the Euler trajectory is mapped to
    densities through the inertia function and the frame rotation.
    """
    moments = IntrinsicMoments.of(moments)
    t_eval = np.linspace(t_span[0], t_span[1], n_out)
    traj = evolve_rotor(moments, state0, t_span, tol=tol, t_eval=t_eval)
    rho0 = rma_density(inertia_function(moments, state0.omega), state0.L_space)
    lp = evolve_lie_poisson(rho0, t_span, tol=tol, t_eval=t_eval)
    I = np.diag(moments.values)
    mapped = np.array([rma_density(om.T @ I @ om, om.T @ L)
                       for om, L in zip(traj.omega, traj.L_body)])
    return float(np.max(np.abs(mapped - lp.y)))


def orbit_geometry_report(moments):
    """Geometry of the coherent-state image at zero angular momentum and sharp orientation."""
    moments = IntrinsicMoments.of(moments)
    sc = rma_structure_constants()
    rho = rma_density(np.diag(moments.values), np.zeros(3))
    info = algebra.orbit_analysis(sc, rho)
    kernel = info.kernel_basis
    diag_span = np.eye(9)[list(DIAGONAL_INERTIA)]
    # kernel == span of diagonal moments iff same dimension and mutual projections are full
    contains = np.allclose(kernel @ diag_span.T @ diag_span @ kernel.T, np.eye(kernel.shape[0]),
                           atol=1e-10) if kernel.size else False
    diag_in_kernel = np.allclose(diag_span @ kernel.T @ kernel @ diag_span.T, np.eye(3), atol=1e-10)
    kernel_is_diagonal = bool(contains and diag_in_kernel)
    labels = [RMA_LABELS[a] for a in DIAGONAL_INERTIA] if kernel_is_diagonal else [
        [round(float(x), 12) + 0.0 for x in v] for v in kernel]
    return {
        "manifold_dim": 9,
        "orbit_dim": info.rank,
        "kernel_dim": int(kernel.shape[0]),
        "kernel": labels,
        "kernel_is_diagonal_moments": kernel_is_diagonal,
        "degenerate": info.rank < 6,
        "moments": moments.values.tolist(),
    }


def symmetric_top_rate(moments, L3):
    """Closed-form rate L3 (1/I3 - 1/I_perp) for I1 = I2 = I_perp."""
    I = IntrinsicMoments.of(moments).values
    if I[0] != I[1]:
        raise ValidationError("symmetric-top rate needs I1 == I2")
    return L3 * (1 / I[2] - 1 / I[0])


def measured_precession_rate(traj):
    """Least-squares rate lam with L1 + i L2 ~ exp(-i lam t) along a trajectory.

    Under Euler's equations the body components turn clockwise about the
    3-axis for positive lam, hence the minus sign.
    """
    phase = np.unwrap(np.angle(traj.L_body[:, 0] + 1j * traj.L_body[:, 1]))
    slope = np.polyfit(traj.t, phase, 1)[0]
    return float(-slope)
