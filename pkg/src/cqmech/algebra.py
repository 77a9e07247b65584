"""Finite-dimensional Lie algebras, their duals and matrix representations.

Conventions (hbar = 1): basis elements obey ``[E_a, E_b] = i sum_k c[a,b,k] E_k``
with real ``c``.  A classical density ``rho`` is a vector of values
``rho[a] = rho(E_a)`` and the Lie-Poisson structure at ``rho`` is
``sigma[a, b] = sum_k c[a, b, k] rho[k]`` so that ``{E_a, E_b} = E_k c[a,b,k]``
reproduces the commutator algebra with the ``i`` stripped off.
"""

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .errors import ValidationError

JACOBI_TOL = 1e-12
RANK_REL_TOL = 1e-9


@dataclass(frozen=True)
class StructureConstants:
    c: np.ndarray
    name: str = ""
    labels: tuple = ()

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]) or c.shape[0] < 1:
            raise ValidationError(f"structure tensor must have shape (n, n, n), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("structure tensor has non-finite entries")
        if np.max(np.abs(c + c.transpose(1, 0, 2)), initial=0.0) > 0:
            raise ValidationError("structure tensor is not antisymmetric in its first two indices")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        if self.labels and len(self.labels) != c.shape[0]:
            raise ValidationError("labels length does not match algebra dimension")

    @property
    def dim(self):
        return self.c.shape[0]

    def jacobi_residual(self):
        """Largest violation of the Jacobi identity over all index quadruples."""
        c = self.c
        # J[a,b,e,k] = sum_m c[a,b,m] c[m,e,k] + cyclic(a,b,e)
        t = np.einsum("abm,mek->abek", c, c)
        jac = t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)
        return float(np.max(np.abs(jac), initial=0.0))

    def check_jacobi(self, tol=JACOBI_TOL):
        r = self.jacobi_residual()
        if r > tol:
            raise ValidationError(f"Jacobi identity violated: residual {r:.3e} > {tol:.1e}")
        return r

    def basis(self, a):
        """Unit coefficient vector of the ``a``-th basis element (index or label)."""
        if isinstance(a, str):
            a = self.labels.index(a)
        e = np.zeros(self.dim)
        e[a] = 1.0
        return e

    def to_dict(self):
        triplets = []
        n = self.dim
        for a in range(n):
            for b in range(a + 1, n):
                for k in range(n):
                    v = self.c[a, b, k]
                    if v != 0.0:
                        triplets.append([a, b, k, float(v)])
        d = {"dim": n, "c": triplets}
        if self.name:
            d["name"] = self.name
        if self.labels:
            d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            n = int(d["dim"])
            entries = d["c"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed structure-constant document: {exc}") from None
        if n < 1:
            raise ValidationError("dim must be positive")
        c = np.zeros((n, n, n))
        seen = set()
        for entry in entries:
            a, b, k, v = int(entry[0]), int(entry[1]), int(entry[2]), float(entry[3])
            if not (0 <= a < n and 0 <= b < n and 0 <= k < n):
                raise ValidationError(f"triplet index out of range: {entry}")
            c[a, b, k] = v
            seen.add((a, b, k))
        # missing antisymmetric partners are implied
        for a, b, k in list(seen):
            if (b, a, k) not in seen:
                c[b, a, k] = -c[a, b, k]
        return cls(c, name=d.get("name", ""), labels=tuple(d.get("labels", ())))


def _as_vector(x, n, what):
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise ValidationError(f"{what} must have length {n}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{what} has non-finite entries")
    return v


def bracket(sc, A, B):
    """Abstract Lie bracket with the ``i`` absorbed: ``[A, B] = i C``, returns ``C``."""
    A = _as_vector(A, sc.dim, "A")
    B = _as_vector(B, sc.dim, "B")
    return np.einsum("a,b,abk->k", A, B, sc.c)


def poisson_matrix(sc, rho):
    """Lie-Poisson tensor ``sigma[a, b] = {E_a, E_b}(rho)``."""
    rho = _as_vector(rho, sc.dim, "rho")
    return np.einsum("abk,k->ab", sc.c, rho)


@dataclass(frozen=True)
class OrbitInfo:
    rank: int
    kernel_basis: np.ndarray          # rows are kernel vectors
    singular_values: np.ndarray = field(repr=False)

    @property
    def kernel_dim(self):
        return self.kernel_basis.shape[0]


def matrix_rank_kernel(m, rel_tol=RANK_REL_TOL):
    """Rank and orthonormal null-space basis from an SVD with a relative threshold."""
    m = np.asarray(m, dtype=float)
    _, s, vt = np.linalg.svd(m)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return 0, np.eye(m.shape[1]), s
    rank = int(np.sum(s > rel_tol * smax))
    return rank, vt[rank:].copy(), s


def orbit_analysis(sc, rho, rel_tol=RANK_REL_TOL):
    """Dimension of the coadjoint orbit through ``rho`` and its isotropy directions."""
    rank, kernel, s = matrix_rank_kernel(poisson_matrix(sc, rho), rel_tol)
    return OrbitInfo(rank=rank, kernel_basis=kernel, singular_values=s)


def lie_poisson_rhs(sc, rho, grad_h):
    """``d rho_a / dt = sum_b sigma_ab(rho) dH/drho_b``."""
    grad_h = _as_vector(grad_h, sc.dim, "grad_h")
    return poisson_matrix(sc, rho) @ grad_h


def coadjoint_action(sc, rho, X, theta=1.0):
    """Density after the group element ``exp(-i theta X)`` acts on ``rho``.

    Matches ``density_from_matrix(conjugate_density(rho_hat, g))`` for
    ``g = exp(-i theta X_hat)`` in any representation.
    """
    X = _as_vector(X, sc.dim, "X")
    rho = _as_vector(rho, sc.dim, "rho")
    # (M)_{k a} = sum_x X_x c[x, a, k]
    M = np.einsum("x,xak->ka", X, sc.c)
    return expm(theta * M).T @ rho


# --------------------------------------------------------------------------
# matrix level
# --------------------------------------------------------------------------

def _is_hermitian(m, tol):
    return np.max(np.abs(m - m.conj().T), initial=0.0) <= tol


def _is_unitary(u, tol):
    return np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0) <= tol


@dataclass(frozen=True)
class MatrixRepresentation:
    """Hermitian matrices ``G_a = T(E_a)`` satisfying ``[G_a, G_b] = i c[a,b,k] G_k``."""

    generators: np.ndarray           # shape (dim_alg, d, d)
    sc: StructureConstants = None
    name: str = ""

    def __post_init__(self):
        g = np.array(self.generators, dtype=complex)
        if g.ndim != 3 or g.shape[1] != g.shape[2]:
            raise ValidationError(f"generators must have shape (n, d, d), got {g.shape}")
        for a in range(g.shape[0]):
            if not _is_hermitian(g[a], 1e-12):
                raise ValidationError(f"generator {a} is not Hermitian")
        g.setflags(write=False)
        object.__setattr__(self, "generators", g)
        if self.sc is not None:
            if self.sc.dim != g.shape[0]:
                raise ValidationError("number of generators does not match algebra dimension")
            r = self.closure_residual()
            if r > 1e-10:
                raise ValidationError(f"generators do not close on the algebra: residual {r:.3e}")

    @property
    def dim_alg(self):
        return self.generators.shape[0]

    @property
    def dim_hilbert(self):
        return self.generators.shape[1]

    def closure_residual(self):
        g = self.generators
        comm = np.einsum("aij,bjk->abik", g, g) - np.einsum("bij,ajk->abik", g, g)
        rhs = 1j * np.einsum("abk,kij->abij", self.sc.c, g)
        return float(np.max(np.abs(comm - rhs), initial=0.0))

    def operator(self, A):
        """``T(A)`` for an algebra element given by coefficients."""
        A = _as_vector(A, self.dim_alg, "A")
        return np.einsum("a,aij->ij", A, self.generators)

    def group_element(self, X, theta=1.0):
        """Unitary ``exp(-i theta T(X))``."""
        return expm(-1j * theta * self.operator(X))


def check_density(rhohat, tol=1e-12):
    """Validate and return a quantal density matrix as a complex array."""
    m = np.asarray(rhohat, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError("density matrix must be square")
    if not _is_hermitian(m, tol):
        raise ValidationError("density matrix is not Hermitian")
    tr = np.trace(m).real
    if abs(tr - 1.0) > tol:
        raise ValidationError(f"density matrix trace is {tr!r}, not 1")
    if np.linalg.eigvalsh(m).min() < -tol:
        raise ValidationError("density matrix is not positive semidefinite")
    return m


def pure_density(psi):
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def density_from_matrix(rep, rhohat):
    """Moment map at density level: ``rho[a] = Re Tr(rhohat G_a)``."""
    m = check_density(rhohat)
    if m.shape[0] != rep.dim_hilbert:
        raise ValidationError("density matrix does not act on the representation space")
    return np.einsum("ij,aji->a", m, rep.generators).real


def conjugate_density(rep, rhohat, g):
    """``rhohat_g = T(g^-1) rhohat T(g)`` for a unitary matrix ``g``."""
    m = check_density(rhohat)
    g = np.asarray(g, dtype=complex)
    if g.shape != (rep.dim_hilbert, rep.dim_hilbert):
        raise ValidationError("group element has the wrong shape")
    if not _is_unitary(g, 1e-12):
        raise ValidationError("group element is not unitary")
    out = g.conj().T @ m @ g
    return 0.5 * (out + out.conj().T)


@dataclass(frozen=True)
class FiniteGroupAction:
    """Weighted list of unitaries standing in for the invariant measure on a stability group."""

    elements: tuple
    weights: np.ndarray = None

    def __post_init__(self):
        els = tuple(np.array(u, dtype=complex) for u in self.elements)
        if not els:
            raise ValidationError("group action needs at least one element")
        for u in els:
            if u.ndim != 2 or u.shape[0] != u.shape[1] or not _is_unitary(u, 1e-12):
                raise ValidationError("group action elements must be unitary matrices")
        w = (np.full(len(els), 1.0 / len(els)) if self.weights is None
             else np.asarray(self.weights, dtype=float))
        if w.shape != (len(els),) or np.any(w < 0):
            raise ValidationError("weights must be a non-negative vector, one per element")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "elements", els)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.elements)

    @classmethod
    def identity(cls, d):
        return cls((np.eye(d),))

    @classmethod
    def one_parameter(cls, generator, n=64, period=2 * np.pi):
        """Uniform samples ``exp(-i phi G)``, ``phi = j * period / n``, of a compact U(1)."""
        G = np.asarray(generator, dtype=complex)
        w, v = np.linalg.eigh(G)
        phis = period * np.arange(n) / n
        return cls(tuple((v * np.exp(-1j * p * w)) @ v.conj().T for p in phis))


def gauge_average(rep, rhohat, K):
    """Average of ``rhohat_h`` over the supplied stability-group sample.

    With ``K`` holding coset representatives of a finite quotient this is also
    the factor-space average; the caller decides what the list means.
    """
    m = check_density(rhohat)
    out = np.zeros_like(m)
    for w, h in zip(K.weights, K.elements):
        out += w * conjugate_density(rep, m, h)
    return 0.5 * (out + out.conj().T)


def stabilizes(rep, rhohat, K, tol=1e-10):
    """True if every element of ``K`` leaves the classical density of ``rhohat`` fixed."""
    rho = density_from_matrix(rep, rhohat)
    return all(np.max(np.abs(density_from_matrix(rep, conjugate_density(rep, rhohat, h)) - rho))
               <= tol for h in K.elements)


def energy_invariance_residual(rep, rhohat, H, K, g_samples=()):
    """Max of ``|Tr(rho_{hg} H) - Tr(rho_g H)|`` over ``h`` in ``K`` and the given ``g``."""
    m = check_density(rhohat)
    H = np.asarray(H, dtype=complex)
    gs = [np.eye(m.shape[0])] + [np.asarray(g, dtype=complex) for g in g_samples]
    res = 0.0
    for g in gs:
        rg = conjugate_density(rep, m, g)
        e0 = np.trace(rg @ H).real
        for h in K.elements:
            rhg = conjugate_density(rep, m, h @ g)
            res = max(res, abs(np.trace(rhg @ H).real - e0))
    return res


def expectation_evolution_check(rep, rhohat, H, K, tol=1e-10):
    """Check that ``Tr(rho_h [G_a, H])`` does not depend on ``h`` in ``K``.

    Returns ``(ok, residual)``.  When this holds the time derivatives of the
    generator expectations descend to the coadjoint orbit.
    """
    m = check_density(rhohat)
    H = np.asarray(H, dtype=complex)
    if not _is_hermitian(H, 1e-12):
        raise ValidationError("Hamiltonian must be Hermitian")
    comms = [G @ H - H @ G for G in rep.generators]
    ref = np.array([np.trace(m @ C) for C in comms])
    res = 0.0
    for h in K.elements:
        rh = conjugate_density(rep, m, h)
        vals = np.array([np.trace(rh @ C) for C in comms])
        res = max(res, float(np.max(np.abs(vals - ref))))
    return res < tol, res


# --------------------------------------------------------------------------
# standard algebras and fixtures
# --------------------------------------------------------------------------

def levi_civita():
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    return eps


def so3_structure_constants():
    return StructureConstants(levi_civita(), name="so(3)", labels=("L1", "L2", "L3"))


def abelian_structure_constants(n=6):
    return StructureConstants(np.zeros((n, n, n)), name=f"R{n}",
                              labels=tuple(f"E{a + 1}" for a in range(n)))


def spin_matrices(j):
    """Angular-momentum matrices ``(Jx, Jy, Jz)`` in the ``|j m>`` basis, m descending."""
    m = np.arange(j, -j - 1, -1)
    d = m.size
    jp = np.zeros((d, d), dtype=complex)
    for r in range(1, d):
        # <m+1| J+ |m>, with row r-1 holding m+1
        jp[r - 1, r] = np.sqrt(j * (j + 1) - m[r] * (m[r] + 1))
    jm = jp.conj().T
    return np.array([(jp + jm) / 2, (jp - jm) / (2j), np.diag(m).astype(complex)])


def spin1_representation():
    return MatrixRepresentation(spin_matrices(1), sc=so3_structure_constants(), name="spin-1")


def representation_to_dict(rep):
    d = rep.sc.to_dict() if rep.sc is not None else {"dim": rep.dim_alg, "c": []}
    d["generators"] = [[[[float(z.real), float(z.imag)] for z in row] for row in G]
                       for G in rep.generators]
    if rep.name:
        d["name"] = rep.name
    return d


def load_document(doc):
    """Build structure constants (and a representation if generators are present)."""
    sc = StructureConstants.from_dict(doc)
    if "generators" not in doc:
        return sc, None
    try:
        gens = np.array([[[complex(re, im) for re, im in row] for row in G]
                         for G in doc["generators"]])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed generator matrices: {exc}") from None
    return sc, MatrixRepresentation(gens, sc=sc, name=doc.get("name", ""))


def load_json(path):
    with open(path) as fh:
        return load_document(json.load(fh))


FIXTURES = ("so3", "r6", "rma", "spin1")


def fixture_path(name):
    return resources.files("cqmech") / "fixtures" / f"{name}.json"


def load_fixture(name):
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    return load_document(json.loads(fixture_path(name).read_text()))


def write_fixtures(directory):
    """Regenerate the shipped JSON fixtures from their builders."""
    from .rotor import rma_structure_constants

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    docs = {
        "so3": so3_structure_constants().to_dict(),
        "r6": abelian_structure_constants(6).to_dict(),
        "rma": rma_structure_constants().to_dict(),
        "spin1": representation_to_dict(spin1_representation()),
    }
    for name, doc in docs.items():
        (directory / f"{name}.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return sorted(docs)
