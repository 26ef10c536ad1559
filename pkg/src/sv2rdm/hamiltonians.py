"""Electronic Hamiltonians for hydrogen chains in a minimal s-type Gaussian basis.

Builds one- and two-electron integrals over contracted s-type Gaussians,
orthogonalizes the basis symmetrically (Lowdin), runs a restricted
Hartree-Fock SCF, and returns the integrals in the converged molecular
orbital basis. All energies are in hartree, all distances in bohr unless
noted otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.special import erf

# CODATA 2018 Bohr radius in Angstrom.
BOHR_RADIUS_ANGSTROM = 0.529177210903
ANGSTROM_TO_BOHR = 1.0 / BOHR_RADIUS_ANGSTROM

# STO-3G hydrogen 1s: three primitives for a Slater exponent zeta = 1.24.
# Parameters from the Basis Set Exchange (original STO-3G fits of Hehre,
# Stewart, and Pople). Coefficients refer to unit-normalized primitives.
STO3G_H_EXPONENTS = np.array([3.425250914, 0.6239137298, 0.1688554040])
STO3G_H_COEFFS = np.array([0.1543289673, 0.5353281423, 0.4446345422])

SYMMETRY_TOL = 1e-12


class HamiltonianError(ValueError):
    """Invalid Hamiltonian data or geometry."""


class ScfConvergenceError(RuntimeError):
    """SCF failed to converge; carries iteration count and residuals."""

    def __init__(self, iterations, energy_change, density_change):
        self.iterations = iterations
        self.energy_change = energy_change
        self.density_change = density_change
        super().__init__(
            f"SCF not converged after {iterations} iterations "
            f"(dE={energy_change:.3e}, dD={density_change:.3e})"
        )


@dataclass(frozen=True)
class GeometryHChain:
    """A linear chain of hydrogen atoms with uniform spacing.

    Attributes
    ----------
    n_atoms : int
        Number of hydrogens, >= 1.
    bond_length : float
        H-H separation in Angstrom, > 0.
    """

    n_atoms: int
    bond_length: float

    def __post_init__(self):
        if self.n_atoms < 1:
            raise HamiltonianError(f"n_atoms must be >= 1, got {self.n_atoms}")
        if not self.bond_length > 0:
            raise HamiltonianError(f"bond_length must be > 0, got {self.bond_length}")

    def centers_bohr(self) -> np.ndarray:
        """Atom positions on the z axis, shape (n_atoms, 3), in bohr."""
        z = np.arange(self.n_atoms) * self.bond_length * ANGSTROM_TO_BOHR
        out = np.zeros((self.n_atoms, 3))
        out[:, 2] = z
        return out


@dataclass(frozen=True)
class Hamiltonian:
    """Electronic Hamiltonian in an orthonormal spatial-orbital basis.

    Attributes
    ----------
    r_spatial : int
        Number of spatial orbitals.
    n_electrons : int
        Number of electrons, 0 < n_electrons <= 2 * r_spatial.
    e_core : float
        Constant energy offset (nuclear repulsion / frozen core), hartree.
    h_one : ndarray (r, r)
        Symmetric one-electron integrals, hartree.
    v_two : ndarray (r, r, r, r)
        Two-electron integrals in chemist (ij|kl) convention with full
        8-fold permutational symmetry, hartree.
    """

    r_spatial: int
    n_electrons: int
    e_core: float
    h_one: np.ndarray = field(repr=False)
    v_two: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = self.r_spatial
        if r < 1:
            raise HamiltonianError(f"r_spatial must be >= 1, got {r}")
        if not 0 < self.n_electrons <= 2 * r:
            raise HamiltonianError(
                f"n_electrons must be in (0, {2 * r}], got {self.n_electrons}"
            )
        h = np.asarray(self.h_one, dtype=float)
        v = np.asarray(self.v_two, dtype=float)
        if h.shape != (r, r):
            raise HamiltonianError(f"h_one must have shape {(r, r)}, got {h.shape}")
        if v.shape != (r, r, r, r):
            raise HamiltonianError(f"v_two must have shape {(r,) * 4}, got {v.shape}")
        if np.max(np.abs(h - h.T)) > SYMMETRY_TOL:
            raise HamiltonianError("h_one is not symmetric to 1e-12")
        for perm in [(1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)]:
            if np.max(np.abs(v - v.transpose(perm))) > SYMMETRY_TOL:
                raise HamiltonianError(f"v_two violates (ij|kl) symmetry {perm}")
        object.__setattr__(self, "h_one", h)
        object.__setattr__(self, "v_two", v)


def boys_f0(x):
    """Zeroth-order Boys function F0(x), elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1e-12
    out[small] = 1.0 - x[small] / 3.0
    xs = x[~small]
    out[~small] = 0.5 * np.sqrt(np.pi / xs) * erf(np.sqrt(xs))
    return out


@dataclass(frozen=True)
class ContractedS:
    """A contracted s-type Gaussian: sum_p coeffs[p] * exp(-exponents[p)|r-center|^2).

    Coefficients include primitive normalization and the overall contraction
    renormalization, so <phi|phi> = 1.
    """

    center: np.ndarray
    exponents: np.ndarray
    coeffs: np.ndarray

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the orbital at points of shape (..., 3)."""
        d2 = np.sum((np.asarray(points) - self.center) ** 2, axis=-1)
        return np.sum(self.coeffs * np.exp(-np.outer(d2.ravel(), self.exponents)), axis=1).reshape(d2.shape)


def h_chain_basis(centers: np.ndarray) -> list[ContractedS]:
    """One normalized STO-3G 1s function per hydrogen center (bohr)."""
    basis = []
    prim_norm = (2.0 * STO3G_H_EXPONENTS / np.pi) ** 0.75
    for center in np.asarray(centers, dtype=float):
        coeffs = STO3G_H_COEFFS * prim_norm
        raw = ContractedS(center, STO3G_H_EXPONENTS, coeffs)
        self_overlap = _overlap_pair(raw, raw)
        basis.append(ContractedS(center, STO3G_H_EXPONENTS, coeffs / np.sqrt(self_overlap)))
    return basis


def _pair_products(a: ContractedS, b: ContractedS):
    """Gaussian-product data for each primitive pair: p, mu*R^2 prefactor, composite center."""
    al = a.exponents[:, None]
    be = b.exponents[None, :]
    p = al + be
    rab2 = float(np.sum((a.center - b.center) ** 2))
    kab = np.exp(-al * be / p * rab2)
    cc = a.coeffs[:, None] * b.coeffs[None, :]
    centers = (al[..., None] * a.center + be[..., None] * b.center) / p[..., None]
    return p, kab, cc, centers


def _overlap_pair(a: ContractedS, b: ContractedS) -> float:
    p, kab, cc, _ = _pair_products(a, b)
    return float(np.sum(cc * kab * (np.pi / p) ** 1.5))


def _kinetic_pair(a: ContractedS, b: ContractedS) -> float:
    p, kab, cc, _ = _pair_products(a, b)
    al = a.exponents[:, None]
    be = b.exponents[None, :]
    rab2 = float(np.sum((a.center - b.center) ** 2))
    mu = al * be / p
    t = mu * (3.0 - 2.0 * mu * rab2) * (np.pi / p) ** 1.5
    return float(np.sum(cc * kab * t))


def _nuclear_pair(a: ContractedS, b: ContractedS, nuclei: np.ndarray, charges: np.ndarray) -> float:
    p, kab, cc, centers = _pair_products(a, b)
    total = 0.0
    for nucleus, charge in zip(nuclei, charges):
        pc2 = np.sum((centers - nucleus) ** 2, axis=-1)
        total += -charge * float(np.sum(cc * kab * (2.0 * np.pi / p) * boys_f0(p * pc2)))
    return total


def _eri_quartet(a: ContractedS, b: ContractedS, c: ContractedS, d: ContractedS) -> float:
    """(ab|cd) in chemist convention over contracted s functions."""
    p, kab, cab, pcen = _pair_products(a, b)
    q, kcd, ccd, qcen = _pair_products(c, d)
    pf = p.ravel()[:, None]
    qf = q.ravel()[None, :]
    pq2 = np.sum(
        (pcen.reshape(-1, 3)[:, None, :] - qcen.reshape(-1, 3)[None, :, :]) ** 2, axis=-1
    )
    omega = pf * qf / (pf + qf)
    val = (
        2.0 * np.pi**2.5 / (pf * qf * np.sqrt(pf + qf))
        * (kab.ravel()[:, None] * kcd.ravel()[None, :])
        * boys_f0(omega * pq2)
    )
    return float(np.sum((cab.ravel()[:, None] * ccd.ravel()[None, :]) * val))


def ao_integrals(centers: np.ndarray, charges: np.ndarray | None = None):
    """Overlap, kinetic, nuclear-attraction, and ERI tensors over the chain basis.

    Returns
    -------
    (S, T, V, eri) with shapes (r, r) x3 and (r, r, r, r), chemist convention.
    """
    centers = np.asarray(centers, dtype=float)
    if charges is None:
        charges = np.ones(len(centers))
    basis = h_chain_basis(centers)
    r = len(basis)
    S = np.empty((r, r))
    T = np.empty((r, r))
    V = np.empty((r, r))
    for i in range(r):
        for j in range(i, r):
            S[i, j] = S[j, i] = _overlap_pair(basis[i], basis[j])
            T[i, j] = T[j, i] = _kinetic_pair(basis[i], basis[j])
            V[i, j] = V[j, i] = _nuclear_pair(basis[i], basis[j], centers, charges)
    eri = np.empty((r, r, r, r))
    for i in range(r):
        for j in range(i + 1):
            for k in range(r):
                for l in range(k + 1):
                    if i * (i + 1) // 2 + j < k * (k + 1) // 2 + l:
                        continue
                    val = _eri_quartet(basis[i], basis[j], basis[k], basis[l])
                    for (p, q, s, t) in [
                        (i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
                        (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i),
                    ]:
                        eri[p, q, s, t] = val
    return S, T, V, eri


def nuclear_repulsion(centers: np.ndarray, charges: np.ndarray | None = None) -> float:
    centers = np.asarray(centers, dtype=float)
    if charges is None:
        charges = np.ones(len(centers))
    e = 0.0
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            rij = np.linalg.norm(centers[i] - centers[j])
            if rij < 1e-8:
                raise HamiltonianError(f"nuclei {i} and {j} overlap (separation {rij:.3e} bohr)")
            e += charges[i] * charges[j] / rij
    return e


def lowdin_orthogonalizer(S: np.ndarray, threshold: float = 1e-8) -> np.ndarray:
    """Symmetric orthogonalization matrix X = S^(-1/2)."""
    vals, vecs = eigh(S)
    if vals[0] < threshold:
        raise HamiltonianError(
            f"overlap matrix nearly singular (min eigenvalue {vals[0]:.3e}); "
            "nuclei too close together"
        )
    return (vecs / np.sqrt(vals)) @ vecs.T


def transform_eri(eri: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Four-index basis change of a chemist-convention ERI tensor."""
    return np.einsum("pqrs,pi,qj,rk,sl->ijkl", eri, C, C, C, C, optimize=True)


@dataclass(frozen=True)
class ScfResult:
    """Converged restricted SCF data in the orthonormalized basis."""

    energy: float
    mo_coeffs: np.ndarray
    orbital_energies: np.ndarray
    iterations: int


def restricted_scf(
    h: np.ndarray,
    eri: np.ndarray,
    n_electrons: int,
    *,
    conv_energy: float = 1e-10,
    conv_density: float = 1e-8,
    max_iterations: int = 200,
    damping: float = 0.25,
) -> ScfResult:
    """Restricted SCF over an orthonormal basis (overlap = identity).

    Doubly occupies the lowest n_electrons // 2 orbitals; an odd electron
    singly occupies the next orbital with a spin-averaged Fock operator.
    Plain density damping, no DIIS.
    """
    r = h.shape[0]
    occ = np.zeros(r)
    occ[: n_electrons // 2] = 2.0
    if n_electrons % 2:
        occ[n_electrons // 2] = 1.0

    _, C = eigh(h)
    density = None
    energy = None
    d_change = np.inf
    e_change = np.inf
    for iteration in range(1, max_iterations + 1):
        new_density = (C * occ) @ C.T
        if density is None:
            density = new_density
        else:
            d_change = np.max(np.abs(new_density - density))
            density = (1.0 - damping) * new_density + damping * density
        coulomb = np.einsum("ijkl,kl->ij", eri, density, optimize=True)
        exchange = np.einsum("ikjl,kl->ij", eri, density, optimize=True)
        fock = h + coulomb - 0.5 * exchange
        new_energy = 0.5 * np.sum(density * (h + fock))
        if energy is not None:
            e_change = abs(new_energy - energy)
        energy = new_energy
        if e_change < conv_energy and d_change < conv_density:
            eps, C = eigh(fock)
            return ScfResult(energy, C, eps, iteration)
        _, C = eigh(fock)
    raise ScfConvergenceError(max_iterations, e_change, d_change)


def assemble_mo_hamiltonian(
    centers: np.ndarray,
    n_electrons: int | None = None,
    **scf_options,
) -> tuple[Hamiltonian, ScfResult]:
    """Hamiltonian in the converged RHF molecular-orbital basis for H centers (bohr)."""
    centers = np.asarray(centers, dtype=float)
    if n_electrons is None:
        n_electrons = len(centers)
    S, T, V, eri = ao_integrals(centers)
    e_core = nuclear_repulsion(centers) if len(centers) > 1 else 0.0
    X = lowdin_orthogonalizer(S)
    h_orth = X.T @ (T + V) @ X
    eri_orth = transform_eri(eri, X)
    scf = restricted_scf(h_orth, eri_orth, n_electrons, **scf_options)
    C = scf.mo_coeffs
    h_mo = C.T @ h_orth @ C
    eri_mo = transform_eri(eri_orth, C)
    # Clean tiny asymmetries from the quadrature of floating point products.
    h_mo = 0.5 * (h_mo + h_mo.T)
    eri_mo = symmetrize_eri(eri_mo)
    ham = Hamiltonian(len(centers), n_electrons, e_core, h_mo, eri_mo)
    return ham, scf


def symmetrize_eri(v: np.ndarray) -> np.ndarray:
    """Average over the 8 permutations of a real chemist-convention tensor."""
    out = v + v.transpose(1, 0, 2, 3) + v.transpose(0, 1, 3, 2) + v.transpose(1, 0, 3, 2)
    out = out + out.transpose(2, 3, 0, 1)
    return out / 8.0


def build_h_chain(geom: GeometryHChain, **scf_options) -> Hamiltonian:
    """Hamiltonian of a hydrogen chain in the RHF molecular-orbital basis.

    The chain lies on the z axis with uniform spacing; the core energy is
    the nuclear repulsion.
    """
    ham, _ = assemble_mo_hamiltonian(geom.centers_bohr(), geom.n_atoms, **scf_options)
    return ham


def rotated(h: Hamiltonian, R: np.ndarray) -> Hamiltonian:
    """The same Hamiltonian expressed in orbitals rotated by orthogonal R."""
    return Hamiltonian(
        h.r_spatial,
        h.n_electrons,
        h.e_core,
        R.T @ h.h_one @ R,
        symmetrize_eri(transform_eri(h.v_two, R)),
    )
