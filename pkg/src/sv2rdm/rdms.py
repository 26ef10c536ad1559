"""Reduced density matrices, their positivity partners, and energy functionals.

Spin orbitals interleave spin with the spatial index, s = 2 * spatial + spin
(spin 0 = alpha, 1 = beta). Two-particle quantities live on the
antisymmetrized pair basis of spin-orbital pairs (i < j, k < l) with raw
tensor elements (no sqrt(2) scaling), so the packed trace is N(N-1)/2 and
the conventional normalization N(N-1) carries an explicit factor 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fci import CIState, DeterminantBasis, apply_annihilation
from .hamiltonians import Hamiltonian

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8


class RdmError(ValueError):
    """Inconsistent reduced-density-matrix data."""


@lru_cache(maxsize=16)
def pair_list(n_so: int) -> tuple[tuple[int, int], ...]:
    """Spin-orbital pairs (s, t) with s < t, lexicographic."""
    return tuple((s, t) for s in range(n_so) for t in range(s + 1, n_so))


@lru_cache(maxsize=16)
def _pair_maps(n_so: int):
    pairs = pair_list(n_so)
    index = np.full((n_so, n_so), -1, dtype=int)
    sign = np.zeros((n_so, n_so))
    for u, (s, t) in enumerate(pairs):
        index[s, t] = index[t, s] = u
        sign[s, t] = 1.0
        sign[t, s] = -1.0
    return index, sign


def pack_pair_tensor(T: np.ndarray) -> np.ndarray:
    """Restrict an antisymmetric 4-index tensor to the (i<j, k<l) pair basis."""
    n_so = T.shape[0]
    pairs = np.array(pair_list(n_so))
    return T[pairs[:, 0][:, None], pairs[:, 1][:, None], pairs[:, 0][None, :], pairs[:, 1][None, :]]


def unpack_pair_matrix(M: np.ndarray, n_so: int) -> np.ndarray:
    """Expand a packed pair matrix to the full antisymmetric 4-index tensor."""
    index, sign = _pair_maps(n_so)
    idx = np.where(index < 0, 0, index)
    T = M[idx[:, :, None, None], idx[None, None, :, :]]
    return T * sign[:, :, None, None] * sign[None, None, :, :]


@dataclass(frozen=True)
class TwoRDM:
    """Two-particle RDM on the antisymmetrized spin-orbital pair basis."""

    matrix: np.ndarray = field(repr=False)
    n_electrons: int
    r_spatial: int

    @property
    def n_spin_orbitals(self) -> int:
        return 2 * self.r_spatial

    @property
    def n_pairs(self) -> int:
        return self.n_spin_orbitals * (self.n_spin_orbitals - 1) // 2

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (self.n_pairs, self.n_pairs):
            raise RdmError(f"packed 2-RDM must have shape {(self.n_pairs,) * 2}, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def validate(self):
        """Check hermiticity and the pair-trace normalization."""
        if np.max(np.abs(self.matrix - self.matrix.T)) > HERMITICITY_TOL:
            raise RdmError("2-RDM is not Hermitian to 1e-10")
        n = self.n_electrons
        if abs(2.0 * np.trace(self.matrix) - n * (n - 1)) > TRACE_TOL:
            raise RdmError(
                f"2-RDM trace {2.0 * np.trace(self.matrix):.10f} != N(N-1) = {n * (n - 1)}"
            )

    def tensor(self) -> np.ndarray:
        """Full antisymmetric 4-index tensor over spin orbitals."""
        return unpack_pair_matrix(self.matrix, self.n_spin_orbitals)

    def pair_trace(self) -> float:
        return float(np.trace(self.matrix))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


@dataclass(frozen=True)
class OneRDM:
    """One-particle RDM over spin orbitals."""

    matrix: np.ndarray = field(repr=False)
    n_electrons: int

    def validate(self):
        if np.max(np.abs(self.matrix - self.matrix.T)) > HERMITICITY_TOL:
            raise RdmError("1-RDM is not Hermitian to 1e-10")
        if abs(np.trace(self.matrix) - self.n_electrons) > TRACE_TOL:
            raise RdmError(f"1-RDM trace {np.trace(self.matrix):.10f} != N = {self.n_electrons}")
        eigs = np.linalg.eigvalsh(self.matrix)
        if eigs[0] < -1e-9 or eigs[-1] > 1.0 + 1e-9:
            raise RdmError(f"1-RDM eigenvalues outside [0, 1]: [{eigs[0]:.3e}, {eigs[-1]:.6f}]")


@dataclass(frozen=True)
class HoleRDM:
    """Hole-hole RDM on the antisymmetrized pair basis."""

    matrix: np.ndarray = field(repr=False)
    n_electrons: int
    r_spatial: int

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


@dataclass(frozen=True)
class ParticleHoleRDM:
    """Particle-hole RDM on the full (i, l), (k, j) pair grid."""

    matrix: np.ndarray = field(repr=False)
    n_electrons: int
    r_spatial: int

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def compute_2rdm(state: CIState) -> TwoRDM:
    """Exact 2-RDM of a CI state as a Gram matrix of pair annihilations.

    D[(ij),(kl)] = <u_ij | u_kl> with u_st = a_t a_s |Psi>, which makes
    hermiticity and positive semidefiniteness automatic for exact states.
    """
    basis = state.basis
    n_so = 2 * basis.r_spatial
    pairs = pair_list(n_so)
    C = state.matrix()
    vectors = []
    sectors = []
    for (s, t) in pairs:
        C1, b1 = apply_annihilation(s % 2, s // 2, C, basis)
        if C1 is None:
            vectors.append(None)
            sectors.append(None)
            continue
        C2, b2 = apply_annihilation(t % 2, t // 2, C1, b1)
        if C2 is None:
            vectors.append(None)
            sectors.append(None)
            continue
        vectors.append(C2.reshape(-1))
        sectors.append((b2.n_alpha, b2.n_beta))
    m = len(pairs)
    D = np.zeros((m, m))
    for key in {k for k in sectors if k is not None}:
        ids = [u for u in range(m) if sectors[u] == key]
        V = np.stack([vectors[u] for u in ids])
        D[np.ix_(ids, ids)] = V @ V.T
    n = basis.n_alpha + basis.n_beta
    return TwoRDM(0.5 * (D + D.T), n, basis.r_spatial)


def one_rdm_from_two(d: TwoRDM) -> OneRDM:
    """Contract the 2-RDM: D1[i,k] = sum_j D[i,j,k,j] / (N - 1)."""
    if d.n_electrons < 2:
        raise RdmError("contraction to the 1-RDM needs at least 2 electrons")
    T = d.tensor()
    return OneRDM(np.einsum("ijkj->ik", T) / (d.n_electrons - 1), d.n_electrons)


def map_D_to_Q(d: TwoRDM) -> HoleRDM:
    """Hole-hole matrix from the fermionic rearrangement of the 2-RDM.

    Q[ij,kl] = (d_ik d_jl - d_il d_jk)
             - (d_ik D1[j,l] + d_jl D1[i,k] - d_il D1[j,k] - d_jk D1[i,l])
             + D[ij,kl], affine-linear in D.
    """
    n_so = d.n_spin_orbitals
    eye = np.eye(n_so)
    D1 = one_rdm_from_two(d).matrix
    T = d.tensor()
    Q = np.einsum("ik,jl->ijkl", eye, eye) - np.einsum("il,jk->ijkl", eye, eye)
    Q -= np.einsum("ik,jl->ijkl", eye, D1) + np.einsum("jl,ik->ijkl", eye, D1)
    Q += np.einsum("il,jk->ijkl", eye, D1) + np.einsum("jk,il->ijkl", eye, D1)
    Q += T
    return HoleRDM(pack_pair_tensor(Q), d.n_electrons, d.r_spatial)


def map_D_to_G(d: TwoRDM) -> ParticleHoleRDM:
    """Particle-hole matrix G[(il),(kj)] = d_lj D1[i,k] - D[i,j,k,l]."""
    n_so = d.n_spin_orbitals
    D1 = one_rdm_from_two(d).matrix
    T = d.tensor()
    G = np.einsum("ik,lj->ilkj", D1, np.eye(n_so)) - T.transpose(0, 3, 2, 1)
    return ParticleHoleRDM(G.reshape(n_so * n_so, n_so * n_so), d.n_electrons, d.r_spatial)


def _spin_orbital_integrals(h: Hamiltonian):
    """One-electron matrix and antisymmetrized two-electron tensor over spin orbitals."""
    n_so = 2 * h.r_spatial
    sp = np.arange(n_so) // 2
    same_spin = (np.arange(n_so)[:, None] % 2) == (np.arange(n_so)[None, :] % 2)
    h_so = h.h_one[sp[:, None], sp[None, :]] * same_spin
    chem = (
        h.v_two[sp[:, None, None, None], sp[None, :, None, None], sp[None, None, :, None], sp[None, None, None, :]]
        * same_spin[:, :, None, None]
        * same_spin[None, None, :, :]
    )
    phys = chem.transpose(0, 2, 1, 3)
    anti = phys - phys.transpose(0, 1, 3, 2)
    return h_so, anti


def energy_coefficients(h: Hamiltonian) -> tuple[np.ndarray, float]:
    """Packed coefficient matrix C with E = e_core + <C, D> on the pair basis."""
    if h.n_electrons < 2:
        raise RdmError("the 2-RDM energy functional needs at least 2 electrons")
    h_so, anti = _spin_orbital_integrals(h)
    n_so = 2 * h.r_spatial
    eye = np.eye(n_so)
    one_body = (
        np.einsum("jl,ik->ijkl", eye, h_so)
        - np.einsum("jk,il->ijkl", eye, h_so)
        - np.einsum("il,jk->ijkl", eye, h_so)
        + np.einsum("ik,jl->ijkl", eye, h_so)
    ) / (h.n_electrons - 1)
    return pack_pair_tensor(anti + one_body), h.e_core


def energy_from_rdm(h: Hamiltonian, d: TwoRDM) -> float:
    """Energy functional E[D] = e_core + sum_ik h_ik D1[i,k] + pair-basis 2e term."""
    if d.r_spatial != h.r_spatial:
        raise RdmError(
            f"2-RDM has {d.r_spatial} spatial orbitals but the Hamiltonian has {h.r_spatial}"
        )
    coeffs, e_core = energy_coefficients(h)
    return e_core + float(np.sum(coeffs * d.matrix))


def natural_occupations(d1: OneRDM) -> np.ndarray:
    """Eigenvalues of the alpha spin block of the 1-RDM, descending."""
    block = d1.matrix[0::2, 0::2]
    if np.max(np.abs(block - block.T)) > 1e-8:
        raise RdmError("1-RDM spin block is not Hermitian within 1e-8")
    return np.linalg.eigvalsh(block)[::-1]


def von_neumann_entropy(occupations) -> float:
    """-sum_i n_i ln n_i over one spin block, with 0 ln 0 = 0."""
    occ = np.asarray(occupations, dtype=float)
    if np.any(occ < -1e-9) or np.any(occ > 1.0 + 1e-9):
        raise RdmError(f"occupations outside [0, 1]: {occ}")
    occ = np.clip(occ, 0.0, 1.0)
    positive = occ[occ > 0.0]
    return float(-np.sum(positive * np.log(positive)))


def frobenius_error(d: TwoRDM, d_ref: TwoRDM) -> float:
    """Normalized Frobenius distance ||d - d_ref||_F / ||d_ref||_F on the pair basis."""
    if d.matrix.shape != d_ref.matrix.shape:
        raise RdmError(f"shape mismatch: {d.matrix.shape} vs {d_ref.matrix.shape}")
    return float(np.linalg.norm(d.matrix - d_ref.matrix) / np.linalg.norm(d_ref.matrix))


RDM_FORMAT = "sv2rdm-2rdm-v1"


def save_two_rdm(path, d: TwoRDM):
    """Dense binary container (.npz) with a shape header."""
    np.savez(
        path,
        format=RDM_FORMAT,
        matrix=d.matrix,
        n_electrons=d.n_electrons,
        r_spatial=d.r_spatial,
    )


def load_two_rdm(path) -> TwoRDM:
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != RDM_FORMAT:
            raise RdmError(f"unsupported RDM container format {data['format']!r}")
        return TwoRDM(data["matrix"], int(data["n_electrons"]), int(data["r_spatial"]))


def write_occupations_csv(path, occupations, vne: float):
    """CSV export of natural occupations and the von Neumann entropy."""
    with open(path, "w") as handle:
        handle.write("# sv2rdm-occupations v1\n")
        handle.write("orbital,occupation\n")
        for i, n in enumerate(occupations):
            handle.write(f"{i},{n!r}\n")
        handle.write(f"vne,{vne!r}\n")
