"""Full configuration interaction over (alpha, beta) determinant strings.

Determinants are pairs of occupation bitstrings, one per spin, listed in
lexicographic (ascending integer) order with the alpha string as the major
index. A determinant is the ordered product of creation operators: alpha
orbitals ascending, then beta orbitals ascending, acting on the vacuum;
all operator phases follow from that convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import LinearOperator, eigsh

from .hamiltonians import Hamiltonian

DEGENERACY_TOL = 1e-9
RESIDUAL_TOL = 1e-8
SINGLET_S2_CUTOFF = 0.01


class DeterminantSpaceError(ValueError):
    """Determinant space inconsistent with the request or too large."""


class EigensolverError(RuntimeError):
    """Eigensolver failed; carries the worst residual norm when known."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


def bit_strings(r: int, n: int) -> np.ndarray:
    """All r-bit integers with exactly n bits set, ascending."""
    if not 0 <= n <= r:
        raise DeterminantSpaceError(f"cannot place {n} electrons in {r} orbitals")
    out = [s for s in range(1 << r) if bin(s).count("1") == n]
    return np.array(out, dtype=np.int64)


@dataclass(frozen=True)
class DeterminantBasis:
    """Product basis of alpha and beta occupation strings at fixed counts."""

    r_spatial: int
    n_alpha: int
    n_beta: int
    alpha_strings: np.ndarray = field(repr=False)
    beta_strings: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, r_spatial: int, n_alpha: int, n_beta: int) -> "DeterminantBasis":
        return cls(
            r_spatial,
            n_alpha,
            n_beta,
            bit_strings(r_spatial, n_alpha),
            bit_strings(r_spatial, n_beta),
        )

    @property
    def size(self) -> int:
        return len(self.alpha_strings) * len(self.beta_strings)

    def determinants(self) -> list[tuple[int, int]]:
        """(alpha, beta) bitstring pairs in basis order (alpha major)."""
        return [(int(a), int(b)) for a in self.alpha_strings for b in self.beta_strings]


@dataclass(frozen=True)
class CIState:
    """One eigenstate of the electronic Hamiltonian in a determinant basis."""

    coefficients: np.ndarray = field(repr=False)
    energy: float
    s_squared: float
    state_index: int
    basis: DeterminantBasis

    def matrix(self) -> np.ndarray:
        """Coefficients reshaped to (alpha strings, beta strings)."""
        return self.coefficients.reshape(
            len(self.basis.alpha_strings), len(self.basis.beta_strings)
        )


def _string_index(strings: np.ndarray) -> dict[int, int]:
    return {int(s): i for i, s in enumerate(strings)}


def _parity_below(string: int, orbital: int) -> int:
    """(-1)^(number of set bits below `orbital`)."""
    return -1 if bin(string & ((1 << orbital) - 1)).count("1") % 2 else 1


@lru_cache(maxsize=32)
def excitation_tables(r: int, n: int):
    """Single-excitation operators E_pq = a+_p a_q within one spin channel.

    Returns (strings, tables) where tables[p * r + q] is a CSR matrix of
    <K|E_pq|J> over the n-electron strings of r orbitals.
    """
    strings = bit_strings(r, n)
    index = _string_index(strings)
    n_str = len(strings)
    rows = [[] for _ in range(r * r)]
    cols = [[] for _ in range(r * r)]
    vals = [[] for _ in range(r * r)]
    for jdx, s in enumerate(strings):
        s = int(s)
        for q in range(r):
            if not (s >> q) & 1:
                continue
            s1 = s & ~(1 << q)
            phase_q = _parity_below(s, q)
            rows[q * r + q].append(jdx)
            cols[q * r + q].append(jdx)
            vals[q * r + q].append(1.0)
            for p in range(r):
                if p != q and not (s1 >> p) & 1:
                    kdx = index[s1 | (1 << p)]
                    phase = phase_q * _parity_below(s1, p)
                    rows[p * r + q].append(kdx)
                    cols[p * r + q].append(jdx)
                    vals[p * r + q].append(float(phase))
    tables = [
        sp.csr_matrix((vals[t], (rows[t], cols[t])), shape=(n_str, n_str))
        for t in range(r * r)
    ]
    return strings, tables


def _dense_tables(r: int, n: int) -> np.ndarray:
    _, tables = excitation_tables(r, n)
    n_str = tables[0].shape[0]
    return np.stack([t.toarray() for t in tables]).reshape(r, r, n_str, n_str)


def _spin_block_hamiltonian(h: Hamiltonian, n_spin: int):
    """Dense same-spin Hamiltonian block and dressed operators W_pq.

    W_pq = sum_rs (pq|rs) E_rs; the block is sum_pq k_pq E_pq
    + 1/2 sum_pq E_pq W_pq with k = h - 1/2 sum_r (pr|rs).
    """
    r = h.r_spatial
    T = _dense_tables(r, n_spin)
    n_str = T.shape[-1]
    k_eff = h.h_one - 0.5 * np.einsum("prrs->ps", h.v_two)
    W = np.einsum("pqrs,rsIJ->pqIJ", h.v_two, T, optimize=True)
    block = np.einsum("pq,pqIJ->IJ", k_eff, T, optimize=True)
    block += 0.5 * np.einsum("pqIK,pqKJ->IJ", T, W, optimize=True)
    return 0.5 * (block + block.T), W.reshape(r * r, n_str, n_str)


class _SigmaOperator:
    """H|c> in the product basis via the spin-string factorization."""

    def __init__(self, h: Hamiltonian, basis: DeterminantBasis):
        self.basis = basis
        r = basis.r_spatial
        _, self.tab_a = excitation_tables(r, basis.n_alpha)
        _, self.tab_b = excitation_tables(r, basis.n_beta)
        self.na = len(basis.alpha_strings)
        self.nb = len(basis.beta_strings)
        self.B, self.w_b = _spin_block_hamiltonian(h, basis.n_beta)
        if basis.n_alpha == basis.n_beta:
            self.A = self.B
        else:
            self.A, _ = _spin_block_hamiltonian(h, basis.n_alpha)

    def apply(self, c: np.ndarray) -> np.ndarray:
        C = c.reshape(self.na, self.nb)
        out = self.A @ C + C @ self.B.T
        for t in range(len(self.w_b)):
            out += self.tab_a[t] @ (C @ self.w_b[t].T)
        return out.reshape(-1)

    def dense(self) -> np.ndarray:
        r = self.basis.r_spatial
        Ta = _dense_tables(r, self.basis.n_alpha).reshape(r * r, self.na, self.na)
        H = np.einsum("ik,jl->ijkl", self.A, np.eye(self.nb))
        H += np.einsum("ik,jl->ijkl", np.eye(self.na), self.B)
        H += np.einsum("pik,pjl->ijkl", Ta, self.w_b, optimize=True)
        H = H.reshape(self.na * self.nb, self.na * self.nb)
        return 0.5 * (H + H.T)

    def expectation(self, c: np.ndarray) -> float:
        return float(np.dot(c, self.apply(c)))


def _s2_apply(C: np.ndarray, tab_a, tab_b, r: int, n_alpha: int, n_beta: int) -> np.ndarray:
    """Apply the total-spin-squared operator to a coefficient matrix.

    S^2 = Ms(Ms+1) + N_beta - sum_pq E^a_qp E^b_pq.
    """
    ms = 0.5 * (n_alpha - n_beta)
    out = (ms * (ms + 1.0) + n_beta) * C
    for p in range(r):
        for q in range(r):
            out -= tab_a[q * r + p] @ (tab_b[p * r + q] @ C.T).T
    return out


def s_squared_matrix(coeffs: list[np.ndarray], basis: DeterminantBasis) -> np.ndarray:
    """Matrix of <c_a|S^2|c_b> over coefficient vectors."""
    _, tab_a = excitation_tables(basis.r_spatial, basis.n_alpha)
    _, tab_b = excitation_tables(basis.r_spatial, basis.n_beta)
    na, nb = len(basis.alpha_strings), len(basis.beta_strings)
    applied = [
        _s2_apply(
            c.reshape(na, nb), tab_a, tab_b, basis.r_spatial, basis.n_alpha, basis.n_beta
        ).reshape(-1)
        for c in coeffs
    ]
    out = np.array([[float(np.dot(ca, ab)) for ab in applied] for ca in coeffs])
    return 0.5 * (out + out.T)


def solve_fci(
    h: Hamiltonian,
    k_states: int,
    *,
    dense_cutoff: int = 70_000,
    memory_budget_bytes: int = 8 * 2**30,
    max_dimension: int = 5_000_000,
) -> list[CIState]:
    """Lowest eigenstates of h in the minimal-|M_s| determinant sector.

    A dense symmetric eigensolver is used when the determinant space is
    within dense_cutoff and the ~24 * dim^2 bytes of matrix plus
    eigensolver workspace fit the memory budget; otherwise a matrix-free
    Lanczos solver takes over. Degenerate eigenvalues are rotated to
    diagonalize S^2 so every returned state is spin-pure.
    """
    n = h.n_electrons
    basis = DeterminantBasis.build(h.r_spatial, (n + 1) // 2, n // 2)
    dim = basis.size
    if dim > max_dimension:
        raise DeterminantSpaceError(
            f"determinant space of size {dim} exceeds the configured budget ({max_dimension})"
        )
    if not 1 <= k_states <= dim:
        raise DeterminantSpaceError(f"k_states must be in [1, {dim}], got {k_states}")

    sigma = _SigmaOperator(h, basis)
    use_dense = dim <= dense_cutoff and 24 * dim * dim <= memory_budget_bytes
    if use_dense or dim < 3 * k_states + 2:
        vals, vecs = eigh(sigma.dense())
        vals = vals[:k_states]
        vecs = vecs[:, :k_states]
    else:
        op = LinearOperator((dim, dim), matvec=sigma.apply, dtype=float)
        ncv = min(dim, max(4 * k_states + 1, 40))
        try:
            vals, vecs = eigsh(op, k=k_states, which="SA", ncv=ncv, tol=1e-12, maxiter=5000)
        except Exception as exc:  # ArpackNoConvergence and friends
            raise EigensolverError(f"iterative eigensolver failed: {exc}") from exc
        order = np.argsort(vals)
        vals = vals[order]
        vecs = vecs[:, order]

    states = _spin_resolved_states(vals + h.e_core, vecs, basis, sigma)
    worst = 0.0
    for state in states:
        resid = np.linalg.norm(
            sigma.apply(state.coefficients)
            - (state.energy - h.e_core) * state.coefficients
        )
        worst = max(worst, resid)
    if worst > RESIDUAL_TOL:
        raise EigensolverError(
            f"eigenpair residual {worst:.3e} above {RESIDUAL_TOL}", residual=worst
        )
    return states


def _spin_resolved_states(vals, vecs, basis: DeterminantBasis, sigma: _SigmaOperator):
    """Attach S^2, rotating degenerate groups to a spin eigenbasis."""
    states: list[CIState] = []
    start = 0
    while start < len(vals):
        end = start + 1
        while end < len(vals) and vals[end] - vals[end - 1] < DEGENERACY_TOL:
            end += 1
        members = [vecs[:, j] for j in range(start, end)]
        if len(members) > 1:
            s2_vals, rot = eigh(s_squared_matrix(members, basis))
            members = [
                sum(rot[a, b] * members[a] for a in range(len(members)))
                for b in range(len(members))
            ]
        else:
            s2_vals = np.diag(s_squared_matrix(members, basis))
        for offset, (vec, s2) in enumerate(zip(members, s2_vals)):
            if s2 < -1e-8:
                raise EigensolverError(f"negative S^2 value {s2:.3e}")
            vec = vec / np.linalg.norm(vec)
            states.append(
                CIState(
                    coefficients=vec,
                    energy=float(vals[start + offset]),
                    s_squared=float(max(s2, 0.0)),
                    state_index=start + offset,
                    basis=basis,
                )
            )
        start = end
    return states


def select_singlets(states: list[CIState], m: int, *, s2_cutoff: float = SINGLET_S2_CUTOFF):
    """The lowest singlet plus the m lowest singlet excited states.

    States must be sorted by energy; energy order is preserved and
    degenerate multiplets keep their state_index order.
    """
    singlets = [s for s in states if s.s_squared < s2_cutoff]
    if len(singlets) < m + 1:
        raise DeterminantSpaceError(
            f"need {m + 1} singlets but only {len(singlets)} found among {len(states)} states"
        )
    return singlets[: m + 1]


def apply_annihilation(spin: int, orbital: int, C: np.ndarray, basis: DeterminantBasis):
    """Apply a_{orbital, spin} (spin 0 = alpha, 1 = beta) to a coefficient matrix.

    Returns (C_out, basis_out) over the sector with one fewer electron of
    that spin, or (None, None) when that sector is empty.
    """
    r = basis.r_spatial
    if spin == 0:
        if basis.n_alpha == 0:
            return None, None
        out_basis = DeterminantBasis.build(r, basis.n_alpha - 1, basis.n_beta)
        out_index = _string_index(out_basis.alpha_strings)
        out = np.zeros((len(out_basis.alpha_strings), len(out_basis.beta_strings)))
        for idx, s in enumerate(basis.alpha_strings):
            s = int(s)
            if (s >> orbital) & 1:
                phase = _parity_below(s, orbital)
                out[out_index[s & ~(1 << orbital)], :] += phase * C[idx, :]
        return out, out_basis
    if basis.n_beta == 0:
        return None, None
    out_basis = DeterminantBasis.build(r, basis.n_alpha, basis.n_beta - 1)
    out_index = _string_index(out_basis.beta_strings)
    out = np.zeros((len(out_basis.alpha_strings), len(out_basis.beta_strings)))
    sign_alpha = -1.0 if basis.n_alpha % 2 else 1.0
    for idx, s in enumerate(basis.beta_strings):
        s = int(s)
        if (s >> orbital) & 1:
            phase = sign_alpha * _parity_below(s, orbital)
            out[:, out_index[s & ~(1 << orbital)]] += phase * C[:, idx]
    return out, out_basis


def apply_creation(spin: int, orbital: int, C: np.ndarray, basis: DeterminantBasis):
    """Apply a+_{orbital, spin}; mirror of apply_annihilation."""
    r = basis.r_spatial
    if spin == 0:
        if basis.n_alpha == r:
            return None, None
        out_basis = DeterminantBasis.build(r, basis.n_alpha + 1, basis.n_beta)
        out_index = _string_index(out_basis.alpha_strings)
        out = np.zeros((len(out_basis.alpha_strings), len(out_basis.beta_strings)))
        for idx, s in enumerate(basis.alpha_strings):
            s = int(s)
            if not (s >> orbital) & 1:
                phase = _parity_below(s, orbital)
                out[out_index[s | (1 << orbital)], :] += phase * C[idx, :]
        return out, out_basis
    if basis.n_beta == r:
        return None, None
    out_basis = DeterminantBasis.build(r, basis.n_alpha, basis.n_beta + 1)
    out_index = _string_index(out_basis.beta_strings)
    out = np.zeros((len(out_basis.alpha_strings), len(out_basis.beta_strings)))
    sign_alpha = -1.0 if basis.n_alpha % 2 else 1.0
    for idx, s in enumerate(basis.beta_strings):
        s = int(s)
        if not (s >> orbital) & 1:
            phase = sign_alpha * _parity_below(s, orbital)
            out[:, out_index[s | (1 << orbital)]] += phase * C[:, idx]
    return out, out_basis


def hartree_fock_determinant(h: Hamiltonian) -> CIState:
    """The single closed-shell determinant occupying the lowest orbitals."""
    n = h.n_electrons
    if n % 2:
        raise DeterminantSpaceError("closed-shell determinant needs an even electron count")
    basis = DeterminantBasis.build(h.r_spatial, n // 2, n // 2)
    coeff = np.zeros(basis.size)
    occ = (1 << (n // 2)) - 1
    ia = _string_index(basis.alpha_strings)[occ]
    ib = _string_index(basis.beta_strings)[occ]
    coeff[ia * len(basis.beta_strings) + ib] = 1.0
    sigma = _SigmaOperator(h, basis)
    return CIState(coeff, sigma.expectation(coeff) + h.e_core, 0.0, 0, basis)
