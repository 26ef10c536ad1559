"""Semidefinite reconstruction of 2-RDMs under positivity and shadow constraints.

The problem minimizes the energy functional over the packed 2-RDM subject
to the pair trace, optional shadow rows (equalities, or inequality pairs
when a tolerance is attached), and positive semidefiniteness of the
particle-particle block and of its affine hole-hole / particle-hole
images. The solver is first-order operator splitting: an equality-
constrained least-squares step alternates with eigenvalue projections
onto the cones, with over-relaxation and an adaptive penalty.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import lu_factor, lu_solve, qr

from .hamiltonians import Hamiltonian
from .rdms import (
    TwoRDM,
    energy_coefficients,
    frobenius_error,
    pack_pair_tensor,
    unpack_pair_matrix,
)
from .shadows import Shadow, shadow_constraint_rows

CONDITION_SETS = ("D", "DQ", "DQG")


class SdpError(RuntimeError):
    """Assembly or solver failure."""


class ProblemTooLargeError(SdpError):
    """The dense assembly would exceed the configured memory budget."""


@lru_cache(maxsize=16)
def _svec_data(n: int):
    rows, cols = np.triu_indices(n)
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, weights


def svec(S: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization with <A,B>_F = svec(A).svec(B)."""
    n = S.shape[0]
    rows, cols, weights = _svec_data(n)
    return S[rows, cols] * weights


def smat(v: np.ndarray, n: int) -> np.ndarray:
    rows, cols, weights = _svec_data(n)
    out = np.zeros((n, n))
    out[rows, cols] = v / weights
    out = out + out.T
    out[np.arange(n), np.arange(n)] *= 0.5
    return out


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def _contract_packed(mat: np.ndarray, n_so: int, n_electrons: int) -> np.ndarray:
    tensor = unpack_pair_matrix(mat, n_so)
    return np.einsum("ijkj->ik", tensor) / (n_electrons - 1)


def _q_of_packed(mat: np.ndarray, n_so: int, n_electrons: int) -> np.ndarray:
    """Pair-basis hole-hole image of a packed matrix (affine part included)."""
    eye = np.eye(n_so)
    d1 = _contract_packed(mat, n_so, n_electrons)
    T = unpack_pair_matrix(mat, n_so)
    Q = np.einsum("ik,jl->ijkl", eye, eye) - np.einsum("il,jk->ijkl", eye, eye)
    Q -= np.einsum("ik,jl->ijkl", eye, d1) + np.einsum("jl,ik->ijkl", eye, d1)
    Q += np.einsum("il,jk->ijkl", eye, d1) + np.einsum("jk,il->ijkl", eye, d1)
    Q += T
    return pack_pair_tensor(Q)


def _g_of_packed(mat: np.ndarray, n_so: int, n_electrons: int) -> np.ndarray:
    d1 = _contract_packed(mat, n_so, n_electrons)
    T = unpack_pair_matrix(mat, n_so)
    G = np.einsum("ik,lj->ilkj", d1, np.eye(n_so)) - T.transpose(0, 3, 2, 1)
    return G.reshape(n_so * n_so, n_so * n_so)


@lru_cache(maxsize=8)
def q_map(n_so: int, n_electrons: int):
    """(L_Q, q0) with svec(Q(D)) = q0 + L_Q @ svec(D)."""
    n_pairs = n_so * (n_so - 1) // 2
    dim = svec_dim(n_pairs)
    zero = np.zeros((n_pairs, n_pairs))
    q0 = svec(_q_of_packed(zero, n_so, n_electrons))
    L = np.empty((dim, dim))
    basis = np.zeros(dim)
    for u in range(dim):
        basis[u] = 1.0
        L[:, u] = svec(_q_of_packed(smat(basis, n_pairs), n_so, n_electrons)) - q0
        basis[u] = 0.0
    return L, q0


@lru_cache(maxsize=8)
def g_map(n_so: int, n_electrons: int):
    """L_G with svec(G(D)) = L_G @ svec(D); G(0) = 0."""
    n_pairs = n_so * (n_so - 1) // 2
    dim_in = svec_dim(n_pairs)
    dim_out = svec_dim(n_so * n_so)
    L = np.empty((dim_out, dim_in))
    basis = np.zeros(dim_in)
    for u in range(dim_in):
        basis[u] = 1.0
        L[:, u] = svec(_g_of_packed(smat(basis, n_pairs), n_so, n_electrons))
        basis[u] = 0.0
    return L


@dataclass(frozen=True)
class SDPProblem:
    """Assembled conic program over the packed 2-RDM."""

    r_spatial: int
    n_electrons: int
    condition_set: str
    c: np.ndarray = field(repr=False)
    e_core: float = 0.0
    A: np.ndarray = field(repr=False, default=None)
    b: np.ndarray = field(repr=False, default=None)
    box_rows: np.ndarray = field(repr=False, default=None)
    box_lower: np.ndarray = field(repr=False, default=None)
    box_upper: np.ndarray = field(repr=False, default=None)
    M: np.ndarray = field(repr=False, default=None)
    q: np.ndarray = field(repr=False, default=None)
    psd_blocks: tuple = ()
    n_shadows: int = 0

    @property
    def n_spin_orbitals(self) -> int:
        return 2 * self.r_spatial

    @property
    def n_pairs(self) -> int:
        return self.n_spin_orbitals * (self.n_spin_orbitals - 1) // 2

    @property
    def block_dims(self) -> dict:
        dims = {"D": self.n_pairs}
        if "Q" in self.condition_set:
            dims["Q"] = self.n_pairs
        if "G" in self.condition_set:
            dims["G"] = self.n_spin_orbitals**2
        return dims

    @property
    def n_equality_rows(self) -> int:
        return len(self.b)

    @property
    def n_inequality_rows(self) -> int:
        return 2 * len(self.box_lower)

    def summary(self) -> dict:
        return {
            "r_spatial": self.r_spatial,
            "n_electrons": self.n_electrons,
            "condition_set": self.condition_set,
            "block_dims": self.block_dims,
            "n_shadows": self.n_shadows,
            "n_equality_rows": self.n_equality_rows,
            "n_inequality_rows": self.n_inequality_rows,
            "e_core": self.e_core,
        }

    def to_json(self) -> str:
        """Audit record: dimensions plus the data rows that vary per run.

        The positivity maps are omitted; they are regenerated exactly from
        (n_spin_orbitals, n_electrons, condition_set).
        """
        payload = self.summary()
        payload["objective"] = self.c.tolist()
        payload["equality_rows"] = self.A.tolist()
        payload["equality_values"] = self.b.tolist()
        payload["inequality_rows"] = self.box_rows.tolist()
        payload["inequality_lower"] = self.box_lower.tolist()
        payload["inequality_upper"] = self.box_upper.tolist()
        return json.dumps(payload)


@dataclass(frozen=True)
class SDPSolution:
    """Solver output; d_opt is the packed 2-RDM iterate."""

    d_opt: TwoRDM
    energy: float
    primal_residual: float
    dual_residual: float
    constraint_violation_max: float
    iterations: int
    wall_time: float
    status: str

    def to_json(self) -> str:
        payload = {
            "energy": self.energy,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "constraint_violation_max": self.constraint_violation_max,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "status": self.status,
            "d_opt": self.d_opt.matrix.tolist(),
        }
        return json.dumps(payload)


def assemble(
    h: Hamiltonian,
    shadows: list[Shadow],
    conditions: str = "DQG",
    *,
    memory_budget_bytes: int = 2 * 2**30,
) -> SDPProblem:
    """Build the conic program for a Hamiltonian and a set of shadows."""
    conditions = conditions.upper()
    if conditions not in CONDITION_SETS:
        raise SdpError(f"condition set must be one of {CONDITION_SETS}, got {conditions!r}")
    n_so = 2 * h.r_spatial
    n_pairs = n_so * (n_so - 1) // 2
    dim = svec_dim(n_pairs)
    indices = [s.rotation.index for s in shadows]
    if len(set(indices)) != len(indices):
        raise SdpError(f"duplicate shadow indices in {indices}")
    for s in shadows:
        if s.rotation.r_spatial != h.r_spatial:
            raise SdpError(
                f"shadow rotation dimension {s.rotation.r_spatial} != {h.r_spatial}"
            )

    est = 8 * dim * dim  # identity block
    if "Q" in conditions:
        est += 8 * dim * dim
    if "G" in conditions:
        est += 8 * svec_dim(n_so * n_so) * dim
    if est > memory_budget_bytes:
        raise ProblemTooLargeError(
            f"dense assembly needs ~{est / 2**30:.1f} GiB for {n_so} spin orbitals, "
            f"budget is {memory_budget_bytes / 2**30:.1f} GiB"
        )

    coeff_matrix, e_core = energy_coefficients(h)
    c = svec(coeff_matrix)

    eq_rows = [svec(np.eye(n_pairs))]
    eq_vals = [h.n_electrons * (h.n_electrons - 1) / 2.0]
    box_rows, box_lo, box_hi = [], [], []
    for shadow in shadows:
        constraints = shadow_constraint_rows(shadow)
        for w, value in zip(constraints.rows, constraints.values):
            row = svec(np.outer(w, w))
            if constraints.is_equality:
                eq_rows.append(row)
                eq_vals.append(value)
            else:
                box_rows.append(row)
                box_lo.append(value - shadow.epsilon)
                box_hi.append(value + shadow.epsilon)

    blocks = [("D", n_pairs)]
    maps = [np.eye(dim)]
    offsets = [np.zeros(dim)]
    if "Q" in conditions:
        L, q0 = q_map(n_so, h.n_electrons)
        blocks.append(("Q", n_pairs))
        maps.append(L)
        offsets.append(q0)
    if "G" in conditions:
        blocks.append(("G", n_so * n_so))
        maps.append(g_map(n_so, h.n_electrons))
        offsets.append(np.zeros(svec_dim(n_so * n_so)))

    return SDPProblem(
        r_spatial=h.r_spatial,
        n_electrons=h.n_electrons,
        condition_set=conditions,
        c=c,
        e_core=e_core,
        A=np.array(eq_rows),
        b=np.array(eq_vals),
        box_rows=np.array(box_rows).reshape(len(box_rows), dim),
        box_lower=np.array(box_lo),
        box_upper=np.array(box_hi),
        M=np.vstack(maps),
        q=np.concatenate(offsets),
        psd_blocks=tuple(blocks),
        n_shadows=len(shadows),
    )


@dataclass(frozen=True)
class SolverOptions:
    tol_primal: float = 1e-7
    tol_dual: float = 1e-7
    tol_stall: float = 1e-9
    max_iterations: int = 100_000
    rho: float = 1.0
    over_relaxation: float = 1.6
    check_every: int = 25
    adapt_every: int = 100
    feasibility_tol: float = 1e-8
    prune_tol: float = 1e-10


def _prune_rows(A: np.ndarray, b: np.ndarray, options: SolverOptions):
    """Drop linearly dependent equality rows; flag inconsistent values."""
    if len(b) <= 1:
        return A, b, True
    _, R, piv = qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > options.prune_tol * max(diag[0], 1e-300)))
    kept = np.sort(piv[:rank])
    if rank == len(b):
        return A, b, True
    A_kept, b_kept = A[kept], b[kept]
    # Exact solution of the kept system decides consistency of dropped rows.
    x_feas, *_ = np.linalg.lstsq(A_kept, b_kept, rcond=None)
    residual = np.max(np.abs(A @ x_feas - b))
    consistent = residual <= options.feasibility_tol * (1.0 + np.max(np.abs(b)))
    return A_kept, b_kept, consistent


def _project_cones(v: np.ndarray, problem: SDPProblem, box_slice, box_lo, box_hi):
    out = np.empty_like(v)
    offset = 0
    for _, side in problem.psd_blocks:
        size = svec_dim(side)
        seg = smat(v[offset : offset + size], side)
        vals, vecs = np.linalg.eigh(seg)
        np.maximum(vals, 0.0, out=vals)
        out[offset : offset + size] = svec((vecs * vals) @ vecs.T)
        offset += size
    if box_slice is not None:
        out[box_slice] = np.clip(v[box_slice], box_lo, box_hi)
    return out


def _psd_violation(v: np.ndarray, problem: SDPProblem) -> float:
    worst = 0.0
    offset = 0
    for _, side in problem.psd_blocks:
        size = svec_dim(side)
        eigs = np.linalg.eigvalsh(smat(v[offset : offset + size], side))
        worst = max(worst, max(0.0, -float(eigs[0])))
        offset += size
    return worst


def solve(
    problem: SDPProblem,
    options: SolverOptions = SolverOptions(),
    max_iterations: int | None = None,
) -> SDPSolution:
    """Run the operator-splitting solver on an assembled problem.

    Deterministic given the problem and options. Returns the best iterate
    with status "max_iter" when tolerances are not reached, and
    "infeasible_detected" when the equality rows are inconsistent.
    """
    start = time.perf_counter()
    if max_iterations is None:
        max_iterations = options.max_iterations
    n = len(problem.c)

    row_norms = np.linalg.norm(problem.A, axis=1)
    row_norms[row_norms == 0.0] = 1.0
    A = problem.A / row_norms[:, None]
    b = problem.b / row_norms

    A, b, consistent = _prune_rows(A, b, options)

    M = problem.M
    q = problem.q
    box_slice = None
    box_lo = box_hi = None
    if len(problem.box_lower):
        box_norms = np.linalg.norm(problem.box_rows, axis=1)
        box_norms[box_norms == 0.0] = 1.0
        M = np.vstack([M, problem.box_rows / box_norms[:, None]])
        q = np.concatenate([q, np.zeros(len(box_norms))])
        box_slice = slice(len(problem.q), len(q))
        box_lo = problem.box_lower / box_norms
        box_hi = problem.box_upper / box_norms

    c_scale = max(1.0, np.linalg.norm(problem.c))
    c = problem.c / c_scale

    def energy_of(x):
        return problem.e_core + float(np.dot(problem.c, x))

    def finish(x, iterations, r_p, r_d, status):
        d_opt = TwoRDM(smat(x, problem.n_pairs), problem.n_electrons, problem.r_spatial)
        violation = float(np.max(np.abs(problem.A @ x - problem.b))) if len(problem.b) else 0.0
        if len(problem.box_lower):
            vals = problem.box_rows @ x
            violation = max(
                violation,
                float(np.max(np.maximum(problem.box_lower - vals, vals - problem.box_upper))),
            )
        violation = max(violation, _psd_violation(M @ x + q, problem))
        return SDPSolution(
            d_opt=d_opt,
            energy=energy_of(x),
            primal_residual=r_p,
            dual_residual=r_d,
            constraint_violation_max=violation,
            iterations=iterations,
            wall_time=time.perf_counter() - start,
            status=status,
        )

    if not consistent:
        x_ls, *_ = np.linalg.lstsq(A, b, rcond=None)
        return finish(x_ls, 0, np.inf, np.inf, "infeasible_detected")

    rho = options.rho
    G = M.T @ M
    n_eq = len(b)

    def factor(rho_val):
        K = np.zeros((n + n_eq, n + n_eq))
        K[:n, :n] = rho_val * G
        K[:n, n:] = A.T
        K[n:, :n] = A
        return lu_factor(K)

    kkt = factor(rho)
    m_rows = M.shape[0]
    Z = np.zeros(m_rows)
    U = np.zeros(m_rows)
    alpha = options.over_relaxation
    rhs = np.empty(n + n_eq)
    rhs[n:] = b

    best = None
    energy_prev = None
    r_p_rel = r_d_rel = np.inf
    x = np.zeros(n)
    for iteration in range(1, max_iterations + 1):
        rhs[:n] = rho * (M.T @ (Z - U - q)) - c
        x = lu_solve(kkt, rhs)[:n]
        Mxq = M @ x + q
        H = alpha * Mxq + (1.0 - alpha) * Z
        Z_new = _project_cones(H + U, problem, box_slice, box_lo, box_hi)
        U += H - Z_new
        r_d = rho * np.linalg.norm(M.T @ (Z_new - Z))
        Z = Z_new

        if iteration % options.check_every == 0 or iteration == max_iterations:
            r_p = np.linalg.norm(Mxq - Z)
            scale_p = max(1.0, np.linalg.norm(Mxq), np.linalg.norm(Z))
            scale_d = max(1.0, rho * np.linalg.norm(M.T @ U))
            r_p_rel = r_p / scale_p
            r_d_rel = r_d / scale_d
            energy = energy_of(x)
            stalled = (
                energy_prev is not None
                and abs(energy - energy_prev) <= options.tol_stall * max(1.0, abs(energy))
            )
            energy_prev = energy
            score = max(r_p_rel, r_d_rel)
            if best is None or score < best[0]:
                best = (score, x.copy(), r_p_rel, r_d_rel, iteration)
            if r_p_rel < options.tol_primal and r_d_rel < options.tol_dual and stalled:
                return finish(x, iteration, r_p_rel, r_d_rel, "converged")

        if iteration % options.adapt_every == 0:
            if r_p_rel > 10.0 * r_d_rel and rho < 1e6:
                rho *= 2.0
                U /= 2.0
                kkt = factor(rho)
            elif r_d_rel > 10.0 * r_p_rel and rho > 1e-6:
                rho /= 2.0
                U *= 2.0
                kkt = factor(rho)

    score, x_best, r_p_rel, r_d_rel, _ = best
    return finish(x_best, max_iterations, r_p_rel, r_d_rel, "max_iter")


@dataclass(frozen=True)
class ConvergenceRecord:
    """One sweep point: shadow count, energies, metrics, diagnostics."""

    n_shadows: int
    energy: float
    abs_energy_error: float
    frobenius_error: float
    frobenius_error_alt: float
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "n_shadows": self.n_shadows,
            "energy": self.energy,
            "abs_energy_error": self.abs_energy_error,
            "frobenius_error": self.frobenius_error,
            "frobenius_error_alt": self.frobenius_error_alt,
            "status": self.status,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "wall_time": self.wall_time,
        }


@dataclass(frozen=True)
class SweepResult:
    records: list
    final_solution: SDPSolution | None
    target_energy: float
    shadows: list


def suggest_epsilon(shadows: list[Shadow], d_ref: TwoRDM) -> float:
    """Smallest per-value tolerance under which d_ref satisfies every shadow."""
    worst = 0.0
    for shadow in shadows:
        constraints = shadow_constraint_rows(shadow)
        worst = max(worst, float(np.max(np.abs(constraints.evaluate(d_ref) - constraints.values))))
    return worst


def convergence_sweep(
    h: Hamiltonian,
    target_state,
    conditions: str,
    n_max: int,
    seed: int,
    epsilon: float = 0.0,
    *,
    noisy: bool | None = None,
    options: SolverOptions = SolverOptions(),
    shadow_counts: list[int] | None = None,
    memory_budget_bytes: int = 2 * 2**30,
) -> SweepResult:
    """Reconstruct the target state's 2-RDM for n = 0..n_max shadows.

    Shadows are prefix-stable in the master seed, so the first n rotations
    are shared by every sweep length. Per-point solver failures are
    recorded in the row status, never raised.
    """
    from .rdms import compute_2rdm
    from .shadows import sample_shadows

    if noisy is None:
        noisy = epsilon > 0.0
    d_exact = compute_2rdm(target_state)
    e_target = target_state.energy
    counts = list(range(n_max + 1)) if shadow_counts is None else sorted(set(shadow_counts))
    all_shadows = sample_shadows(d_exact, max(counts), seed, epsilon, noisy)
    records = []
    final = None
    for n in counts:
        t0 = time.perf_counter()
        try:
            problem = assemble(
                h, all_shadows[:n], conditions, memory_budget_bytes=memory_budget_bytes
            )
            solution = solve(problem, options)
            final = solution
            records.append(
                ConvergenceRecord(
                    n_shadows=n,
                    energy=solution.energy,
                    abs_energy_error=abs(solution.energy - e_target),
                    frobenius_error=frobenius_error(solution.d_opt, d_exact),
                    frobenius_error_alt=_alt_frobenius(solution.d_opt, d_exact),
                    status=solution.status,
                    iterations=solution.iterations,
                    primal_residual=solution.primal_residual,
                    dual_residual=solution.dual_residual,
                    wall_time=solution.wall_time,
                )
            )
        except SdpError as exc:
            records.append(
                ConvergenceRecord(
                    n_shadows=n,
                    energy=float("nan"),
                    abs_energy_error=float("nan"),
                    frobenius_error=float("nan"),
                    frobenius_error_alt=float("nan"),
                    status=f"failed: {exc}",
                    iterations=0,
                    primal_residual=float("nan"),
                    dual_residual=float("nan"),
                    wall_time=time.perf_counter() - t0,
                )
            )
    return SweepResult(records, final, e_target, all_shadows)


def _alt_frobenius(d: TwoRDM, d_ref: TwoRDM) -> float:
    denominator = np.linalg.norm(d.matrix)
    if denominator == 0.0:
        return float("nan")
    return float(np.linalg.norm(d.matrix - d_ref.matrix) / denominator)
