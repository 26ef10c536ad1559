"""Haar-random orbital rotations and diagonal pair measurements of the 2-RDM.

A shadow records, for one random spatial-orbital rotation, every diagonal
pair value of the rotated 2-RDM. The spatial rotation acts identically on
both spin channels, so a shadow carries (2r)(2r-1)/2 values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .rdms import TwoRDM, pair_list

ORTHOGONALITY_TOL = 1e-12


class ShadowError(ValueError):
    """Inconsistent shadow data."""


@dataclass(frozen=True)
class OrbitalRotation:
    """A Haar-distributed real orthogonal rotation of the spatial orbitals."""

    matrix: np.ndarray = field(repr=False)
    seed: int
    index: int = 0

    def __post_init__(self):
        U = np.asarray(self.matrix, dtype=float)
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise ShadowError(f"rotation must be square, got {U.shape}")
        if np.max(np.abs(U.T @ U - np.eye(U.shape[0]))) > ORTHOGONALITY_TOL:
            raise ShadowError("rotation is not orthogonal to 1e-12")
        object.__setattr__(self, "matrix", U)

    @property
    def r_spatial(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Shadow:
    """Diagonal pair values of the rotated 2-RDM plus a per-value tolerance."""

    rotation: OrbitalRotation
    values: np.ndarray = field(repr=False)
    epsilon: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        n_so = 2 * self.rotation.r_spatial
        expected = n_so * (n_so - 1) // 2
        if vals.shape != (expected,):
            raise ShadowError(f"expected {expected} pair values, got shape {vals.shape}")
        if self.epsilon < 0:
            raise ShadowError(f"epsilon must be >= 0, got {self.epsilon}")
        object.__setattr__(self, "values", vals)

    @property
    def n_values(self) -> int:
        return len(self.values)


def sample_rotation(r: int, seed: int, index: int = 0) -> OrbitalRotation:
    """Haar-distributed real orthogonal r x r matrix, deterministic in seed.

    Generated by QR decomposition of a standard Gaussian matrix with the
    R diagonal sign fixed (Mezzadri's recipe); this convention is part of
    the package contract and stays stable.
    """
    if r < 1:
        raise ShadowError(f"rotation dimension must be >= 1, got {r}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    gauss = rng.standard_normal((r, r))
    Q, R = np.linalg.qr(gauss)
    signs = np.sign(np.diag(R))
    signs[signs == 0.0] = 1.0
    return OrbitalRotation(Q * signs, seed=seed, index=index)


def shadow_seed(master_seed: int, index: int) -> int:
    """Stable per-shadow child seed; the shadow sequence is prefix-stable."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(seq.generate_state(1, np.uint64)[0])


def spin_lifted(U: np.ndarray) -> np.ndarray:
    """Lift a spatial rotation to spin orbitals, acting identically per spin."""
    r = U.shape[0]
    out = np.zeros((2 * r, 2 * r))
    out[0::2, 0::2] = U
    out[1::2, 1::2] = U
    return out


def pair_rotation(U: np.ndarray) -> np.ndarray:
    """Antisymmetrized-pair representation of the spin-lifted rotation.

    W[(p<q),(i<j)] = Uso[p,i] Uso[q,j] - Uso[p,j] Uso[q,i]; W is orthogonal
    because it is the second exterior power of an orthogonal matrix.
    """
    uso = spin_lifted(U)
    pairs = np.array(pair_list(uso.shape[0]))
    p, q = pairs[:, 0], pairs[:, 1]
    return (
        uso[p[:, None], p[None, :]] * uso[q[:, None], q[None, :]]
        - uso[p[:, None], q[None, :]] * uso[q[:, None], p[None, :]]
    )


def rotate_2rdm(d: TwoRDM, rotation: OrbitalRotation) -> TwoRDM:
    """The 2-RDM of the rotated state, W D W^T on the pair basis."""
    if rotation.r_spatial != d.r_spatial:
        raise ShadowError(
            f"rotation acts on {rotation.r_spatial} orbitals but the 2-RDM has {d.r_spatial}"
        )
    W = pair_rotation(rotation.matrix)
    return TwoRDM(W @ d.matrix @ W.T, d.n_electrons, d.r_spatial)


def measure_shadow(
    d_ref: TwoRDM,
    rotation: OrbitalRotation,
    epsilon: float = 0.0,
    noise_seed: int | None = None,
) -> Shadow:
    """All diagonal pair values of the rotated 2-RDM.

    With a noise_seed, each value picks up independent uniform noise in
    [-epsilon, epsilon], a synthetic stand-in for shot noise.
    """
    if rotation.r_spatial != d_ref.r_spatial:
        raise ShadowError(
            f"rotation acts on {rotation.r_spatial} orbitals but the 2-RDM has {d_ref.r_spatial}"
        )
    W = pair_rotation(rotation.matrix)
    values = np.einsum("ui,ij,uj->u", W, d_ref.matrix, W, optimize=True)
    if noise_seed is not None and epsilon > 0.0:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=noise_seed))
        values = values + rng.uniform(-epsilon, epsilon, size=values.shape)
    return Shadow(rotation, values, epsilon)


def sample_shadows(
    d_ref: TwoRDM,
    n_shadows: int,
    master_seed: int,
    epsilon: float = 0.0,
    noisy: bool = False,
) -> list[Shadow]:
    """A prefix-stable sequence of shadows of one reference 2-RDM."""
    shadows = []
    for index in range(1, n_shadows + 1):
        child = shadow_seed(master_seed, index)
        rotation = sample_rotation(d_ref.r_spatial, child, index=index)
        noise_seed = shadow_seed(master_seed, -index) if noisy and epsilon > 0 else None
        shadows.append(measure_shadow(d_ref, rotation, epsilon, noise_seed))
    return shadows


@dataclass(frozen=True)
class ShadowConstraints:
    """Linear functionals L^{pq}(D) = w_pq D w_pq^T with target values.

    rows[u] is the pair-basis vector w of the rank-one coefficient matrix
    w w^T; with epsilon = 0 every row is the equality <w w^T, D> = value,
    otherwise the pair value - eps <= <w w^T, D> <= value + eps.
    """

    rows: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    epsilon: float

    @property
    def n_rows(self) -> int:
        return len(self.values)

    @property
    def is_equality(self) -> bool:
        return self.epsilon == 0.0

    def evaluate(self, d: TwoRDM) -> np.ndarray:
        """The functional values L^{pq}(D) for each measured pair."""
        return np.einsum("ui,ij,uj->u", self.rows, d.matrix, self.rows, optimize=True)

    def max_violation(self, d: TwoRDM) -> float:
        """Worst constraint violation of D (0 when strictly inside the band)."""
        gap = np.abs(self.evaluate(d) - self.values) - self.epsilon
        return float(max(np.max(gap), 0.0))


def shadow_constraint_rows(shadow: Shadow) -> ShadowConstraints:
    """The linear constraint set a shadow contributes to the reconstruction."""
    return ShadowConstraints(
        rows=pair_rotation(shadow.rotation.matrix),
        values=shadow.values.copy(),
        epsilon=shadow.epsilon,
    )


def shadows_to_json(shadows: list[Shadow]) -> str:
    """JSON round-trip format: rotation row-major, values, epsilon, seeds."""
    payload = [
        {
            "seed": s.rotation.seed,
            "index": s.rotation.index,
            "rotation": s.rotation.matrix.reshape(-1).tolist(),
            "r_spatial": s.rotation.r_spatial,
            "values": s.values.tolist(),
            "epsilon": s.epsilon,
        }
        for s in shadows
    ]
    return json.dumps({"format": "sv2rdm-shadows-v1", "shadows": payload}, indent=1)


def shadows_from_json(text: str) -> list[Shadow]:
    data = json.loads(text)
    if data.get("format") != "sv2rdm-shadows-v1":
        raise ShadowError(f"unsupported shadow container format {data.get('format')!r}")
    out = []
    for entry in data["shadows"]:
        r = int(entry["r_spatial"])
        rotation = OrbitalRotation(
            np.array(entry["rotation"], dtype=float).reshape(r, r),
            seed=int(entry["seed"]),
            index=int(entry["index"]),
        )
        out.append(Shadow(rotation, np.array(entry["values"], dtype=float), float(entry["epsilon"])))
    return out
