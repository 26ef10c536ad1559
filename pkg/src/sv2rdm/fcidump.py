"""Reader and writer for the FCIDUMP integral interchange format.

Layout: a namelist header announcing NORB, NELEC, and MS2, closed by &END
(or /), followed by `value i j k l` lines with 1-based indices in chemist
(ij|kl) convention. Lines with k = l = 0 carry one-electron integrals and
the all-zero index line carries the core energy. ORBSYM labels are parsed
and ignored.
"""

from __future__ import annotations

import re

import numpy as np

from .hamiltonians import Hamiltonian

WRITE_THRESHOLD = 1e-14
DUPLICATE_TOL = 1e-10


class FcidumpError(ValueError):
    """Malformed FCIDUMP content."""


def _canonical_two(i: int, j: int, k: int, l: int) -> tuple[int, int, int, int]:
    ij = (i, j) if i >= j else (j, i)
    kl = (k, l) if k >= l else (l, k)
    return ij + kl if ij >= kl else kl + ij


def parse_fcidump(text: str) -> Hamiltonian:
    """Parse FCIDUMP text into a fully symmetrized Hamiltonian.

    Unspecified integrals default to zero; duplicate entries must agree to
    1e-10.
    """
    lines = text.splitlines()
    header_lines = []
    body_start = None
    for pos, line in enumerate(lines):
        header_lines.append(line)
        if re.search(r"&END|\$END|^\s*/\s*$|/\s*$", line, flags=re.IGNORECASE):
            body_start = pos + 1
            break
    if body_start is None:
        raise FcidumpError("header not terminated by &END or /")
    header = " ".join(header_lines)
    if "&FCI" not in header.upper():
        raise FcidumpError("missing &FCI header")

    def header_int(name: str, required: bool) -> int | None:
        match = re.search(rf"{name}\s*=\s*(-?\d+)", header, flags=re.IGNORECASE)
        if match is None:
            if required:
                raise FcidumpError(f"header does not define {name}")
            return None
        return int(match.group(1))

    norb = header_int("NORB", required=True)
    nelec = header_int("NELEC", required=True)
    header_int("MS2", required=False)
    if norb < 1:
        raise FcidumpError(f"NORB must be >= 1, got {norb}")

    e_core = 0.0
    core_seen = False
    h_one = np.zeros((norb, norb))
    h_seen: dict[tuple[int, int], float] = {}
    v_two = np.zeros((norb, norb, norb, norb))
    v_seen: dict[tuple[int, int, int, int], float] = {}

    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        stripped = line.strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 5:
            raise FcidumpError(f"line {lineno}: expected `value i j k l`, got {stripped!r}")
        try:
            value = float(parts[0])
            i, j, k, l = (int(p) for p in parts[1:])
        except ValueError as exc:
            raise FcidumpError(f"line {lineno}: {exc}") from exc
        for name, idx in zip("ijkl", (i, j, k, l)):
            if idx < 0 or idx > norb:
                raise FcidumpError(
                    f"line {lineno}: index {name}={idx} outside [1, {norb}]"
                )
        if i == j == k == l == 0:
            if core_seen and abs(e_core - value) > DUPLICATE_TOL:
                raise FcidumpError(f"line {lineno}: conflicting core energies")
            e_core = value
            core_seen = True
        elif k == 0 and l == 0:
            if i == 0 or j == 0:
                raise FcidumpError(f"line {lineno}: malformed index pattern {i} {j} {k} {l}")
            key = (max(i, j), min(i, j))
            if key in h_seen and abs(h_seen[key] - value) > DUPLICATE_TOL:
                raise FcidumpError(f"line {lineno}: conflicting one-electron entry {key}")
            h_seen[key] = value
            h_one[i - 1, j - 1] = value
            h_one[j - 1, i - 1] = value
        elif 0 in (i, j, k, l):
            raise FcidumpError(f"line {lineno}: malformed index pattern {i} {j} {k} {l}")
        else:
            key = _canonical_two(i, j, k, l)
            if key in v_seen and abs(v_seen[key] - value) > DUPLICATE_TOL:
                raise FcidumpError(f"line {lineno}: conflicting two-electron entry {key}")
            v_seen[key] = value
            a, b, c, d = i - 1, j - 1, k - 1, l - 1
            for (p, q, s, t) in (
                (a, b, c, d), (b, a, c, d), (a, b, d, c), (b, a, d, c),
                (c, d, a, b), (d, c, a, b), (c, d, b, a), (d, c, b, a),
            ):
                v_two[p, q, s, t] = value

    return Hamiltonian(norb, nelec, e_core, h_one, v_two)


def write_fcidump(h: Hamiltonian) -> str:
    """Serialize a Hamiltonian; emits only symmetry-unique entries above 1e-14.

    The core-energy line is always present so the stream is never empty of
    data. Floats carry 17 significant digits, enough for exact round-trip.
    """
    r = h.r_spatial
    ms2 = h.n_electrons % 2
    out = [
        f" &FCI NORB={r},NELEC={h.n_electrons},MS2={ms2},",
        "  ORBSYM=" + "1," * r,
        "  ISYM=1,",
        " &END",
    ]

    def line(value: float, i: int, j: int, k: int, l: int) -> str:
        return f"{value:.17e} {i:4d} {j:4d} {k:4d} {l:4d}"

    for i in range(r):
        for j in range(i + 1):
            ij = i * (i + 1) // 2 + j
            for k in range(i + 1):
                for l in range(k + 1):
                    if k * (k + 1) // 2 + l > ij:
                        continue
                    value = h.v_two[i, j, k, l]
                    if abs(value) > WRITE_THRESHOLD:
                        out.append(line(value, i + 1, j + 1, k + 1, l + 1))
    for i in range(r):
        for j in range(i + 1):
            value = h.h_one[i, j]
            if abs(value) > WRITE_THRESHOLD:
                out.append(line(value, i + 1, j + 1, 0, 0))
    out.append(line(h.e_core, 0, 0, 0, 0))
    return "\n".join(out) + "\n"


def read_fcidump_file(path) -> Hamiltonian:
    with open(path) as handle:
        return parse_fcidump(handle.read())


def write_fcidump_file(path, h: Hamiltonian):
    with open(path, "w") as handle:
        handle.write(write_fcidump(h))
