"""Hamiltonian representation, input parsing, and permutation-matrix decomposition.

A Hamiltonian is a Hermitian matrix stored as a sparse map of nonzero
complex entries.  It can be decomposed into a classical diagonal plus a
sum of generalized permutation terms: each term is a fixed-point-free
partial permutation of the basis together with the complex coefficients
picked up when hopping along it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, HermiticityError, ParseError

TOL_HERM = 1e-10
TOL_ZERO = 1e-12
TOL_RECOMPOSE = 1e-12
MAX_QUBITS = 16
STOQ_TOL = 1e-9

_PAULI_CHARS = frozenset("IXYZ")


class Hamiltonian:
    """Hermitian matrix of dimension ``dim`` with entries in a {(row, col): value} map.

    Entries with magnitude at most ``tol_zero`` are dropped; conjugate
    pairs are symmetrized.  ``pauli_masks``, when present, records the
    distinct bit-flip masks of the source Pauli terms so that the
    decomposition can group hops by mask.
    """

    __slots__ = ("dim", "entries", "pauli_masks")

    def __init__(self, dim, entries, pauli_masks=None, *,
                 tol_herm=TOL_HERM, tol_zero=TOL_ZERO):
        dim = int(dim)
        if dim < 1:
            raise DimensionError(f"dimension must be at least 1, got {dim}")
        clean = {}
        for (i, j), raw in entries.items():
            i, j = int(i), int(j)
            if not (0 <= i < dim and 0 <= j < dim):
                raise DimensionError(f"entry index ({i}, {j}) outside dimension {dim}")
            value = complex(raw)
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ParseError(f"entry ({i}, {j}) is not finite")
            if abs(value) <= tol_zero:
                continue
            clean[(i, j)] = value
        final = {}
        for (i, j), value in clean.items():
            if i == j:
                if abs(value.imag) > tol_herm:
                    raise HermiticityError(
                        f"diagonal entry ({i}, {i}) has imaginary part {value.imag}"
                    )
                final[(i, j)] = complex(value.real, 0.0)
            elif i < j:
                mirror = clean.get((j, i), 0j)
                if abs(value - mirror.conjugate()) > tol_herm:
                    raise HermiticityError(
                        f"entries ({i}, {j}) and ({j}, {i}) are not conjugate"
                    )
                mean = 0.5 * (value + mirror.conjugate())
                if abs(mean) > tol_zero:
                    final[(i, j)] = mean
                    final[(j, i)] = mean.conjugate()
            elif (j, i) not in clean:
                if abs(value) > tol_herm:
                    raise HermiticityError(
                        f"entry ({i}, {j}) has no conjugate partner"
                    )
        self.dim = dim
        self.entries = final
        self.pauli_masks = tuple(sorted(pauli_masks)) if pauli_masks else None

    def diagonal(self) -> np.ndarray:
        out = np.zeros(self.dim)
        for (i, j), value in self.entries.items():
            if i == j:
                out[i] = value.real
        return out

    def off_diag_items(self):
        return ((ij, v) for ij, v in self.entries.items() if ij[0] != ij[1])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for (i, j), value in self.entries.items():
            out[i, j] = value
        return out

    def max_abs(self) -> float:
        return max((abs(v) for v in self.entries.values()), default=0.0)

    def allclose(self, other: "Hamiltonian", tol: float = 1e-12) -> bool:
        if self.dim != other.dim:
            return False
        scale = max(self.max_abs(), other.max_abs(), 1.0)
        keys = set(self.entries) | set(other.entries)
        return all(
            abs(self.entries.get(k, 0j) - other.entries.get(k, 0j)) <= tol * scale
            for k in keys
        )

    def __repr__(self):
        return f"Hamiltonian(dim={self.dim}, nnz={len(self.entries)})"


@dataclass(frozen=True)
class PauliTerm:
    """A Pauli word with complex coefficient; word[k] acts on qubit k.

    Qubit 0 is the most significant bit of the basis index, so the word
    reads in the same order as the basis bitstring.
    """

    coeff: complex
    word: str

    def __post_init__(self):
        if not self.word or set(self.word) - _PAULI_CHARS:
            raise ParseError(f"invalid Pauli word {self.word!r}")
        c = complex(self.coeff)
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise ParseError("Pauli coefficient must be finite")


@dataclass(frozen=True)
class PmrTerm:
    """One generalized permutation: perm maps source -> target (-1 when absent);
    diag holds the hop coefficient indexed by the *target* state."""

    perm: np.ndarray
    diag: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=int)
        diag = np.asarray(self.diag, dtype=complex)
        perm.setflags(write=False)
        diag.setflags(write=False)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "diag", diag)
        covered = perm[perm >= 0]
        if covered.size == 0:
            raise ValueError("permutation term covers no states")
        if np.any(perm == np.arange(perm.size)):
            raise ValueError("permutation term has a fixed point")
        if np.unique(covered).size != covered.size:
            raise ValueError("permutation term is not injective")

    def sources(self) -> np.ndarray:
        return np.nonzero(self.perm >= 0)[0]


@dataclass(frozen=True)
class PmrForm:
    """Classical diagonal plus generalized permutation terms."""

    dim: int
    classical_diag: np.ndarray
    terms: tuple[PmrTerm, ...]

    def __post_init__(self):
        diag = np.asarray(self.classical_diag, dtype=float)
        diag.setflags(write=False)
        object.__setattr__(self, "classical_diag", diag)
        if diag.shape != (self.dim,):
            raise DimensionError("classical diagonal length must equal dim")
        seen = set()
        for term in self.terms:
            if term.perm.shape != (self.dim,):
                raise DimensionError("permutation length must equal dim")
            key = tuple(term.perm.tolist())
            if key in seen:
                raise ValueError("duplicate permutation term")
            seen.add(key)

    @property
    def n_terms(self) -> int:
        return len(self.terms)


def load_hamiltonian(document, *, tol_herm=TOL_HERM, tol_zero=TOL_ZERO) -> Hamiltonian:
    """Parse a JSON document (text or dict) in dense, sparse, or Pauli form."""
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ParseError("document must be a JSON object")
    fmt = document.get("format")
    if fmt == "dense":
        dim, entries, masks = _parse_dense(document)
    elif fmt == "sparse":
        dim, entries, masks = _parse_sparse(document, tol_herm)
    elif fmt == "pauli":
        dim, entries, masks = _parse_pauli(document, tol_zero)
    else:
        raise ParseError(f"unknown or missing format {fmt!r}")
    return Hamiltonian(dim, entries, masks, tol_herm=tol_herm, tol_zero=tol_zero)


def _as_complex_pair(cell, where):
    if (not isinstance(cell, (list, tuple))) or len(cell) != 2:
        raise ParseError(f"{where} must be a [re, im] pair")
    re, im = cell
    if isinstance(re, bool) or isinstance(im, bool) or \
            not isinstance(re, (int, float)) or not isinstance(im, (int, float)):
        raise ParseError(f"{where} must contain two numbers")
    return complex(re, im)


def _parse_dense(document):
    matrix = document.get("matrix")
    if not isinstance(matrix, list) or not matrix:
        raise ParseError("dense document needs a nonempty 'matrix' list")
    dim = len(matrix)
    entries = {}
    for i, row in enumerate(matrix):
        if not isinstance(row, list) or len(row) != dim:
            raise DimensionError(f"row {i} does not have length {dim}")
        for j, cell in enumerate(row):
            value = _as_complex_pair(cell, f"matrix[{i}][{j}]")
            if value != 0:
                entries[(i, j)] = value
    return dim, entries, None


def _parse_sparse(document, tol_herm):
    dim = document.get("dim")
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise ParseError("sparse document needs a positive integer 'dim'")
    raw = document.get("entries")
    if not isinstance(raw, list):
        raise ParseError("sparse document needs an 'entries' list")
    entries = {}
    for pos, item in enumerate(raw):
        if not isinstance(item, (list, tuple)) or len(item) != 4:
            raise ParseError(f"entries[{pos}] must be [i, j, re, im]")
        i, j, re, im = item
        if isinstance(i, bool) or isinstance(j, bool) or \
                not isinstance(i, int) or not isinstance(j, int):
            raise ParseError(f"entries[{pos}] indices must be integers")
        if not (0 <= i < dim and 0 <= j < dim):
            raise DimensionError(f"entries[{pos}] index ({i}, {j}) outside dim {dim}")
        value = _as_complex_pair([re, im], f"entries[{pos}] value")
        if (i, j) in entries:
            raise ParseError(f"duplicate entry for ({i}, {j})")
        entries[(i, j)] = value
    # lower triangle may be omitted; infer it by conjugation
    for (i, j), value in list(entries.items()):
        if i != j and (j, i) not in entries:
            entries[(j, i)] = value.conjugate()
    return dim, entries, None


def _parse_pauli(document, tol_zero):
    n_qubits = document.get("n_qubits")
    if isinstance(n_qubits, bool) or not isinstance(n_qubits, int) or n_qubits < 1:
        raise ParseError("pauli document needs a positive integer 'n_qubits'")
    if n_qubits > MAX_QUBITS:
        raise DimensionError(f"n_qubits {n_qubits} exceeds supported maximum {MAX_QUBITS}")
    raw = document.get("terms")
    if not isinstance(raw, list):
        raise ParseError("pauli document needs a 'terms' list")
    terms = []
    for pos, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ParseError(f"terms[{pos}] must be an object")
        coeff = _as_complex_pair(item.get("coeff"), f"terms[{pos}].coeff")
        word = item.get("word")
        if not isinstance(word, str):
            raise ParseError(f"terms[{pos}].word must be a string")
        if len(word) != n_qubits:
            raise ParseError(f"terms[{pos}].word length != n_qubits")
        terms.append(PauliTerm(coeff, word))
    dim = 1 << n_qubits
    dense = np.zeros((dim, dim), dtype=complex)
    masks = set()
    z = np.arange(dim)
    for term in terms:
        if abs(term.coeff) <= tol_zero:
            continue
        mask = 0
        phase = np.ones(dim, dtype=complex)
        for pos, ch in enumerate(term.word):
            bit = n_qubits - 1 - pos
            b = (z >> bit) & 1
            if ch == "X":
                mask |= 1 << bit
            elif ch == "Y":
                mask |= 1 << bit
                phase = phase * (1j * (1 - 2 * b))
            elif ch == "Z":
                phase = phase * (1 - 2 * b)
        target = z ^ mask
        np.add.at(dense, (target, z), term.coeff * phase)
        if mask:
            masks.add(mask)
    entries = {
        (int(i), int(j)): dense[i, j]
        for i, j in zip(*np.nonzero(np.abs(dense) > tol_zero))
    }
    return dim, entries, masks or None


def _max_matching(pairs):
    """Deterministic maximum bipartite matching of (row, col) pairs.

    Kuhn's augmenting-path algorithm, scanning rows and columns in
    ascending order, run to completion so each round extracts a
    largest possible partial permutation.
    """
    adjacency = {}
    for row, col in sorted(pairs):
        adjacency.setdefault(row, []).append(col)
    owner = {}

    def try_assign(row, banned):
        for col in adjacency[row]:
            if col in banned:
                continue
            banned.add(col)
            if col not in owner or try_assign(owner[col], banned):
                owner[col] = row
                return True
        return False

    for row in sorted(adjacency):
        try_assign(row, set())
    return sorted((row, col) for col, row in owner.items())


def decompose_pmr(H: Hamiltonian) -> PmrForm:
    """Split H into its diagonal plus generalized permutation terms.

    Pauli-sourced Hamiltonians get one term per distinct bit-flip mask.
    Otherwise the off-diagonal support is peeled into maximum partial
    permutations until exhausted; the result always recomposes to H.
    """
    n = H.dim
    diag = H.diagonal()
    offdiag = {ij: v for ij, v in H.off_diag_items()}
    terms = []
    if H.pauli_masks:
        for mask in H.pauli_masks:
            perm = np.arange(n) ^ mask
            d = np.zeros(n, dtype=complex)
            for src in range(n):
                d[src ^ mask] = offdiag.get((src ^ mask, src), 0j)
            perm = np.where(np.abs(d[perm]) > 0, perm, -1)
            if np.all(perm < 0):
                continue
            terms.append(PmrTerm(perm, d))
    else:
        remaining = set(offdiag)
        while remaining:
            matched = _max_matching(remaining)
            perm = np.full(n, -1, dtype=int)
            d = np.zeros(n, dtype=complex)
            for row, col in matched:
                perm[col] = row
                d[row] = offdiag[(row, col)]
            terms.append(PmrTerm(perm, d))
            remaining.difference_update(matched)
    pmr = PmrForm(n, diag, tuple(terms))
    rebuilt = recompose(pmr)
    scale = max(H.max_abs(), 1.0)
    if not H.allclose(rebuilt, TOL_RECOMPOSE):
        raise RuntimeError(
            f"decomposition failed to recompose within {TOL_RECOMPOSE * scale}"
        )
    return pmr


def recompose(pmr: PmrForm) -> Hamiltonian:
    """Dense reconstruction: diagonal plus the sum of permutation terms."""
    dense = np.diag(pmr.classical_diag.astype(complex))
    for term in pmr.terms:
        for src in term.sources():
            tgt = term.perm[src]
            dense[tgt, src] += term.diag[tgt]
    entries = {
        (int(i), int(j)): dense[i, j]
        for i, j in zip(*np.nonzero(dense))
    }
    return Hamiltonian(pmr.dim, entries)


def stoquasticize(H: Hamiltonian) -> Hamiltonian:
    """Replace every off-diagonal entry by -|entry|; diagonal unchanged."""
    entries = {}
    for (i, j), value in H.entries.items():
        entries[(i, j)] = value if i == j else complex(-abs(value), 0.0)
    return Hamiltonian(H.dim, entries, H.pauli_masks)


def is_stoquastic(H: Hamiltonian, tol: float = STOQ_TOL) -> bool:
    """True iff every off-diagonal entry is real (within tol) and <= tol."""
    return all(
        abs(v.imag) <= tol and v.real <= tol for _, v in H.off_diag_items()
    )
