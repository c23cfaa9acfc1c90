"""Pauli strings, Pauli-sum Hamiltonians and the benchmark spin models.

A :class:`PauliString` stores its letters as two bitmasks (x-part and
z-part).  Qubit 0 is the leftmost letter and maps to the most significant
bit of a basis-state index, so ``np.kron`` ordering of dense matrices
agrees with the letter order.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "InvalidModelError",
    "PauliString",
    "Hamiltonian",
    "ObservableSet",
    "build_model",
    "l1_norm",
    "commutator_norm",
    "enumerate_observables",
    "tfim_gap",
]

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}


class InvalidModelError(ValueError):
    """Raised for malformed Pauli strings, Hamiltonians or model requests."""


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, phase-free.

    ``x`` and ``z`` are bitmasks where bit ``n_qubits - 1 - q`` belongs to
    qubit ``q``.  X = (1, 0), Z = (0, 1), Y = (1, 1).
    """

    n_qubits: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise InvalidModelError("n_qubits must be positive")
        full = (1 << self.n_qubits) - 1
        if self.x & ~full or self.z & ~full:
            raise InvalidModelError("bitmask wider than n_qubits")

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        if not label:
            raise InvalidModelError("empty Pauli label")
        n = len(label)
        x = z = 0
        for q, ch in enumerate(label.upper()):
            try:
                bx, bz = _LETTER_BITS[ch]
            except KeyError:
                raise InvalidModelError(f"invalid Pauli letter {ch!r} in {label!r}") from None
            bit = n - 1 - q
            x |= bx << bit
            z |= bz << bit
        return cls(n, x, z)

    @classmethod
    def from_sparse(cls, n_qubits: int, letters: dict[int, str]) -> "PauliString":
        """Build from ``{qubit: letter}``; unspecified qubits are identity."""
        chars = ["I"] * n_qubits
        for q, ch in letters.items():
            if not 0 <= q < n_qubits:
                raise InvalidModelError(f"qubit {q} out of range for n_qubits={n_qubits}")
            chars[q] = ch
        return cls.from_label("".join(chars))

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits, 0, 0)

    def letter(self, q: int) -> str:
        bit = self.n_qubits - 1 - q
        return _BITS_LETTER[((self.x >> bit) & 1, (self.z >> bit) & 1)]

    @property
    def label(self) -> str:
        return "".join(self.letter(q) for q in range(self.n_qubits))

    @property
    def weight(self) -> int:
        return (self.x | self.z).bit_count()

    @property
    def support(self) -> tuple[int, ...]:
        """Qubits carrying a non-identity letter, ascending."""
        mask = self.x | self.z
        return tuple(q for q in range(self.n_qubits) if (mask >> (self.n_qubits - 1 - q)) & 1)

    @property
    def n_y(self) -> int:
        return (self.x & self.z).bit_count()

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def commutes(self, other: "PauliString") -> bool:
        """Symplectic inner-product test."""
        self._check_width(other)
        parity = ((self.x & other.z) ^ (self.z & other.x)).bit_count() & 1
        return parity == 0

    def to_matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix; meant for small oracles only."""
        single = {
            "I": np.eye(2, dtype=complex),
            "X": np.array([[0, 1], [1, 0]], dtype=complex),
            "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
            "Z": np.array([[1, 0], [0, -1]], dtype=complex),
        }
        out = np.ones((1, 1), dtype=complex)
        for ch in self.label:
            out = np.kron(out, single[ch])
        return out

    def _check_width(self, other: "PauliString") -> None:
        if other.n_qubits != self.n_qubits:
            raise InvalidModelError(
                f"width mismatch: {self.n_qubits} vs {other.n_qubits} qubits"
            )

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"PauliString({self.label!r})"


@dataclass(frozen=True)
class Hamiltonian:
    """Real linear combination of distinct Pauli strings.

    Duplicate strings passed to :meth:`from_terms` are merged by summing
    their coefficients; term order follows first appearance.
    """

    n_qubits: int
    terms: tuple[tuple[float, PauliString], ...] = ()

    @classmethod
    def from_terms(
        cls, n_qubits: int, terms: Iterable[tuple[float, PauliString | str]]
    ) -> "Hamiltonian":
        merged: dict[PauliString, float] = {}
        for coeff, pauli in terms:
            if isinstance(pauli, str):
                pauli = PauliString.from_label(pauli)
            if pauli.n_qubits != n_qubits:
                raise InvalidModelError(
                    f"term {pauli.label} has {pauli.n_qubits} qubits, expected {n_qubits}"
                )
            merged[pauli] = merged.get(pauli, 0.0) + float(coeff)
        return cls(n_qubits, tuple((c, p) for p, c in merged.items()))

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms], dtype=float)

    @property
    def paulis(self) -> list[PauliString]:
        return [p for _, p in self.terms]

    @property
    def has_identity(self) -> bool:
        """Identity terms only shift the spectrum; flagged, not rejected."""
        return any(p.is_identity() for _, p in self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def scaled(self, factor: float) -> "Hamiltonian":
        return Hamiltonian(self.n_qubits, tuple((factor * c, p) for c, p in self.terms))

    def to_matrix(self) -> np.ndarray:
        dim = 2**self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for c, p in self.terms:
            out += c * p.to_matrix()
        return out

    def to_json(self) -> str:
        return json.dumps([{"coeff": c, "pauli": p.label} for c, p in self.terms])

    @classmethod
    def from_json(cls, text: str) -> "Hamiltonian":
        items = json.loads(text)
        if not items:
            raise InvalidModelError("cannot infer n_qubits from an empty term list")
        n = len(items[0]["pauli"])
        return cls.from_terms(n, [(it["coeff"], it["pauli"]) for it in items])


@dataclass(frozen=True)
class ObservableSet:
    observables: tuple[PauliString, ...]
    locality: int
    mode: str = "all-subsets"
    index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.index is None:
            object.__setattr__(self, "index", {p: i for i, p in enumerate(self.observables)})
        if len(self.index) != len(self.observables):
            raise InvalidModelError("duplicate observables")

    def __len__(self) -> int:
        return len(self.observables)

    def __iter__(self):
        return iter(self.observables)

    def __getitem__(self, i: int) -> PauliString:
        return self.observables[i]

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self.observables]


def build_model(kind: str, n_qubits: int, params: dict | Sequence[float] | None = None) -> Hamiltonian:
    """Open-boundary 1-D chain models.

    ``heisenberg``: sum_i Jx X_i X_{i+1} + Jy Y_i Y_{i+1} + Jz Z_i Z_{i+1}
    with params ``{"jx", "jy", "jz"}`` (default 1, 1, 1).

    ``tfim``: -J sum_i Z_i Z_{i+1} - d sum_k X_k with params ``{"j", "d"}``.
    Terms are ordered bond by bond (Heisenberg) or all ZZ then all X (TFIM).
    """
    if n_qubits < 2:
        raise InvalidModelError(f"chain models need n_qubits >= 2, got {n_qubits}")
    kind = kind.lower()
    params = _normalize_params(kind, params)
    terms: list[tuple[float, PauliString]] = []
    if kind == "heisenberg":
        for i in range(n_qubits - 1):
            for letter, key in (("X", "jx"), ("Y", "jy"), ("Z", "jz")):
                terms.append(
                    (params[key], PauliString.from_sparse(n_qubits, {i: letter, i + 1: letter}))
                )
    elif kind == "tfim":
        for i in range(n_qubits - 1):
            terms.append((-params["j"], PauliString.from_sparse(n_qubits, {i: "Z", i + 1: "Z"})))
        for i in range(n_qubits):
            terms.append((-params["d"], PauliString.from_sparse(n_qubits, {i: "X"})))
    else:
        raise InvalidModelError(f"unknown model kind {kind!r}")
    # Bypass merging: chain terms are distinct by construction.
    return Hamiltonian(n_qubits, tuple(terms))


def _normalize_params(kind: str, params) -> dict:
    if kind == "heisenberg":
        keys, defaults = ("jx", "jy", "jz"), (1.0, 1.0, 1.0)
    elif kind == "tfim":
        keys, defaults = ("j", "d"), (0.1, 2.0)
    else:
        raise InvalidModelError(f"unknown model kind {kind!r}")
    if params is None:
        return dict(zip(keys, defaults))
    if isinstance(params, dict):
        lowered = {str(k).lower(): float(v) for k, v in params.items()}
        unknown = set(lowered) - set(keys)
        if unknown:
            raise InvalidModelError(f"unknown {kind} parameters: {sorted(unknown)}")
        return {k: lowered.get(k, d) for k, d in zip(keys, defaults)}
    values = [float(v) for v in params]
    if len(values) != len(keys):
        raise InvalidModelError(f"{kind} expects {len(keys)} parameters, got {len(values)}")
    return dict(zip(keys, values))


def l1_norm(hamiltonian: Hamiltonian) -> float:
    return float(sum(abs(c) for c, _ in hamiltonian.terms))


def commutator_norm(hamiltonian: Hamiltonian) -> float:
    """Sum over term pairs of the spectral norm of their commutator.

    For Pauli terms this is ``2|h_a h_b|`` when the strings anticommute and
    zero otherwise.
    """
    terms = hamiltonian.terms
    n = len(terms)
    if n < 2:
        return 0.0
    xs = np.array([p.x for _, p in terms], dtype=np.int64)
    zs = np.array([p.z for _, p in terms], dtype=np.int64)
    coeffs = np.abs(np.array([c for c, _ in terms], dtype=float))
    total = 0.0
    for a in range(n - 1):
        sym = (xs[a] & zs[a + 1 :]) ^ (zs[a] & xs[a + 1 :])
        anti = np.array([int(v).bit_count() & 1 for v in sym], dtype=bool)
        total += 2.0 * coeffs[a] * coeffs[a + 1 :][anti].sum()
    return float(total)


def enumerate_observables(n_qubits: int, q: int, mode: str = "all-subsets") -> ObservableSet:
    """All Pauli strings of weight 1..q.

    ``all-subsets`` ranges over every set of at most ``q`` qubits;
    ``contiguous-windows`` keeps strings whose support fits inside some
    window of ``q`` consecutive qubits.  Ordering is by weight, then by
    support, then by letters in X, Y, Z order.
    """
    if not 1 <= q <= n_qubits:
        raise InvalidModelError(f"locality q={q} outside [1, {n_qubits}]")
    if mode not in ("all-subsets", "contiguous-windows"):
        raise InvalidModelError(f"unknown observable mode {mode!r}")
    out: list[PauliString] = []
    for w in range(1, q + 1):
        for support in itertools.combinations(range(n_qubits), w):
            if mode == "contiguous-windows" and support[-1] - support[0] >= q:
                continue
            for letters in itertools.product("XYZ", repeat=w):
                out.append(PauliString.from_sparse(n_qubits, dict(zip(support, letters))))
    return ObservableSet(tuple(out), q, mode)


def observable_count(n_qubits: int, q: int) -> int:
    """Cardinality of the all-subsets set: sum_w C(n, w) 3^w."""
    return sum(math.comb(n_qubits, w) * 3**w for w in range(1, q + 1))


def tfim_gap(n_qubits: int, j: float, d: float) -> float:
    """Closed-form ground/first-excited gap of the open transverse-field Ising chain."""
    if n_qubits < 2:
        raise InvalidModelError(f"n_qubits must be >= 2, got {n_qubits}")
    radicand = j * j + d * d - 2.0 * j * d * math.cos(math.pi / (n_qubits + 1))
    return 2.0 * math.sqrt(max(radicand, 0.0))
