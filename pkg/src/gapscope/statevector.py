"""Dense statevector simulation of Pauli-rotation circuits.

Amplitude index bit ``n - 1 - q`` is qubit ``q`` (qubit 0 leftmost), the
same convention as :class:`~gapscope.hamiltonian.PauliString`.  Gates are
applied in place by pairing indices that differ on the X/Y support; no
2^n x 2^n matrix is formed outside the small-system oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .hamiltonian import Hamiltonian, PauliString

__all__ = [
    "CapacityError",
    "ConsistencyError",
    "StateVector",
    "RotationCircuit",
    "EigenDecomposition",
    "product_state",
    "apply_pauli_rotation",
    "apply_pauli",
    "apply_depolarizing",
    "measure_in_bases",
    "expectation",
    "eigendecompose",
    "exact_expectation_series",
    "circuit_depth",
]

MAX_STATEVECTOR_QUBITS = 24
MAX_DENSE_QUBITS = 14
NORM_TOLERANCE = 1e-6

BASIS_CODES = {"X": 0, "Y": 1, "Z": 2}
BASIS_LETTERS = "XYZ"


class CapacityError(RuntimeError):
    """Requested system is beyond what the dense simulator supports."""


class ConsistencyError(RuntimeError):
    """Internal numerical invariant broken (e.g. norm drift before measurement)."""


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_qubits > MAX_STATEVECTOR_QUBITS:
            raise CapacityError(
                f"{self.n_qubits} qubits exceeds the statevector limit of {MAX_STATEVECTOR_QUBITS}"
            )
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError("amplitude vector has the wrong length")

    @classmethod
    def zeros(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class RotationCircuit:
    """Ordered list of Pauli rotations exp(-i angle P / 2)."""

    n_qubits: int
    gates: tuple[tuple[PauliString, float], ...] = ()

    def __post_init__(self):
        for pauli, _ in self.gates:
            if pauli.is_identity():
                raise ValueError("rotation axis must be a non-identity Pauli string")
            if pauli.n_qubits != self.n_qubits:
                raise ValueError("gate width does not match circuit width")

    def __len__(self) -> int:
        return len(self.gates)

    def arrays(self) -> "GateArrays":
        return GateArrays.from_gates(self.n_qubits, self.gates)


@dataclass
class GateArrays:
    """Flat array form of a rotation circuit, as consumed by the kernels."""

    n_qubits: int
    x: np.ndarray
    z: np.ndarray
    angle: np.ndarray
    weight: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.weight is None:
            self.weight = _popcounts(np.bitwise_or(self.x, self.z).astype(np.int64))

    @classmethod
    def from_gates(cls, n_qubits: int, gates) -> "GateArrays":
        x = np.array([p.x for p, _ in gates], dtype=np.int64)
        z = np.array([p.z for p, _ in gates], dtype=np.int64)
        angle = np.array([a for _, a in gates], dtype=float)
        return cls(n_qubits, x, z, angle)

    def __len__(self) -> int:
        return len(self.angle)


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def gap(self, a: int, b: int) -> float:
        return abs(float(self.eigenvalues[b] - self.eigenvalues[a]))


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


@numba.njit(cache=True, inline="always")
def _parity(v):
    v ^= v >> 32
    v ^= v >> 16
    v ^= v >> 8
    v ^= v >> 4
    v ^= v >> 2
    v ^= v >> 1
    return v & 1


@numba.njit(cache=True)
def _pauli_phase(k, z, ny):
    # <k xor x| P |k> = i^ny (-1)^{popcount(k & z)}
    ph = 1.0 - 2.0 * _parity(k & z)
    r = ny & 3
    if r == 0:
        return complex(ph, 0.0)
    if r == 1:
        return complex(0.0, ph)
    if r == 2:
        return complex(-ph, 0.0)
    return complex(0.0, -ph)


@numba.njit(cache=True)
def _rotate(psi, x, z, angle):
    c = math.cos(0.5 * angle)
    s = math.sin(0.5 * angle)
    ny = 0
    v = x & z
    while v:
        v &= v - 1
        ny += 1
    dim = psi.shape[0]
    msin = complex(0.0, -s)
    if x == 0:
        for k in range(dim):
            psi[k] = psi[k] * (c + msin * _pauli_phase(k, z, ny))
        return
    hb = 1
    while (hb << 1) <= x:
        hb <<= 1
    for k in range(dim):
        if k & hb:
            continue
        j = k ^ x
        a = psi[k]
        b = psi[j]
        psi[k] = c * a + msin * _pauli_phase(j, z, ny) * b
        psi[j] = c * b + msin * _pauli_phase(k, z, ny) * a


@numba.njit(cache=True)
def _run_rotations(psi, xs, zs, angles):
    for g in range(xs.shape[0]):
        _rotate(psi, xs[g], zs[g], angles[g])


@numba.njit(cache=True)
def _run_with_checkpoints(psi, xs, zs, angles, stride):
    """Evolve in place; row c of the result is the state after the first c * stride gates."""
    n_gates = xs.shape[0]
    out = np.empty((n_gates // stride + 1, psi.shape[0]), dtype=psi.dtype)
    out[0] = psi
    for g in range(n_gates):
        _rotate(psi, xs[g], zs[g], angles[g])
        if (g + 1) % stride == 0:
            out[(g + 1) // stride] = psi
    return out


@numba.njit(cache=True)
def _popcounts(values):
    out = np.empty(values.shape[0], dtype=np.int64)
    for i in range(values.shape[0]):
        v = values[i]
        c = 0
        while v:
            v &= v - 1
            c += 1
        out[i] = c
    return out


@numba.njit(cache=True)
def _pauli(psi, x, z):
    ny = 0
    v = x & z
    while v:
        v &= v - 1
        ny += 1
    out = np.empty_like(psi)
    for k in range(psi.shape[0]):
        out[k ^ x] = _pauli_phase(k, z, ny) * psi[k]
    psi[:] = out


@numba.njit(cache=True)
def _basis_change(psi, n_qubits, bases):
    # X: H, Y: H S^dagger, Z: nothing.  Maps the +1 eigenstate to |0>.
    r = 1.0 / math.sqrt(2.0)
    dim = psi.shape[0]
    for q in range(n_qubits):
        b = bases[q]
        if b == 2:
            continue
        bit = 1 << (n_qubits - 1 - q)
        for k in range(dim):
            if k & bit:
                continue
            a0 = psi[k]
            a1 = psi[k | bit]
            if b == 1:
                a1 = a1 * complex(0.0, -1.0)
            psi[k] = r * (a0 + a1)
            psi[k | bit] = r * (a0 - a1)


@numba.njit(cache=True)
def _sample_index(psi, u):
    total = 0.0
    for k in range(psi.shape[0]):
        total += psi[k].real * psi[k].real + psi[k].imag * psi[k].imag
    target = u * total
    acc = 0.0
    last = 0
    for k in range(psi.shape[0]):
        p = psi[k].real * psi[k].real + psi[k].imag * psi[k].imag
        if p > 0.0:
            last = k
        acc += p
        if acc > target:
            return k, total
    return last, total


@numba.njit(cache=True)
def _measure(psi, n_qubits, bases, u):
    work = psi.copy()
    _basis_change(work, n_qubits, bases)
    return _sample_index(work, u)


@numba.njit(cache=True)
def _depth(supports, n_qubits):
    frontier = np.zeros(n_qubits, dtype=np.int64)
    depth = 0
    for g in range(supports.shape[0]):
        m = supports[g]
        layer = 0
        for q in range(n_qubits):
            if (m >> q) & 1 and frontier[q] > layer:
                layer = frontier[q]
        layer += 1
        for q in range(n_qubits):
            if (m >> q) & 1:
                frontier[q] = layer
        if layer > depth:
            depth = layer
    return depth


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------


def product_state(label: str) -> StateVector:
    """Product state from letters in ``{0, 1, +, -}``, qubit 0 first."""
    single = {
        "0": np.array([1.0, 0.0], dtype=complex),
        "1": np.array([0.0, 1.0], dtype=complex),
        "+": np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0),
        "-": np.array([1.0, -1.0], dtype=complex) / math.sqrt(2.0),
    }
    if not label:
        raise ValueError("empty product-state label")
    amps = np.ones(1, dtype=complex)
    for ch in label:
        try:
            amps = np.kron(amps, single[ch])
        except KeyError:
            raise ValueError(f"invalid product-state letter {ch!r}") from None
    return StateVector(len(label), amps)


def apply_pauli_rotation(state: StateVector, axis: PauliString, angle: float) -> StateVector:
    """In-place exp(-i angle axis / 2)."""
    if axis.is_identity():
        raise ValueError("rotation axis must be a non-identity Pauli string")
    if axis.n_qubits != state.n_qubits:
        raise ValueError("axis width does not match the state")
    _rotate(state.amplitudes, axis.x, axis.z, float(angle))
    return state


def apply_circuit(state: StateVector, circuit: RotationCircuit | GateArrays) -> StateVector:
    arrays = circuit if isinstance(circuit, GateArrays) else circuit.arrays()
    if arrays.n_qubits != state.n_qubits:
        raise ValueError("circuit width does not match the state")
    if len(arrays):
        _run_rotations(state.amplitudes, arrays.x, arrays.z, arrays.angle)
    return state


def apply_pauli(state: StateVector, pauli: PauliString) -> StateVector:
    if pauli.n_qubits != state.n_qubits:
        raise ValueError("Pauli width does not match the state")
    if not pauli.is_identity():
        _pauli(state.amplitudes, pauli.x, pauli.z)
    return state


def random_pauli_on(n_qubits: int, support, rng: np.random.Generator) -> PauliString:
    """Uniform draw from the 4^k - 1 non-identity Paulis on ``support``."""
    k = len(support)
    code = int(rng.integers(1, 4**k))
    letters = {}
    for pos, q in enumerate(support):
        letters[q] = "IXYZ"[(code >> (2 * (k - 1 - pos))) & 3]
    return PauliString.from_sparse(n_qubits, letters)


def apply_depolarizing(state: StateVector, support, p: float, rng: np.random.Generator) -> StateVector:
    """One stochastic trajectory of the k-qubit depolarizing channel.

    With probability ``p`` a uniformly random non-identity Pauli on
    ``support`` is applied.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"error probability {p} outside [0, 1]")
    support = tuple(support)
    if not support:
        raise ValueError("empty support")
    if rng.random() < p:
        apply_pauli(state, random_pauli_on(state.n_qubits, support, rng))
    return state


def basis_codes(bases) -> np.ndarray:
    if isinstance(bases, str):
        return np.array([BASIS_CODES[b] for b in bases.upper()], dtype=np.int64)
    return np.asarray(bases, dtype=np.int64)


def measure_in_bases(state: StateVector, bases, rng: np.random.Generator) -> np.ndarray:
    """Terminal measurement with per-qubit basis change; returns bits (qubit 0 first)."""
    codes = basis_codes(bases)
    if codes.shape != (state.n_qubits,):
        raise ValueError("need one measurement basis per qubit")
    index, total = _measure(state.amplitudes, state.n_qubits, codes, rng.random())
    if abs(total - 1.0) > NORM_TOLERANCE:
        raise ConsistencyError(f"state norm drifted to {total!r} before measurement")
    return index_to_bits(index, state.n_qubits)


def index_to_bits(index: int, n_qubits: int) -> np.ndarray:
    return np.array([(index >> (n_qubits - 1 - q)) & 1 for q in range(n_qubits)], dtype=np.int8)


def expectation(state: StateVector, pauli: PauliString) -> float:
    work = state.copy()
    apply_pauli(work, pauli)
    return float(np.vdot(state.amplitudes, work.amplitudes).real)


def pauli_matrix_sparse(pauli: PauliString):
    """Column map of a Pauli string: P|k> = phases[k] |k xor x>."""
    dim = 2**pauli.n_qubits
    k = np.arange(dim, dtype=np.int64)
    parity = np.zeros(dim, dtype=np.int64)
    v = k & pauli.z
    while np.any(v):
        parity ^= v & 1
        v = v >> 1
    phases = (1.0 - 2.0 * parity) * (1j ** (pauli.n_y % 4))
    return k ^ pauli.x, phases


def hamiltonian_matrix(hamiltonian: Hamiltonian) -> np.ndarray:
    n = hamiltonian.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise CapacityError(f"dense diagonalization limited to {MAX_DENSE_QUBITS} qubits, got {n}")
    dim = 2**n
    real = all(p.n_y % 2 == 0 for _, p in hamiltonian.terms)
    mat = np.zeros((dim, dim), dtype=float if real else complex)
    cols = np.arange(dim)
    for c, p in hamiltonian.terms:
        rows, phases = pauli_matrix_sparse(p)
        mat[rows, cols] += c * (phases.real if real else phases)
    return mat


def eigendecompose(hamiltonian: Hamiltonian) -> EigenDecomposition:
    mat = hamiltonian_matrix(hamiltonian)
    vals, vecs = np.linalg.eigh(mat)
    return EigenDecomposition(vals, vecs.astype(complex))


def exact_expectation_series(
    hamiltonian: Hamiltonian | EigenDecomposition,
    initial: StateVector,
    observable: PauliString,
    times,
) -> np.ndarray:
    """<psi(t)| O |psi(t)> under exact evolution, evaluated in the eigenbasis."""
    eig = hamiltonian if isinstance(hamiltonian, EigenDecomposition) else eigendecompose(hamiltonian)
    vecs = eig.eigenvectors
    coeffs = vecs.conj().T @ initial.amplitudes
    rows, phases = pauli_matrix_sparse(observable)
    o_vecs = np.empty_like(vecs)
    o_vecs[rows, :] = phases[:, None] * vecs
    o_eig = vecs.conj().T @ o_vecs
    times = np.atleast_1d(np.asarray(times, dtype=float))
    phase = np.exp(-1j * np.outer(times, eig.eigenvalues)) * coeffs[None, :]
    return np.einsum("ta,ab,tb->t", phase.conj(), o_eig, phase).real


def support_masks(arrays: GateArrays) -> np.ndarray:
    """Per-gate qubit-support masks with bit q for qubit q."""
    n = arrays.n_qubits
    raw = arrays.x | arrays.z
    out = np.zeros_like(raw)
    for q in range(n):
        out |= ((raw >> (n - 1 - q)) & 1) << q
    return out


def circuit_depth(circuit: RotationCircuit | GateArrays) -> int:
    """Longest chain of gates sharing qubits (per-qubit frontier)."""
    arrays = circuit if isinstance(circuit, GateArrays) else circuit.arrays()
    if len(arrays) == 0:
        return 0
    return int(_depth(support_masks(arrays), arrays.n_qubits))
