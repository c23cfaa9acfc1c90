"""Pauli-basis classical shadows of (TE-PAI or Trotter) evolved states.

A snapshot is stored as ``(gamma, bases, bits)`` only.  The estimator of a
Pauli string O from one snapshot is ``prod_q 3 (-1)^bit_q`` over the support
of O when every measured basis matches the letter of O, and zero otherwise;
TE-PAI snapshots are additionally multiplied by the signed circuit weight.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .evolution import TepaiSchedule, TimeGrid, trotter_arrays
from .hamiltonian import Hamiltonian, PauliString
from .statevector import (
    BASIS_CODES,
    BASIS_LETTERS,
    NORM_TOLERANCE,
    ConsistencyError,
    GateArrays,
    StateVector,
    _measure,
    _run_rotations,
    _run_with_checkpoints,
    circuit_depth,
    index_to_bits,
    measure_in_bases,
)

__all__ = [
    "NoiseModel",
    "SnapshotRecord",
    "SnapshotSet",
    "collect_snapshot",
    "snapshot_estimate",
    "estimate_observable",
    "variance_bound",
    "fixed_budget_variance_bound",
    "run_experiment",
    "task_rng",
]

_LETTER_CODE = {"X": 0, "Y": 1, "Z": 2}


@dataclass(frozen=True)
class NoiseModel:
    """Stochastic depolarizing noise after every gate.

    ``p1`` applies after single-qubit gates (including the measurement
    basis changes when ``include_measurement_layer``), ``p2`` after gates
    acting on two or more qubits.
    """

    enabled: bool = False
    p1: float = 1e-4
    p2: float = 1e-3
    include_measurement_layer: bool = True

    def __post_init__(self):
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"noise.{name}={p} outside [0, 1]")

    @property
    def active(self) -> bool:
        return self.enabled and (self.p1 > 0 or self.p2 > 0)


@dataclass(frozen=True)
class SnapshotRecord:
    s: int
    gamma: float
    bases: str
    bits: str

    def __post_init__(self):
        if len(self.bases) != len(self.bits):
            raise ValueError("bases and bits must have equal length")
        if self.gamma == 0:
            raise ValueError("snapshot weight must be nonzero")

    @property
    def n_qubits(self) -> int:
        return len(self.bases)

    def to_json(self) -> str:
        return json.dumps({"s": self.s, "gamma": self.gamma, "bases": self.bases, "bits": self.bits})


@dataclass
class SnapshotSet:
    """Columnar snapshot storage; rows ordered by (s, m, shot).

    ``s`` is the 1-based time index.  ``bases`` holds codes 0/1/2 for
    X/Y/Z.  ``metadata`` carries the run parameters written as the first
    line of the JSON Lines file.
    """

    n_qubits: int
    s: np.ndarray
    gamma: np.ndarray
    bases: np.ndarray
    bits: np.ndarray
    metadata: dict = field(default_factory=dict)
    circuit_stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.int64)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.bases = np.asarray(self.bases, dtype=np.int8).reshape(-1, self.n_qubits)
        self.bits = np.asarray(self.bits, dtype=np.int8).reshape(-1, self.n_qubits)
        n = len(self.s)
        if not (len(self.gamma) == len(self.bases) == len(self.bits) == n):
            raise ValueError("snapshot columns have inconsistent lengths")

    def __len__(self) -> int:
        return len(self.s)

    @classmethod
    def from_records(cls, records, metadata: dict | None = None) -> "SnapshotSet":
        records = list(records)
        if not records:
            raise ValueError("no snapshot records")
        n = records[0].n_qubits
        return cls(
            n,
            [r.s for r in records],
            [r.gamma for r in records],
            [[_LETTER_CODE[b] for b in r.bases] for r in records],
            [[int(b) for b in r.bits] for r in records],
            dict(metadata or {}),
        )

    @property
    def time_indices(self) -> np.ndarray:
        return np.unique(self.s)

    def at_time(self, s: int) -> "SnapshotSet":
        mask = self.s == s
        return SnapshotSet(self.n_qubits, self.s[mask], self.gamma[mask], self.bases[mask],
                           self.bits[mask], dict(self.metadata))

    def select(self, index) -> "SnapshotSet":
        return SnapshotSet(self.n_qubits, self.s[index], self.gamma[index], self.bases[index],
                           self.bits[index], dict(self.metadata))

    def record(self, i: int) -> SnapshotRecord:
        return SnapshotRecord(
            int(self.s[i]),
            float(self.gamma[i]),
            "".join(BASIS_LETTERS[b] for b in self.bases[i]),
            "".join(str(int(b)) for b in self.bits[i]),
        )

    def records(self) -> Iterator[SnapshotRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def write_jsonl(self, path) -> None:
        letters = np.frombuffer(BASIS_LETTERS.encode(), dtype="S1")
        digits = np.array([b"0", b"1"], dtype="S1")
        base_rows = letters[self.bases].view(f"S{self.n_qubits}").ravel()
        bit_rows = digits[self.bits].view(f"S{self.n_qubits}").ravel()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.metadata, sort_keys=True) + "\n")
            for s, g, b, o in zip(self.s.tolist(), self.gamma.tolist(), base_rows, bit_rows):
                fh.write(
                    '{"s": %d, "gamma": %s, "bases": "%s", "bits": "%s"}\n'
                    % (s, json.dumps(g), b.decode(), o.decode())
                )

    @classmethod
    def read_jsonl(cls, path) -> "SnapshotSet":
        with open(path, encoding="utf-8") as fh:
            metadata = json.loads(fh.readline())
            s, gamma, bases, bits = [], [], [], []
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                s.append(rec["s"])
                gamma.append(rec["gamma"])
                bases.append(rec["bases"])
                bits.append(rec["bits"])
        if not s:
            raise ValueError(f"{path}: no snapshot records")
        n = len(bases[0])
        table = np.full(256, -1, dtype=np.int8)
        for ch, code in _LETTER_CODE.items():
            table[ord(ch)] = code
        base_arr = table[np.frombuffer("".join(bases).encode(), dtype=np.uint8)].reshape(-1, n)
        if (base_arr < 0).any():
            raise ValueError(f"{path}: invalid basis letter")
        bit_arr = (np.frombuffer("".join(bits).encode(), dtype=np.uint8) - ord("0")).astype(np.int8)
        return cls(n, s, gamma, base_arr, bit_arr.reshape(-1, n), metadata)


def collect_snapshot(state: StateVector, rng: np.random.Generator, bases=None):
    """Draw uniform X/Y/Z bases (unless given) and measure. Returns (bases, bits) strings."""
    if bases is None:
        codes = rng.integers(0, 3, size=state.n_qubits)
    else:
        codes = np.array([BASIS_CODES[b] for b in bases], dtype=np.int64)
    bits = measure_in_bases(state, codes, rng)
    return "".join(BASIS_LETTERS[c] for c in codes), "".join(str(int(b)) for b in bits)


def snapshot_estimate(record: SnapshotRecord, observable: PauliString) -> float:
    """Unweighted single-snapshot estimate of Tr(O rho); in {0, +-3^w}."""
    if observable.n_qubits != record.n_qubits:
        raise ValueError(
            f"width mismatch: observable has {observable.n_qubits} qubits, record has {record.n_qubits}"
        )
    value = 1.0
    for q in observable.support:
        if record.bases[q] != observable.letter(q):
            return 0.0
        value *= -3.0 if record.bits[q] == "1" else 3.0
    return value


def estimate_observable(snapshots: SnapshotSet, observable: PauliString) -> float:
    """Mean of gamma times the snapshot estimate over all records given."""
    if len(snapshots) == 0:
        raise ValueError("cannot estimate from an empty snapshot set")
    if observable.n_qubits != snapshots.n_qubits:
        raise ValueError("width mismatch between observable and snapshots")
    support = list(observable.support)
    if not support:
        return float(np.mean(snapshots.gamma))
    letters = np.array([_LETTER_CODE[observable.letter(q)] for q in support])
    match = np.all(snapshots.bases[:, support] == letters, axis=1)
    parity = snapshots.bits[:, support].sum(axis=1) & 1
    values = np.where(match, (1.0 - 2.0 * parity) * 3.0 ** len(support), 0.0)
    return float(np.mean(snapshots.gamma * values))


def variance_bound(gamma_sq: float, q: int, m: int, n_s: int) -> float:
    """Upper bound Gamma^2 ((3^q - 1) / (M N_s) + 1 / M) on the estimator variance."""
    if gamma_sq <= 0 or q < 0 or m <= 0 or n_s <= 0:
        raise ValueError("variance_bound arguments must be positive")
    return gamma_sq * ((3.0**q - 1.0) / (m * n_s) + 1.0 / m)


def fixed_budget_variance_bound(gamma_sq: float, q: int, n_total: int, n_s: int) -> float:
    """Same bound written for a fixed budget N_total = M N_s."""
    return gamma_sq * (3.0**q - 1.0 + n_s) / n_total


# --------------------------------------------------------------------------
# experiment driver
# --------------------------------------------------------------------------


def task_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-derived stream; independent of scheduling order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


_CIRCUIT_STREAM = 0


def _with_noise(gates: GateArrays, p1: float, p2: float, rng: np.random.Generator):
    """Insert random Paulis (as pi rotations) after gates hit by an error.

    Returns ``(trajectory, first_hit)``; ``first_hit`` is -1 when no error
    occurred, in which case ``trajectory`` is ``gates`` itself.
    """
    n = len(gates)
    if n == 0:
        return gates, -1
    probs = np.where(gates.weight <= 1, p1, p2)
    hits = np.flatnonzero(rng.random(n) < probs)
    if hits.size == 0:
        return gates, -1
    nq = gates.n_qubits
    ex, ez = [], []
    for g in hits:
        support = gates.x[g] | gates.z[g]
        bits = [b for b in range(nq) if (support >> b) & 1]
        code = int(rng.integers(1, 4 ** len(bits)))
        x = z = 0
        for pos, b in enumerate(bits):
            letter = (code >> (2 * pos)) & 3  # 1 = X, 2 = Y, 3 = Z
            if letter in (1, 2):
                x |= 1 << b
            if letter in (2, 3):
                z |= 1 << b
        ex.append(x)
        ez.append(z)
    at = hits + 1
    traj = GateArrays(
        nq,
        np.insert(gates.x, at, ex),
        np.insert(gates.z, at, ez),
        np.insert(gates.angle, at, np.pi),
    )
    return traj, int(hits[0])


# Clean-evolution checkpoints are stored every this many gates.
_CHECKPOINT_STRIDE = 32


class _CleanEvolution:
    """Noise-free evolution of one circuit, shared by all its noisy shots.

    A trajectory whose first error follows gate ``g`` agrees with the clean
    circuit up to ``g``, so it resumes from the last checkpoint before it.
    """

    def __init__(self, psi0: np.ndarray, gates: GateArrays):
        self.final = psi0.copy()
        self.checkpoints = _run_with_checkpoints(self.final, gates.x, gates.z, gates.angle, _CHECKPOINT_STRIDE)

    def trajectory(self, traj: GateArrays, first_hit: int) -> np.ndarray:
        if first_hit < 0:
            return self.final
        c = first_hit // _CHECKPOINT_STRIDE
        psi = self.checkpoints[c].copy()
        start = c * _CHECKPOINT_STRIDE
        _run_rotations(psi, traj.x[start:], traj.z[start:], traj.angle[start:])
        return psi


def _measure_shot(psi, n_qubits, rng, noise: NoiseModel | None):
    bases = rng.integers(0, 3, size=n_qubits)
    index, total = _measure(psi, n_qubits, bases, rng.random())
    if abs(total - 1.0) > NORM_TOLERANCE:
        raise ConsistencyError(f"state norm drifted to {total!r} before measurement")
    bits = index_to_bits(index, n_qubits)
    if noise is not None and noise.include_measurement_layer and noise.p1 > 0:
        # A Pauli after the basis change flips the outcome for X or Y, not Z.
        changed = bases != 2
        err = changed & (rng.random(n_qubits) < noise.p1)
        if err.any():
            which = rng.integers(0, 3, size=n_qubits)
            bits = bits ^ (err & (which < 2)).astype(np.int8)
    return bases, bits


def _time_point_task(args):
    (hamiltonian, psi0, t, k_steps, s, method, delta, m_count, n_s, noise, seed) = args
    n = hamiltonian.n_qubits
    rows = m_count * n_s
    gammas = np.empty(rows)
    bases = np.empty((rows, n), dtype=np.int8)
    bits = np.empty((rows, n), dtype=np.int8)
    depths = np.empty(m_count, dtype=np.int64)
    counts = np.empty(m_count, dtype=np.int64)
    noisy = noise is not None and noise.active

    if method == "trotter":
        fixed = trotter_arrays(hamiltonian, t, k_steps)
        fixed_depth = circuit_depth(fixed)
        if noisy:
            fixed_clean = _CleanEvolution(psi0, fixed)
            evolved = fixed_clean.final
        else:
            evolved = psi0.copy()
            _run_rotations(evolved, fixed.x, fixed.z, fixed.angle)
        schedule = None
    else:
        schedule = TepaiSchedule(hamiltonian, t, k_steps, delta)

    row = 0
    for m in range(m_count):
        if schedule is None:
            gates, gamma, psi = fixed, 1.0, evolved
            depths[m] = fixed_depth
        else:
            sample = schedule.sample(task_rng(seed, s, m, _CIRCUIT_STREAM))
            gates, gamma = sample.gates, sample.gamma_signed
            depths[m] = circuit_depth(gates)
            psi = None
        counts[m] = len(gates)
        if noisy:
            # Reused circuits share one clean evolution; a single-shot circuit is simulated directly.
            if schedule is None:
                clean = fixed_clean
            elif n_s > 1:
                clean = _CleanEvolution(psi0, gates)
            else:
                clean = None
        elif psi is None:
            psi = psi0.copy()
            if len(gates):
                _run_rotations(psi, gates.x, gates.z, gates.angle)
        for shot in range(n_s):
            rng = task_rng(seed, s, m, shot + 1)
            if noisy:
                traj, first = _with_noise(gates, noise.p1, noise.p2, rng)
                if clean is not None:
                    work = clean.trajectory(traj, first)
                else:
                    work = psi0.copy()
                    if len(traj):
                        _run_rotations(work, traj.x, traj.z, traj.angle)
                b, o = _measure_shot(work, n, rng, noise)
            else:
                b, o = _measure_shot(psi, n, rng, None)
            gammas[row] = gamma
            bases[row] = b
            bits[row] = o
            row += 1
    return s, gammas, bases, bits, depths, counts


def _worker_count(requested: int | None) -> int:
    cap = os.environ.get("GAPSCOPE_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def run_experiment(
    hamiltonian: Hamiltonian,
    initial: StateVector,
    grid: TimeGrid,
    method: str = "tepai",
    delta: float | None = None,
    m: int = 1,
    n_s: int = 1,
    noise: NoiseModel | None = None,
    seed: int = 0,
    workers: int | None = None,
    metadata: dict | None = None,
) -> SnapshotSet:
    """Collect M * N_s snapshots at each time point of ``grid``.

    For ``tepai`` each of the M circuits is sampled afresh and measured
    N_s times; for ``trotter`` one deterministic circuit per time point is
    measured M * N_s times with unit weight.  Every (s, m, shot) draws from
    its own counter-derived stream, so the output does not depend on the
    number of workers.
    """
    if method not in ("tepai", "trotter"):
        raise ValueError(f"unknown method {method!r}")
    if m < 1 or n_s < 1:
        raise ValueError("m and n_s must be positive")
    if initial.n_qubits != hamiltonian.n_qubits:
        raise ValueError("initial state width does not match the Hamiltonian")
    if method == "tepai":
        if delta is None:
            raise ValueError("tepai needs delta")
        # Validate the whole grid before spending time on simulation.
        for t, k in grid:
            TepaiSchedule(hamiltonian, t, k, delta)
    psi0 = np.ascontiguousarray(initial.amplitudes, dtype=np.complex128)
    tasks = [
        (hamiltonian, psi0, t, k, s, method, delta, m, n_s, noise, seed)
        for s, (t, k) in enumerate(grid, start=1)
    ]
    n_workers = min(_worker_count(workers), len(tasks))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_time_point_task, tasks))
    else:
        results = [_time_point_task(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    rows = m * n_s
    s_col = np.repeat([r[0] for r in results], rows)
    meta = {
        "n_qubits": hamiltonian.n_qubits,
        "n_t": grid.n_t,
        "m": m,
        "n_s": n_s,
        "dt": grid.dt,
        "method": method,
        "delta_over_pi": (delta / math.pi) if (method == "tepai" and delta) else None,
        "seed": seed,
        "config_sha": None,
    }
    if metadata:
        meta.update(metadata)
    out = SnapshotSet(
        hamiltonian.n_qubits,
        s_col,
        np.concatenate([r[1] for r in results]),
        np.concatenate([r[2] for r in results]),
        np.concatenate([r[3] for r in results]),
        meta,
    )
    out.circuit_stats = {
        "depth": np.array([r[4] for r in results]),
        "gate_count": np.array([r[5] for r in results]),
        "gamma": np.array([np.abs(r[1][::n_s]) for r in results]),
    }
    return out
