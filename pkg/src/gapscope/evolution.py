"""Trotter circuits and TE-PAI sampling of them.

Every Trotter rotation exp(-i theta P / 2) is replaced by one of
{identity, rotation by sign(theta) * delta, rotation by pi}, drawn with
probabilities |a_l| / gamma.  The signed product of the per-gate
normalizations is carried along as the circuit weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .hamiltonian import Hamiltonian, commutator_norm, l1_norm
from .statevector import GateArrays, RotationCircuit, circuit_depth

__all__ = [
    "DomainError",
    "PaiCoefficients",
    "SampledCircuit",
    "TimeGrid",
    "TepaiSchedule",
    "TepaiAsymptotics",
    "trotter_circuit",
    "trotter_arrays",
    "trotter_error_bound",
    "pai_coefficients",
    "sample_tepai_circuit",
    "tepai_asymptotics",
    "delta_for_overhead",
]

_ANGLE_SLACK = 1e-12


class DomainError(ValueError):
    """Parameters outside the domain where the decomposition exists."""


@dataclass(frozen=True)
class PaiCoefficients:
    a1: float
    a2: float
    a3: float
    delta: float
    phi: float

    @property
    def gamma(self) -> float:
        return abs(self.a1) + abs(self.a2) + abs(self.a3)

    @property
    def probabilities(self) -> np.ndarray:
        a = np.abs([self.a1, self.a2, self.a3])
        return a / a.sum()

    @property
    def signs(self) -> np.ndarray:
        return np.sign([self.a1, self.a2, self.a3])

    @property
    def angles(self) -> tuple[float | None, float, float]:
        """Rotation angle of each branch; ``None`` marks the identity branch."""
        return (None, self.phi, math.pi)


def pai_coefficients(theta: float, delta: float) -> PaiCoefficients:
    """Quasiprobability coefficients of R(theta) over {I, R(+-delta), R(pi)}.

    Negative angles reuse the coefficients of |theta| with the middle
    branch rotating by -delta.
    """
    if not 0.0 < delta < math.pi:
        raise DomainError(f"delta={delta} must lie in (0, pi)")
    mag = abs(theta)
    if mag > delta * (1.0 + _ANGLE_SLACK):
        raise DomainError(f"|theta|={mag} exceeds delta={delta}")
    mag = min(mag, delta)
    half_gap = 0.5 * (delta - mag)
    a1 = math.cos(0.5 * mag) * math.sin(half_gap) / math.sin(0.5 * delta)
    a2 = math.sin(mag) / math.sin(delta)
    a3 = -math.sin(0.5 * mag) * math.sin(half_gap) / math.cos(0.5 * delta)
    phi = -delta if theta < 0 else delta
    return PaiCoefficients(a1, a2, a3, delta, phi)


def trotter_circuit(hamiltonian: Hamiltonian, t: float, k_steps: int) -> RotationCircuit:
    """First-order product formula: K repetitions of R(P_j, 2 h_j t / K).

    Identity terms are dropped; they only contribute a global phase.
    """
    if k_steps < 1:
        raise DomainError(f"need at least one Trotter step, got {k_steps}")
    step = t / k_steps
    layer = [(p, 2.0 * c * step) for c, p in hamiltonian.terms if not p.is_identity()]
    return RotationCircuit(hamiltonian.n_qubits, tuple(layer * k_steps))


def trotter_arrays(hamiltonian: Hamiltonian, t: float, k_steps: int) -> GateArrays:
    """Array form of :func:`trotter_circuit` without building gate tuples."""
    if k_steps < 1:
        raise DomainError(f"need at least one Trotter step, got {k_steps}")
    step = t / k_steps
    terms = [(c, p) for c, p in hamiltonian.terms if not p.is_identity()]
    x = np.tile(np.array([p.x for _, p in terms], dtype=np.int64), k_steps)
    z = np.tile(np.array([p.z for _, p in terms], dtype=np.int64), k_steps)
    angle = np.tile(np.array([2.0 * c * step for c, _ in terms]), k_steps)
    return GateArrays(hamiltonian.n_qubits, x, z, angle)


def trotter_error_bound(hamiltonian: Hamiltonian, observable_norm: float, t: float, k_steps: int) -> float:
    """Worst-case |exact - Trotter| expectation error: t^2 ||O|| ||c||_T / K."""
    if k_steps < 1:
        raise DomainError(f"need at least one Trotter step, got {k_steps}")
    return t * t * observable_norm * commutator_norm(hamiltonian) / k_steps


@dataclass(frozen=True)
class TimeGrid:
    """Time points t_s = s t_total / n_t with nested, constant-size steps.

    ``k_s`` is the rounded step count for each point so the step length
    stays at ``t_total / k_steps_total`` up to rounding.
    """

    t_total: float
    n_t: int
    k_steps_total: int

    def __post_init__(self):
        if self.n_t < 1 or self.k_steps_total < 1:
            raise DomainError("n_t and k_steps_total must be positive")
        if self.t_total <= 0:
            raise DomainError("t_total must be positive")

    @classmethod
    def from_dt(cls, dt: float, n_t: int, k_steps_total: int) -> "TimeGrid":
        return cls(dt * n_t, n_t, k_steps_total)

    @property
    def dt(self) -> float:
        return self.t_total / self.n_t

    @property
    def step(self) -> float:
        return self.t_total / self.k_steps_total

    @cached_property
    def times(self) -> np.ndarray:
        return np.arange(1, self.n_t + 1) * self.dt

    @cached_property
    def steps(self) -> np.ndarray:
        raw = np.rint(np.arange(1, self.n_t + 1) * self.k_steps_total / self.n_t).astype(np.int64)
        return np.maximum(raw, 1)

    def __iter__(self):
        return iter(zip(self.times.tolist(), self.steps.tolist()))


@dataclass
class SampledCircuit:
    gates: GateArrays
    gamma_signed: float
    gamma: float

    @property
    def gate_count(self) -> int:
        return len(self.gates)

    @property
    def circuit(self) -> RotationCircuit:
        from .hamiltonian import PauliString

        n = self.gates.n_qubits
        return RotationCircuit(
            n,
            tuple(
                (PauliString(n, int(x), int(z)), float(a))
                for x, z, a in zip(self.gates.x, self.gates.z, self.gates.angle)
            ),
        )

    @property
    def depth(self) -> int:
        return circuit_depth(self.gates)

    def to_json_obj(self) -> dict:
        from .hamiltonian import PauliString

        n = self.gates.n_qubits
        return {
            "gamma": self.gamma_signed,
            "gates": [
                {"pauli": PauliString(n, int(x), int(z)).label, "angle": float(a)}
                for x, z, a in zip(self.gates.x, self.gates.z, self.gates.angle)
            ],
        }


class TepaiSchedule:
    """Precomputed branch tables for the Trotter schedule (H, t, K).

    Sampling repeatedly from the same schedule only draws random numbers;
    the coefficients are evaluated once per Hamiltonian term.
    """

    def __init__(self, hamiltonian: Hamiltonian, t: float, k_steps: int, delta: float):
        if k_steps < 1:
            raise DomainError(f"need at least one Trotter step, got {k_steps}")
        terms = [(c, p) for c, p in hamiltonian.terms if not p.is_identity()]
        self.n_qubits = hamiltonian.n_qubits
        self.k_steps = int(k_steps)
        self.delta = float(delta)
        self.thetas = np.array([2.0 * c * t / k_steps for c, _ in terms])
        max_theta = float(np.max(np.abs(self.thetas))) if len(terms) else 0.0
        if max_theta > delta * (1.0 + _ANGLE_SLACK):
            raise DomainError(
                f"delta={delta:.6g} is smaller than the largest rotation angle {max_theta:.6g}; "
                "increase delta or the number of Trotter steps"
            )
        self.coefficients = [pai_coefficients(th, delta) for th in self.thetas]
        probs = np.array([c.probabilities for c in self.coefficients]).reshape(len(terms), 3)
        self.cum1 = probs[:, 0].copy()
        self.cum2 = probs[:, 0] + probs[:, 1]
        self.negative = np.array([c.signs < 0 for c in self.coefficients]).reshape(len(terms), 3)
        self.x = np.array([p.x for _, p in terms], dtype=np.int64)
        self.z = np.array([p.z for _, p in terms], dtype=np.int64)
        self.phi = np.array([c.phi for c in self.coefficients])
        self.log_gamma = self.k_steps * float(np.sum(np.log([c.gamma for c in self.coefficients])))

    @property
    def gamma(self) -> float:
        return math.exp(self.log_gamma)

    @property
    def n_terms(self) -> int:
        return len(self.thetas)

    def expected_gate_count(self) -> float:
        return self.k_steps * float(np.sum(1.0 - self.cum1))

    def sample(self, rng: np.random.Generator) -> SampledCircuit:
        u = rng.random((self.k_steps, self.n_terms))
        branch = (u >= self.cum1).astype(np.int64) + (u >= self.cum2)
        n_negative = int(np.count_nonzero(self.negative[np.arange(self.n_terms), branch]))
        kept_k, kept_j = np.nonzero(branch)
        kept_branch = branch[kept_k, kept_j]
        angle = np.where(kept_branch == 1, self.phi[kept_j], math.pi)
        gates = GateArrays(self.n_qubits, self.x[kept_j], self.z[kept_j], angle)
        gamma = self.gamma
        return SampledCircuit(gates, -gamma if n_negative % 2 else gamma, gamma)


def sample_tepai_circuit(
    hamiltonian: Hamiltonian, t: float, k_steps: int, delta: float, rng: np.random.Generator
) -> SampledCircuit:
    return TepaiSchedule(hamiltonian, t, k_steps, delta).sample(rng)


def enumerate_branches(hamiltonian: Hamiltonian, t: float, k_steps: int, delta: float):
    """Yield every (weight, circuit) pair of the TE-PAI distribution.

    ``weight`` is the signed quasiprobability product, so the weighted sum
    of branch channels is the Trotter channel.  Exponential in J*K; meant
    for small oracles.
    """
    import itertools

    sched = TepaiSchedule(hamiltonian, t, k_steps, delta)
    coeffs = [sched.coefficients[j] for _ in range(k_steps) for j in range(sched.n_terms)]
    xs = np.tile(sched.x, k_steps)
    zs = np.tile(sched.z, k_steps)
    for choice in itertools.product(range(3), repeat=len(coeffs)):
        weight = 1.0
        keep, angles = [], []
        for g, (d, c) in enumerate(zip(choice, coeffs)):
            weight *= (c.a1, c.a2, c.a3)[d]
            if d:
                keep.append(g)
                angles.append(c.phi if d == 1 else math.pi)
        if weight == 0.0:
            continue
        keep = np.array(keep, dtype=np.int64)
        yield weight, GateArrays(hamiltonian.n_qubits, xs[keep], zs[keep], np.array(angles, dtype=float))


@dataclass(frozen=True)
class TepaiAsymptotics:
    """Large-K gate count and weight of TE-PAI for (H, t, delta).

    ``gamma`` is the K -> infinity limit of the circuit weight
    prod_j gamma(theta_j)^K, i.e. exp(2 t ||H||_1 tan(delta/2));
    ``gamma_sq`` is its square, the variance multiplier.
    """

    expected_gates: float
    gamma: float
    gamma_sq: float
    hamiltonian: Hamiltonian
    t: float
    delta: float

    def gamma_exact(self, k_steps: int) -> float:
        """Finite-K weight (prod_j gamma(2 h_j t / K))^K."""
        return TepaiSchedule(self.hamiltonian, self.t, k_steps, self.delta).gamma

    def gamma_sq_exact(self, k_steps: int) -> float:
        return self.gamma_exact(k_steps) ** 2

    def expected_gates_exact(self, k_steps: int) -> float:
        return TepaiSchedule(self.hamiltonian, self.t, k_steps, self.delta).expected_gate_count()


def tepai_asymptotics(hamiltonian: Hamiltonian, t: float, delta: float) -> TepaiAsymptotics:
    if not 0.0 < delta < math.pi:
        raise DomainError(f"delta={delta} must lie in (0, pi)")
    norm_t = l1_norm(hamiltonian) * t
    gates = (3.0 - math.cos(delta)) / math.sin(delta) * norm_t
    log_gamma = 2.0 * norm_t * math.tan(0.5 * delta)
    return TepaiAsymptotics(
        gates, math.exp(log_gamma), math.exp(2.0 * log_gamma), hamiltonian, t, delta
    )


def delta_for_overhead(q: float, hamiltonian: Hamiltonian, t: float) -> float:
    """Delta = 2 arctan(Q / (2 ||H||_1 t)), which fixes the large-K weight at exp(Q)."""
    norm_t = l1_norm(hamiltonian) * t
    if q <= 0 or norm_t <= 0:
        raise DomainError("Q, t and ||H||_1 must be positive")
    return 2.0 * math.atan(q / (2.0 * norm_t))
