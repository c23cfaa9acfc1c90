"""Fast oracle checks run by ``gapscope validate``.

Each check compares an implementation against an independent reference
(dense matrices, closed forms, or Monte Carlo against a proven bound) and
returns a :class:`CheckResult`.  The whole suite takes well under a minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..evolution import (
    TepaiSchedule,
    TimeGrid,
    pai_coefficients,
    tepai_asymptotics,
    trotter_circuit,
    trotter_error_bound,
)
from ..hamiltonian import Hamiltonian, PauliString, build_model
from ..shadows import estimate_observable, run_experiment, variance_bound
from ..spectroscopy import SpectroscopySettings, analyze
from ..statevector import apply_circuit, exact_expectation_series, expectation, product_state

__all__ = ["CheckResult", "run_checks", "CHECKS"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    ratio: float | None = None

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _superop(u):
    return np.kron(u.conj(), u)


def _rot(p, theta):
    return math.cos(theta / 2) * np.eye(len(p)) - 1j * math.sin(theta / 2) * p


def check_decomposition(coefficients=pai_coefficients, n_pairs=200, seed=0) -> CheckResult:
    """Weighted branch channels reproduce the rotation channel."""
    rng = np.random.default_rng(seed)
    p = PauliString.from_label("X").to_matrix()
    worst = worst_sum = 0.0
    for _ in range(n_pairs):
        delta = rng.uniform(1e-3, math.pi - 1e-3)
        theta = rng.uniform(-delta, delta)
        c = coefficients(theta, delta)
        mix = c.a1 * np.eye(4) + c.a2 * _superop(_rot(p, c.phi)) + c.a3 * _superop(_rot(p, math.pi))
        worst = max(worst, float(np.max(np.abs(mix - _superop(_rot(p, theta))))))
        worst_sum = max(worst_sum, abs(c.a1 + c.a2 + c.a3 - 1))
    ok = worst < 1e-12 and worst_sum < 1e-12
    return CheckResult("decomposition-identity", ok, f"max channel error {worst:.2e}, max |sum a - 1| {worst_sum:.2e}")


TOY = Hamiltonian.from_terms(2, [(1.0, "XX"), (1.0, "ZI")])


def _toy_target(t=0.7, k=4):
    return expectation(apply_circuit(product_state("00"), trotter_circuit(TOY, t, k)), PauliString.from_label("ZI"))


def check_unbiased(n_total=20000, seed=1) -> CheckResult:
    target = _toy_target()
    z0 = PauliString.from_label("ZI")
    grid = TimeGrid(0.7, 1, 4)
    worst = 0.0
    for m, n_s in ((n_total, 1), (n_total // 2, 2), (n_total // 4, 4)):
        snaps = run_experiment(TOY, product_state("00"), grid, "tepai", math.pi / 4, m, n_s, seed=seed, workers=1)
        per = (snaps.gamma * np.where(snaps.bases[:, 0] == 2, 3.0 * (1 - 2.0 * snaps.bits[:, 0]), 0.0)).reshape(m, n_s)
        se = per.mean(axis=1).std() / math.sqrt(m)
        worst = max(worst, abs(estimate_observable(snaps, z0) - target) / se)
    return CheckResult("unbiasedness", worst < 5, f"max deviation {worst:.2f} standard errors (limit 5)")


def check_variance(reps=200, n_total=100, seed=2) -> CheckResult:
    target_gamma = TepaiSchedule(TOY, 0.7, 4, math.pi / 4).gamma
    z0 = PauliString.from_label("ZI")
    grid = TimeGrid(0.7, 1, 4)
    ratios = []
    for m, n_s in ((n_total, 1), (n_total // 2, 2), (n_total // 4, 4)):
        est = [
            estimate_observable(
                run_experiment(TOY, product_state("00"), grid, "tepai", math.pi / 4, m, n_s, seed=seed * 100003 + r, workers=1),
                z0,
            )
            for r in range(reps)
        ]
        ratios.append(float(np.var(est, ddof=1)) / variance_bound(target_gamma**2, 1, m, n_s))
    worst = max(ratios)
    return CheckResult(
        "variance-bound", worst <= 1.0, "measured/bound ratios " + ", ".join(f"{r:.3f}" for r in ratios), worst
    )


def check_gate_count(samples=10000, seed=3) -> CheckResult:
    h = Hamiltonian.from_terms(1, [(1.0, "Z")])
    delta = math.pi / 4
    sched = TepaiSchedule(h, 1.0, 1000, delta)
    rng = np.random.default_rng(seed)
    counts = np.array([sched.sample(rng).gate_count for _ in range(samples)])
    expected = tepai_asymptotics(h, 1.0, delta).expected_gates
    z = abs(counts.mean() - expected) / (counts.std(ddof=1) / math.sqrt(samples))
    return CheckResult("gate-count", z < 5, f"mean {counts.mean():.4f} vs {expected:.4f} ({z:.2f} sigma)")


def check_gamma_limit() -> CheckResult:
    h = Hamiltonian.from_terms(1, [(1.0, "Z")])
    asym = tepai_asymptotics(h, 1.0, math.pi / 4)
    g = asym.gamma_exact(1000)
    rel = abs(g - asym.gamma) / asym.gamma
    return CheckResult(
        "gamma-limit",
        rel < 0.02,
        f"finite-K gamma {g:.5f} vs exp(2 t |H|_1 tan(delta/2)) = {asym.gamma:.5f} (rel {rel:.2e}); "
        f"gamma^2 {g * g:.5f} vs its limit {asym.gamma_sq:.5f}",
    )


def check_trotter_bound() -> CheckResult:
    h = build_model("heisenberg", 3)
    psi = product_state("010")
    z0 = PauliString.from_label("ZII")
    worst = 0.0
    for t in (0.5, 1.0, 2.0):
        exact = exact_expectation_series(h, psi, z0, [t])[0]
        for k in (4, 16, 64):
            approx = expectation(apply_circuit(psi.copy(), trotter_circuit(h, t, k)), z0)
            worst = max(worst, abs(exact - approx) / trotter_error_bound(h, 1.0, t, k))
    return CheckResult("trotter-bound", worst <= 1.0, f"max error/bound {worst:.3f}", worst)


def check_synthetic_spectrum(seed=4) -> CheckResult:
    dt, n_t, omega0 = 0.05, 80, 23.0
    rng = np.random.default_rng(seed)
    t = np.arange(1, n_t + 1) * dt
    raw = np.vstack(
        [np.cos(omega0 * t + ph) for ph in rng.uniform(0, 6, 6)] + [rng.normal(size=n_t) for _ in range(30)]
    )
    _, spec = analyze(raw, dt, SpectroscopySettings(keep_fraction=0.2))
    err = abs(spec.peaks[0].omega - omega0) if spec.peaks else math.inf
    half_bin = math.pi / (n_t * dt)
    return CheckResult("synthetic-spectrum", err < half_bin, f"peak error {err:.3f} (half bin {half_bin:.3f})")


CHECKS = {
    "decomposition-identity": check_decomposition,
    "unbiasedness": check_unbiased,
    "variance-bound": check_variance,
    "gate-count": check_gate_count,
    "gamma-limit": check_gamma_limit,
    "trotter-bound": check_trotter_bound,
    "synthetic-spectrum": check_synthetic_spectrum,
}


def run_checks(names=None) -> list[CheckResult]:
    return [CHECKS[n]() for n in (names or CHECKS)]
