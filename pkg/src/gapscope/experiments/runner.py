"""Orchestration: config -> snapshots -> spectrum -> artifacts on disk."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..evolution import TepaiSchedule, TimeGrid, trotter_arrays
from ..hamiltonian import Hamiltonian, build_model, enumerate_observables, tfim_gap
from ..shadows import NoiseModel, SnapshotSet, run_experiment, task_rng
from ..spectroscopy import (
    DataMatrix,
    Spectrum,
    SpectroscopySettings,
    analyze,
    build_time_series,
    write_peaks_json,
)
from ..statevector import MAX_DENSE_QUBITS, CapacityError, StateVector, circuit_depth, eigendecompose, product_state
from .config import ExperimentConfig

__all__ = [
    "RunResult",
    "build_hamiltonian",
    "build_initial_state",
    "time_grid",
    "reference_gap",
    "collect",
    "spectrum_from_snapshots",
    "run_config",
    "sample_circuits",
]

# Levels closer than this are reported as degenerate.
DEGENERACY_TOL = 1e-8


def build_hamiltonian(cfg: ExperimentConfig) -> Hamiltonian:
    return build_model(cfg.model.kind, cfg.model.n_qubits, cfg.model.params or None)


def build_initial_state(cfg: ExperimentConfig, hamiltonian: Hamiltonian | None = None):
    """Return ``(state, info)``; ``info`` lists energies and degeneracy flags."""
    st = cfg.initial_state
    if st.product is not None:
        return product_state(st.product), {"kind": "product", "label": st.product}
    h = hamiltonian or build_hamiltonian(cfg)
    if h.n_qubits > MAX_DENSE_QUBITS:
        raise CapacityError(f"eigen-superposition needs diagonalization; {h.n_qubits} qubits exceeds {MAX_DENSE_QUBITS}")
    eig = eigendecompose(h)
    w = np.asarray(st.weights, dtype=float)
    w = w / np.linalg.norm(w)
    amps = eig.eigenvectors[:, st.levels] @ w
    energies = eig.eigenvalues[st.levels]
    degenerate = []
    for lvl, e in zip(st.levels, energies):
        near = np.flatnonzero(np.abs(eig.eigenvalues - e) < DEGENERACY_TOL)
        if len(near) > 1:
            degenerate.append(int(lvl))
    info = {
        "kind": "eigen_superposition",
        "levels": list(st.levels),
        "weights": w.tolist(),
        "energies": energies.tolist(),
        "degenerate_levels": degenerate,
    }
    return StateVector(h.n_qubits, np.ascontiguousarray(amps, dtype=np.complex128)), info


def time_grid(cfg: ExperimentConfig) -> TimeGrid:
    e = cfg.evolution
    return TimeGrid(e.t_total, e.n_t, e.k_steps_total)


def reference_gap(cfg: ExperimentConfig, state_info: dict | None = None) -> float | None:
    """Gap the spectrum should show: level spacing or the closed TFIM form."""
    if state_info and state_info.get("kind") == "eigen_superposition" and len(state_info["energies"]) >= 2:
        e = state_info["energies"]
        return float(abs(e[1] - e[0]))
    if cfg.model.kind == "tfim":
        p = {"j": 0.1, "d": 2.0, **cfg.model.params}
        return tfim_gap(cfg.model.n_qubits, p["j"], p["d"])
    return None


def _noise(cfg: ExperimentConfig) -> NoiseModel | None:
    n = cfg.noise
    if not n.enabled:
        return None
    return NoiseModel(True, n.p1, n.p2, n.include_measurement_layer)


def collect(cfg: ExperimentConfig, workers: int | None = None) -> tuple[SnapshotSet, dict]:
    h = build_hamiltonian(cfg)
    state, info = build_initial_state(cfg, h)
    grid = time_grid(cfg)
    meta = {"config_sha": cfg.sha()}
    if info.get("degenerate_levels"):
        meta["degenerate_levels"] = info["degenerate_levels"]
    snaps = run_experiment(
        h,
        state,
        grid,
        cfg.evolution.method,
        cfg.delta if cfg.evolution.method == "tepai" else None,
        cfg.sampling.m,
        cfg.sampling.n_s,
        _noise(cfg),
        cfg.sampling.seed,
        workers if workers is not None else cfg.sampling.workers,
        meta,
    )
    return snaps, info


def spectroscopy_settings(cfg: ExperimentConfig) -> SpectroscopySettings:
    sp = cfg.spectroscopy
    return SpectroscopySettings(sp.keep_fraction, sp.lb_lags, sp.c, sp.zero_pad, sp.dc_exclude_bins, sp.min_prominence_fraction)


def spectrum_from_snapshots(
    snaps: SnapshotSet, q: int = 3, mode: str = "all-subsets", settings: SpectroscopySettings | None = None
) -> tuple[np.ndarray, DataMatrix, Spectrum]:
    obs = enumerate_observables(snaps.n_qubits, q, mode)
    raw = build_time_series(snaps, obs)
    dt = float(snaps.metadata["dt"])
    data, spectrum = analyze(raw, dt, settings)
    return raw, data, spectrum


def trotter_depths(hamiltonian: Hamiltonian, grid: TimeGrid) -> np.ndarray:
    return np.array([circuit_depth(trotter_arrays(hamiltonian, t, k)) for t, k in grid])


@dataclass
class RunResult:
    snapshots: SnapshotSet
    raw: np.ndarray
    data: DataMatrix
    spectrum: Spectrum
    report: dict = field(default_factory=dict)


def _report(cfg, snaps, spectrum, info, grid, h, wall) -> dict:
    stats = snaps.circuit_stats
    gamma = stats["gamma"]
    depth = stats["depth"]
    trotter = trotter_depths(h, grid)
    gap = reference_gap(cfg, info)
    unpadded_bin = 2 * math.pi / (grid.n_t * grid.dt)
    top = spectrum.peaks[0] if spectrum.peaks else None
    return {
        "config_sha": cfg.sha(),
        "method": cfg.evolution.method,
        "records": len(snaps),
        "wall_time_s": wall,
        "initial_state": info,
        "gamma": {
            "per_time_point": gamma[:, 0].tolist(),
            "max_spread": float(np.max(np.ptp(gamma, axis=1))) if gamma.size else 0.0,
            "final": float(gamma[-1, 0]),
            "final_squared": float(gamma[-1, 0] ** 2),
        },
        "depth": {
            "mean": float(depth.mean()),
            "max": int(depth.max()),
            "final_mean": float(depth[-1].mean()),
            "trotter_mean": float(trotter.mean()),
            "trotter_final": int(trotter[-1]),
            "per_time_point_mean": depth.mean(axis=1).tolist(),
        },
        "gate_count_mean": float(stats["gate_count"].mean()),
        "spectrum": {
            "bin_width": spectrum.bin_width,
            "unpadded_bin_width": unpadded_bin,
            "top_peak": top.to_json_obj() if top else None,
            "reference_gap": gap,
            "top_peak_error": (abs(top.omega - gap) if (top and gap is not None) else None),
        },
    }


def run_config(cfg: ExperimentConfig, out_dir=None, workers: int | None = None, write: bool = True) -> RunResult:
    """Simulate, analyse and (optionally) write the run artifacts."""
    start = time.perf_counter()
    h = build_hamiltonian(cfg)
    grid = time_grid(cfg)
    snaps, info = collect(cfg, workers)
    raw, data, spectrum = spectrum_from_snapshots(
        snaps, cfg.observables.q, cfg.observables.mode, spectroscopy_settings(cfg)
    )
    wall = time.perf_counter() - start
    report = _report(cfg, snaps, spectrum, info, grid, h, wall)
    if write:
        out = Path(out_dir or cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        snaps.write_jsonl(out / "snapshots.jsonl")
        spectrum.write_csv(out / "spectrum.csv")
        write_peaks_json(spectrum.peaks, out / "peaks.json")
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        (out / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
    return RunResult(snaps, raw, data, spectrum, report)


def sample_circuits(cfg: ExperimentConfig, time_points=None, with_gates: bool = False):
    """Draw the circuits ``run`` would use, without simulating them.

    Yields one dict per (s, m) with gamma, gate count and depth (and the
    gate list when ``with_gates``).  Streams match :func:`run_experiment`.
    """
    h = build_hamiltonian(cfg)
    grid = time_grid(cfg)
    chosen = set(time_points) if time_points else None
    for s, (t, k) in enumerate(grid, start=1):
        if chosen is not None and s not in chosen:
            continue
        if cfg.evolution.method == "trotter":
            arr = trotter_arrays(h, t, k)
            row = {"s": s, "m": 0, "gamma": 1.0, "gates": len(arr), "depth": circuit_depth(arr)}
            yield row
            continue
        sched = TepaiSchedule(h, t, k, cfg.delta)
        for m in range(cfg.sampling.m):
            c = sched.sample(task_rng(cfg.sampling.seed, s, m, 0))
            row = {"s": s, "m": m, "gamma": c.gamma_signed, "gates": c.gate_count, "depth": c.depth}
            if with_gates:
                row["circuit"] = c.to_json_obj()["gates"]
            yield row
