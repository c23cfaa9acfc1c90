"""Ready-made configurations for the reference studies."""

from __future__ import annotations

from .config import ExperimentConfig

_PRESETS = {
    # Ten-site Heisenberg chain, ground state plus the 10th excited state.
    "heisenberg10": {
        "model": {"kind": "heisenberg", "n_qubits": 10, "params": {"jx": 1.0, "jy": 1.0, "jz": 1.0}},
        "initial_state": {"levels": [0, 10]},
        "evolution": {"dt": 0.11, "n_t": 90, "k_steps_total": 650, "method": "tepai", "delta_over_pi": 1 / 128},
        "sampling": {"m": 1000, "n_s": 1, "seed": 0},
        "observables": {"q": 3},
        "output": {"directory": "out/heisenberg10"},
    },
    # Twenty-site transverse-field Ising chain from |+...+0>.
    "tfim20": {
        "model": {"kind": "tfim", "n_qubits": 20, "params": {"j": 0.1, "d": 2.0}},
        "initial_state": {"product": "+" * 19 + "0"},
        "evolution": {"dt": 0.037, "n_t": 80, "k_steps_total": 115, "method": "tepai", "delta_over_pi": 1 / 32},
        "sampling": {"m": 3000, "n_s": 1, "seed": 0},
        "observables": {"q": 3},
        "output": {"directory": "out/tfim20"},
    },
    # Six-site Heisenberg chain that runs in under a minute on a laptop.
    "desk6": {
        "model": {"kind": "heisenberg", "n_qubits": 6, "params": {"jx": 1.0, "jy": 1.0, "jz": 1.0}},
        "initial_state": {"levels": [0, 14]},
        "evolution": {"dt": 0.025, "n_t": 60, "k_steps_total": 300, "method": "tepai", "delta_over_pi": 1 / 32},
        "sampling": {"m": 1000, "n_s": 1, "seed": 0},
        "observables": {"q": 3},
        "output": {"directory": "out/desk6"},
    },
    "desk6-noisy": {
        "model": {"kind": "heisenberg", "n_qubits": 6, "params": {"jx": 1.0, "jy": 1.0, "jz": 1.0}},
        "initial_state": {"levels": [0, 14]},
        "evolution": {"dt": 0.025, "n_t": 60, "k_steps_total": 300, "method": "tepai", "delta_over_pi": 1 / 32},
        "sampling": {"m": 3000, "n_s": 1, "seed": 0},
        "noise": {"enabled": True, "p1": 1e-4, "p2": 1e-3, "include_measurement_layer": True},
        "observables": {"q": 3},
        "output": {"directory": "out/desk6-noisy"},
    },
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str) -> ExperimentConfig:
    try:
        tree = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    return ExperimentConfig.from_dict(tree)
