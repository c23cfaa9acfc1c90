"""Experiment configuration: parsing, validation and canonical serialization.

A config is a nested key-value tree read from TOML or JSON.  Validation
errors name the offending field by its dotted path.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "ModelConfig",
    "InitialStateConfig",
    "EvolutionConfig",
    "SamplingConfig",
    "NoiseConfig",
    "ObservablesConfig",
    "SpectroscopyConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
]


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ModelConfig:
    kind: str = "heisenberg"
    n_qubits: int = 6
    params: dict = field(default_factory=dict)


@dataclass
class InitialStateConfig:
    """Either a product string over 0/1/+/- or an eigen-superposition."""

    product: str | None = None
    levels: list | None = None
    weights: list | None = None


@dataclass
class EvolutionConfig:
    dt: float | None = None
    t_total: float | None = None
    n_t: int = 60
    k_steps_total: int = 300
    method: str = "tepai"
    delta_over_pi: float = 1 / 32


@dataclass
class SamplingConfig:
    m: int = 1000
    n_s: int = 1
    seed: int = 0
    workers: int | None = None


@dataclass
class NoiseConfig:
    enabled: bool = False
    p1: float = 1e-4
    p2: float = 1e-3
    include_measurement_layer: bool = True


@dataclass
class ObservablesConfig:
    q: int = 3
    mode: str = "all-subsets"


@dataclass
class SpectroscopyConfig:
    keep_fraction: float = 0.10
    lb_lags: int | None = None
    c: int = 5
    zero_pad: int = 4
    dc_exclude_bins: int = 2
    min_prominence_fraction: float = 0.2


@dataclass
class OutputConfig:
    directory: str = "out"


_SECTIONS = {
    "model": ModelConfig,
    "initial_state": InitialStateConfig,
    "evolution": EvolutionConfig,
    "sampling": SamplingConfig,
    "noise": NoiseConfig,
    "observables": ObservablesConfig,
    "spectroscopy": SpectroscopyConfig,
    "output": OutputConfig,
}


def _typed(path, value, kind, optional=False):
    if value is None:
        if optional:
            return None
        raise ConfigError(path, "is required")
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    initial_state: InitialStateConfig = field(default_factory=InitialStateConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    observables: ObservablesConfig = field(default_factory=ObservablesConfig)
    spectroscopy: SpectroscopyConfig = field(default_factory=SpectroscopyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, tree: dict) -> "ExperimentConfig":
        if not isinstance(tree, dict):
            raise ConfigError("<root>", "config must be a table")
        unknown = set(tree) - set(_SECTIONS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        sections = {}
        for name, klass in _SECTIONS.items():
            raw = tree.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(name, "must be a table")
            known = {f.name for f in fields(klass)}
            extra = set(raw) - known
            if extra:
                raise ConfigError(f"{name}.{sorted(extra)[0]}", "unknown key")
            sections[name] = klass(**copy.deepcopy(raw))
        cfg = cls(**sections)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        m = self.model
        m.kind = _typed("model.kind", m.kind, str).lower()
        if m.kind not in ("heisenberg", "tfim"):
            raise ConfigError("model.kind", f"unknown model {m.kind!r}")
        m.n_qubits = _typed("model.n_qubits", m.n_qubits, int)
        if m.n_qubits < 2:
            raise ConfigError("model.n_qubits", "must be at least 2")
        if not isinstance(m.params, dict):
            raise ConfigError("model.params", "must be a table")
        allowed = ("jx", "jy", "jz") if m.kind == "heisenberg" else ("j", "d")
        for k, v in m.params.items():
            if k not in allowed:
                raise ConfigError(f"model.params.{k}", f"unknown parameter for {m.kind}")
            m.params[k] = _typed(f"model.params.{k}", v, float)

        s = self.initial_state
        if (s.product is None) == (s.levels is None):
            raise ConfigError("initial_state", "give exactly one of 'product' or 'levels'")
        if s.product is not None:
            s.product = _typed("initial_state.product", s.product, str)
            if len(s.product) != m.n_qubits:
                raise ConfigError("initial_state.product", f"needs {m.n_qubits} characters")
            bad = set(s.product) - set("01+-")
            if bad:
                raise ConfigError("initial_state.product", f"invalid characters {sorted(bad)}")
            if s.weights is not None:
                raise ConfigError("initial_state.weights", "only valid with 'levels'")
        else:
            if not isinstance(s.levels, list) or not s.levels:
                raise ConfigError("initial_state.levels", "must be a nonempty list")
            s.levels = [_typed(f"initial_state.levels[{i}]", v, int) for i, v in enumerate(s.levels)]
            if len(set(s.levels)) != len(s.levels) or min(s.levels) < 0:
                raise ConfigError("initial_state.levels", "must be distinct non-negative indices")
            if max(s.levels) >= 2**m.n_qubits:
                raise ConfigError("initial_state.levels", "index beyond the Hilbert space")
            if s.weights is None:
                s.weights = [1.0 / math.sqrt(len(s.levels))] * len(s.levels)
            if not isinstance(s.weights, list) or len(s.weights) != len(s.levels):
                raise ConfigError("initial_state.weights", "must match 'levels' in length")
            s.weights = [_typed(f"initial_state.weights[{i}]", v, float) for i, v in enumerate(s.weights)]
            if not any(s.weights):
                raise ConfigError("initial_state.weights", "must not all be zero")

        e = self.evolution
        e.n_t = _typed("evolution.n_t", e.n_t, int)
        if e.n_t < 1:
            raise ConfigError("evolution.n_t", "must be positive")
        e.dt = _typed("evolution.dt", e.dt, float, optional=True)
        e.t_total = _typed("evolution.t_total", e.t_total, float, optional=True)
        if e.dt is None and e.t_total is None:
            raise ConfigError("evolution.dt", "give dt or t_total")
        if e.dt is None:
            e.dt = e.t_total / e.n_t
        if e.t_total is None:
            e.t_total = e.dt * e.n_t
        if e.dt <= 0:
            raise ConfigError("evolution.dt", "must be positive")
        if not math.isclose(e.dt * e.n_t, e.t_total, rel_tol=1e-9):
            raise ConfigError("evolution.t_total", f"inconsistent with dt * n_t = {e.dt * e.n_t}")
        e.k_steps_total = _typed("evolution.k_steps_total", e.k_steps_total, int)
        if e.k_steps_total < 1:
            raise ConfigError("evolution.k_steps_total", "must be positive")
        e.method = _typed("evolution.method", e.method, str).lower()
        if e.method not in ("tepai", "trotter"):
            raise ConfigError("evolution.method", "must be 'tepai' or 'trotter'")
        e.delta_over_pi = _typed("evolution.delta_over_pi", e.delta_over_pi, float)
        if not 0.0 < e.delta_over_pi < 1.0:
            raise ConfigError("evolution.delta_over_pi", "must lie in (0, 1)")

        sm = self.sampling
        sm.m = _typed("sampling.m", sm.m, int)
        sm.n_s = _typed("sampling.n_s", sm.n_s, int)
        if sm.m < 1:
            raise ConfigError("sampling.m", "must be positive")
        if sm.n_s < 1:
            raise ConfigError("sampling.n_s", "must be positive")
        sm.seed = _typed("sampling.seed", sm.seed, int)
        if sm.seed < 0:
            raise ConfigError("sampling.seed", "must be non-negative")
        sm.workers = _typed("sampling.workers", sm.workers, int, optional=True)
        if sm.workers is not None and sm.workers < 1:
            raise ConfigError("sampling.workers", "must be positive")

        n = self.noise
        n.enabled = _typed("noise.enabled", n.enabled, bool)
        n.include_measurement_layer = _typed("noise.include_measurement_layer", n.include_measurement_layer, bool)
        for key in ("p1", "p2"):
            v = _typed(f"noise.{key}", getattr(n, key), float)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"noise.{key}", "must lie in [0, 1]")
            setattr(n, key, v)

        o = self.observables
        o.q = _typed("observables.q", o.q, int)
        if not 1 <= o.q <= m.n_qubits:
            raise ConfigError("observables.q", f"must lie in [1, {m.n_qubits}]")
        o.mode = _typed("observables.mode", o.mode, str)
        if o.mode not in ("all-subsets", "contiguous-windows"):
            raise ConfigError("observables.mode", "must be 'all-subsets' or 'contiguous-windows'")

        sp = self.spectroscopy
        sp.keep_fraction = _typed("spectroscopy.keep_fraction", sp.keep_fraction, float)
        if not 0.0 < sp.keep_fraction <= 1.0:
            raise ConfigError("spectroscopy.keep_fraction", "must lie in (0, 1]")
        sp.lb_lags = _typed("spectroscopy.lb_lags", sp.lb_lags, int, optional=True)
        if sp.lb_lags is not None and not 1 <= sp.lb_lags < e.n_t:
            raise ConfigError("spectroscopy.lb_lags", f"must lie in [1, {e.n_t - 1}]")
        for key in ("c", "zero_pad"):
            v = _typed(f"spectroscopy.{key}", getattr(sp, key), int)
            if v < 1:
                raise ConfigError(f"spectroscopy.{key}", "must be positive")
            setattr(sp, key, v)
        sp.dc_exclude_bins = _typed("spectroscopy.dc_exclude_bins", sp.dc_exclude_bins, int)
        if sp.dc_exclude_bins < 0:
            raise ConfigError("spectroscopy.dc_exclude_bins", "must be non-negative")
        sp.min_prominence_fraction = _typed(
            "spectroscopy.min_prominence_fraction", sp.min_prominence_fraction, float
        )
        if not 0.0 <= sp.min_prominence_fraction <= 1.0:
            raise ConfigError("spectroscopy.min_prominence_fraction", "must lie in [0, 1]")

        self.output.directory = _typed("output.directory", self.output.directory, str)

    def to_dict(self) -> dict:
        """Plain tree with ``None`` entries omitted (TOML has no null)."""

        def strip(d):
            return {k: strip(v) if isinstance(v, dict) else v for k, v in d.items() if v is not None}

        return strip(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def sha(self) -> str:
        """Digest of everything that affects the snapshots and spectrum."""
        tree = self.to_dict()
        tree.pop("output", None)
        tree.get("sampling", {}).pop("workers", None)
        blob = json.dumps(tree, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def delta(self) -> float:
        return self.evolution.delta_over_pi * math.pi

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with per-section overrides, e.g. ``replace(sampling={"m": 10})``."""
        tree = self.to_dict()
        for name, updates in sections.items():
            tree.setdefault(name, {}).update(updates)
        if "evolution" in sections:
            ev = sections["evolution"]
            if "dt" in ev and "t_total" not in ev:
                tree["evolution"].pop("t_total", None)
            if "t_total" in ev and "dt" not in ev:
                tree["evolution"].pop("dt", None)
            if "n_t" in ev and not {"dt", "t_total"} & set(ev):
                tree["evolution"].pop("t_total", None)
        if "initial_state" in sections:
            st = sections["initial_state"]
            if "product" in st:
                tree["initial_state"].pop("levels", None)
                tree["initial_state"].pop("weights", None)
            if "levels" in st:
                tree["initial_state"].pop("product", None)
                if "weights" not in st:
                    tree["initial_state"].pop("weights", None)
        return ExperimentConfig.from_dict(tree)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from exc
    if path.suffix.lower() == ".json":
        try:
            tree = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    else:
        try:
            tree = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
    return ExperimentConfig.from_dict(tree)
