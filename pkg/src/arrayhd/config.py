from __future__ import annotations

from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any
import json
import math
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PRESET_NAMES = ("fig1", "fig2", "fig3", "vacuum")
STATE_FAMILIES = ("perelomov", "truncated", "vacuum")
BASIS_PRESETS = ("hermite-gauss", "real-hermite-gauss", "vortex", "constant")
SELECTION_STRATEGIES = ("greedy-condition", "random-restart")
THREADS_ENV = "ARRAYHD_THREADS"


@dataclass
class FockConfig:
    cutoff: int = 12
    truncation_weight: float = 1e-10
    density_truncation_weight: float = 1e-22

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        _ensure_positive_int("fock.cutoff", self.cutoff)
        _ensure_float_between(
            "fock.truncation_weight", self.truncation_weight, 0.0, 1.0, inclusive_low=False, inclusive_high=False
        )
        _ensure_float_between(
            "fock.density_truncation_weight",
            self.density_truncation_weight,
            0.0,
            1.0,
            inclusive_low=False,
            inclusive_high=False,
        )


@dataclass
class GridConfig:
    nx: int = 16
    ny: int = 16
    dx: float = 0.0625
    dy: float = 0.0625

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        _ensure_positive_int("grid.nx", self.nx)
        _ensure_positive_int("grid.ny", self.ny)
        _ensure_positive_float("grid.dx", self.dx)
        _ensure_positive_float("grid.dy", self.dy)


@dataclass
class BasisConfig:
    preset: str = "hermite-gauss"
    waist: float | None = None
    tilt: float = 0.5

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        preset = str(self.preset).strip().lower()
        if preset not in BASIS_PRESETS:
            _raise_config_error("basis.preset", f"must be one of {list(BASIS_PRESETS)}", self.preset)
        self.preset = preset
        if self.waist is not None:
            _ensure_positive_float("basis.waist", self.waist)
        _ensure_finite("basis.tilt", self.tilt)


@dataclass
class MixerConfig:
    theta: float = 0.5 * math.pi
    nu: float = 0.25 * math.pi

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        _ensure_float_between("mixer.theta", self.theta, 0.0, 2.0 * math.pi, inclusive_high=False)
        _ensure_float_between("mixer.nu", self.nu, 0.0, 0.5 * math.pi)


@dataclass
class LOConfig:
    beta: float = 1000.0
    phi: float = 0.25 * math.pi

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        _ensure_positive_float("lo.beta", self.beta)
        _ensure_finite("lo.phi", self.phi)


@dataclass
class VerifyConfig:
    nu1: float = math.pi / 6.0
    nu2: float = math.pi / 3.0
    tolerance: float = 1e-10
    thetas: list[float] = field(default_factory=lambda: [0.0, 0.5 * math.pi, math.pi])
    phis: list[float] = field(default_factory=lambda: [0.0, 0.25 * math.pi, 0.5 * math.pi])
    density_points: int = 41
    density_range: float = 4.0
    density_tolerance: float = 1e-8

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        _ensure_float_between("verify.nu1", self.nu1, 0.0, 0.5 * math.pi)
        _ensure_float_between("verify.nu2", self.nu2, 0.0, 0.5 * math.pi)
        _ensure_positive_float("verify.tolerance", self.tolerance)
        if not self.thetas:
            _raise_config_error("verify.thetas", "must not be empty", self.thetas)
        if not self.phis:
            _raise_config_error("verify.phis", "must not be empty", self.phis)
        for theta in self.thetas:
            _ensure_float_between("verify.thetas", theta, 0.0, 2.0 * math.pi, inclusive_high=False)
        _ensure_int_at_least("verify.density_points", self.density_points, minimum=3)
        _ensure_positive_float("verify.density_range", self.density_range)
        _ensure_positive_float("verify.density_tolerance", self.density_tolerance)


@dataclass
class SelectionConfig:
    strategy: str = "greedy-condition"
    seeds: int = 500
    seed: int = 0
    max_condition: float = 1e8
    workers: int = 1

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        strategy = str(self.strategy).strip().lower()
        if strategy not in SELECTION_STRATEGIES:
            _raise_config_error("selection.strategy", f"must be one of {list(SELECTION_STRATEGIES)}", self.strategy)
        self.strategy = strategy
        _ensure_positive_int("selection.seeds", self.seeds)
        _ensure_seed("selection.seed", self.seed)
        _ensure_float_between("selection.max_condition", self.max_condition, 1.0, math.inf, inclusive_low=False)
        _ensure_positive_int("selection.workers", self.workers)


@dataclass
class StateConfig:
    family: str = "perelomov"
    r: float = 1.0
    gamma: float = 0.25 * math.pi
    c1: float = 1.0 / math.sqrt(2.0)
    c2: float = 1.0 / math.sqrt(2.0)
    delta: float = math.pi / 8.0
    phi1: float = 0.25 * math.pi
    phi2: float = 0.5 * math.pi

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        family = str(self.family).strip().lower()
        if family not in STATE_FAMILIES:
            _raise_config_error("state.family", f"must be one of {list(STATE_FAMILIES)}", self.family)
        self.family = family
        _ensure_non_negative_float("state.r", self.r)
        for name in ("gamma", "delta", "phi1", "phi2", "c1", "c2"):
            _ensure_finite(f"state.{name}", getattr(self, name))
        if family == "truncated" and abs(self.c1 * self.c1 + self.c2 * self.c2 - 1.0) > 1e-12:
            _raise_config_error("state.c1", "c1^2 + c2^2 must equal 1", (self.c1, self.c2))


@dataclass
class SamplingConfig:
    samples: int = 160000
    seed: int = 20240611
    chunk_size: int = 20000
    workers: int = 1
    envelope_check_points: int = 161
    envelope_check_range: float = 8.0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        _ensure_positive_int("sampling.samples", self.samples)
        _ensure_seed("sampling.seed", self.seed)
        _ensure_int_at_least("sampling.chunk_size", self.chunk_size, minimum=100)
        _ensure_positive_int("sampling.workers", self.workers)
        _ensure_int_at_least("sampling.envelope_check_points", self.envelope_check_points, minimum=3)
        _ensure_positive_float("sampling.envelope_check_range", self.envelope_check_range)


@dataclass
class HistogramConfig:
    bins: int = 50
    range: float = 5.0
    min_expected: float = 5.0
    min_coverage: float = 0.999

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        _ensure_int_at_least("histogram.bins", self.bins, minimum=2)
        _ensure_positive_float("histogram.range", self.range)
        _ensure_positive_float("histogram.min_expected", self.min_expected)
        _ensure_float_between("histogram.min_coverage", self.min_coverage, 0.0, 1.0)


@dataclass
class DensityGridConfig:
    points: int = 41
    range: float = 4.0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        _ensure_int_at_least("densities.points", self.points, minimum=3)
        _ensure_positive_float("densities.range", self.range)


@dataclass
class AppConfig:
    fock: FockConfig = field(default_factory=FockConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    mixer: MixerConfig = field(default_factory=MixerConfig)
    lo: LOConfig = field(default_factory=LOConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    state: StateConfig = field(default_factory=StateConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    densities: DensityGridConfig = field(default_factory=DensityGridConfig)

    def __post_init__(self) -> None:
        self.validate()

    @classmethod
    def from_path(cls, path: str | Path | None) -> "AppConfig":
        return cls.load(path=path)

    @classmethod
    def from_preset(cls, name: str) -> "AppConfig":
        return cls.load(preset=name)

    @classmethod
    def load(cls, path: str | Path | None = None, preset: str | None = None) -> "AppConfig":
        """Defaults, then the preset, then the config file; later layers win."""
        merged = asdict(cls())
        if preset is not None:
            merged = _merge_dict(merged, read_preset(preset))
        if path is not None:
            cfg_path = Path(path)
            if not cfg_path.exists():
                raise FileNotFoundError(f"Config file not found: {cfg_path}")
            merged = _merge_dict(merged, _read_config_file(cfg_path))
        config = _from_merged_dict(merged)
        config.validate()
        return config

    def validate(self) -> None:
        self.fock.validate()
        self.grid.validate()
        self.basis.validate()
        self.mixer.validate()
        self.lo.validate()
        self.verify.validate()
        self.selection.validate()
        self.state.validate()
        self.sampling.validate()
        self.histogram.validate()
        self.densities.validate()

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def read_preset(name: str) -> dict[str, Any]:
    if name not in PRESET_NAMES:
        raise ValueError(f"Unknown preset '{name}'. Expected one of {list(PRESET_NAMES)}")
    text = resources.files("arrayhd.presets").joinpath(f"{name}.toml").read_text(encoding="utf-8")
    return tomllib.loads(text)


def resolve_workers(requested: int) -> int:
    """Requested worker count, capped by ARRAYHD_THREADS when it is set."""
    workers = max(1, int(requested))
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return workers
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"Invalid {THREADS_ENV}: must be a positive integer. Got {raw!r}") from exc
    if cap < 1:
        raise ValueError(f"Invalid {THREADS_ENV}: must be a positive integer. Got {raw!r}")
    return min(workers, cap)


def _read_config_file(path: Path) -> dict[str, Any]:
    suffix = path.suffix.lower()
    if suffix == ".toml":
        with path.open("rb") as fh:
            return tomllib.load(fh)
    if suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("JSON config root must be an object")
        return data
    if suffix in {".yaml", ".yml"}:
        try:
            import yaml  # type: ignore
        except ImportError as exc:
            raise RuntimeError(
                "YAML config requested but PyYAML is not installed. "
                "Use TOML/JSON or install pyyaml."
            ) from exc
        with path.open("r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
            if not isinstance(data, dict):
                raise ValueError("YAML config root must be a mapping")
            return data
    raise ValueError(f"Unsupported config extension: {path.suffix}")


def _merge_dict(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged: dict[str, Any] = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge_dict(merged[key], value)
        else:
            merged[key] = value
    return merged


def _from_merged_dict(merged: dict[str, Any]) -> AppConfig:
    unknown = sorted(set(merged) - set(_SECTIONS))
    if unknown:
        _raise_config_error("<root>", f"unknown sections {unknown}", unknown)
    sections: dict[str, Any] = {}
    for name, section_cls in _SECTIONS.items():
        payload = merged.get(name, {})
        if not isinstance(payload, dict):
            _raise_config_error(name, "must be a table", payload)
        try:
            sections[name] = section_cls(**payload)
        except TypeError as exc:
            raise ValueError(f"Invalid config '{name}': {exc}") from exc
    return AppConfig(**sections)


_SECTIONS: dict[str, type] = {
    "fock": FockConfig,
    "grid": GridConfig,
    "basis": BasisConfig,
    "mixer": MixerConfig,
    "lo": LOConfig,
    "verify": VerifyConfig,
    "selection": SelectionConfig,
    "state": StateConfig,
    "sampling": SamplingConfig,
    "histogram": HistogramConfig,
    "densities": DensityGridConfig,
}


def _raise_config_error(field_name: str, rule: str, value: Any) -> None:
    raise ValueError(f"Invalid config '{field_name}': {rule}. Got {value!r}")


def _ensure_positive_int(field_name: str, value: int) -> None:
    if int(value) <= 0:
        _raise_config_error(field_name, "must be > 0", value)


def _ensure_int_at_least(field_name: str, value: int, minimum: int) -> None:
    if int(value) < int(minimum):
        _raise_config_error(field_name, f"must be >= {minimum}", value)


def _ensure_seed(field_name: str, value: int) -> None:
    if int(value) != value or not 0 <= int(value) < 2**64:
        _raise_config_error(field_name, "must be an unsigned 64-bit integer", value)


def _ensure_finite(field_name: str, value: float) -> None:
    if not math.isfinite(float(value)):
        _raise_config_error(field_name, "must be finite", value)


def _ensure_positive_float(field_name: str, value: float) -> None:
    _ensure_finite(field_name, value)
    if float(value) <= 0.0:
        _raise_config_error(field_name, "must be > 0", value)


def _ensure_non_negative_float(field_name: str, value: float) -> None:
    _ensure_finite(field_name, value)
    if float(value) < 0.0:
        _raise_config_error(field_name, "must be >= 0", value)


def _ensure_float_between(
    field_name: str,
    value: float,
    low: float,
    high: float,
    inclusive_low: bool = True,
    inclusive_high: bool = True,
) -> None:
    value_f = float(value)
    low_ok = value_f >= low if inclusive_low else value_f > low
    high_ok = value_f <= high if inclusive_high else value_f < high
    if not (low_ok and high_ok):
        low_bracket = "[" if inclusive_low else "("
        high_bracket = "]" if inclusive_high else ")"
        _raise_config_error(field_name, f"must be in {low_bracket}{low}, {high}{high_bracket}", value)
