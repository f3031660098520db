"""Experiment configuration: dataclasses, TOML loading, validation.

Every CLI command consumes one ExperimentConfig. Unknown keys are rejected
so typos fail loudly before any compute starts. The output directory is
resolved against the SEMLINK_OUTPUT_ROOT environment variable when set.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib as tomli
except ModuleNotFoundError:  # 3.10: stdlib tomllib not yet available
    import tomli

from .codec import CODE_SIZES, TASKS
from .link_budget import LinkBudget, OrbitGeometry
from .training import TrainConfig

OUTPUT_ROOT_ENV = "SEMLINK_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Invalid configuration; maps to CLI exit code 1."""


@dataclass
class DataConfig:
    source: str = "synthetic"
    manifest: str = ""
    root: str = ""
    n_per_class: int = 120
    split: tuple[int, int, int] = (1800, 90, 134)
    seed: int = 7


@dataclass
class SweepConfig:
    code_sizes: tuple[int, ...] = (16, 32, 64, 128)
    tasks: tuple[str, ...] = ("reconstruct", "classify")
    tx_powers_dbm: tuple[float, ...] = (0, 3, 6, 9, 12, 15, 18, 21, 24, 27, 30)
    n_mc: int = 20
    master_seed: int = 2024
    allow_nonstandard_codes: bool = False
    ssim_window: str = "global"


@dataclass
class BaselineRunConfig:
    modes: tuple[str, ...] = ("raw8",)
    classifiers: tuple[str, ...] = ("svm", "nn")
    train_tx_power_dbm: float = 15.0
    n_mc: int = 20
    seed: int = 11
    save_corpora: bool = False


@dataclass
class ByteConfig:
    quant_bits: int = 8
    baseline_bytes: float = 1300.0
    measure_jpeg: bool = False


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    link: LinkBudget = field(default_factory=LinkBudget)
    training: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    baseline: BaselineRunConfig = field(default_factory=BaselineRunConfig)
    bytes: ByteConfig = field(default_factory=ByteConfig)
    output_dir: str = "runs/default"

    def resolved_output_dir(self) -> Path:
        out = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out

    def validate(self) -> None:
        d = self.data
        if d.source not in ("synthetic", "manifest"):
            raise ConfigError(f"data.source must be synthetic or manifest, got {d.source!r}")
        if d.source == "manifest":
            if not d.manifest:
                raise ConfigError("data.source = manifest needs data.manifest")
            if not Path(d.manifest).exists():
                raise ConfigError(f"data.manifest not found: {d.manifest}")
        if d.source == "synthetic" and d.n_per_class < 1:
            raise ConfigError(f"data.n_per_class must be >= 1, got {d.n_per_class}")
        if len(d.split) != 3 or any(int(s) < 0 for s in d.split):
            raise ConfigError(f"data.split must be three sizes >= 0, got {d.split}")

        s = self.sweep
        for name, values in (
            ("sweep.code_sizes", s.code_sizes),
            ("sweep.tasks", s.tasks),
            ("sweep.tx_powers_dbm", s.tx_powers_dbm),
            ("baseline.modes", self.baseline.modes),
            ("baseline.classifiers", self.baseline.classifiers),
        ):
            if len(values) == 0:
                raise ConfigError(f"{name} must be nonempty")
        if not s.allow_nonstandard_codes:
            bad = [c for c in s.code_sizes if c not in CODE_SIZES]
            if bad:
                raise ConfigError(
                    f"sweep.code_sizes {bad} outside {CODE_SIZES}; "
                    "set sweep.allow_nonstandard_codes = true to permit"
                )
        if any(int(c) < 1 for c in s.code_sizes):
            raise ConfigError(f"sweep.code_sizes must be positive, got {s.code_sizes}")
        bad_tasks = [t for t in s.tasks if t not in TASKS]
        if bad_tasks:
            raise ConfigError(f"sweep.tasks {bad_tasks} outside {TASKS}")
        if any(not math.isfinite(float(p)) for p in s.tx_powers_dbm):
            raise ConfigError(f"sweep.tx_powers_dbm must be finite, got {s.tx_powers_dbm}")
        if s.n_mc < 1:
            raise ConfigError(f"sweep.n_mc must be >= 1, got {s.n_mc}")
        if s.ssim_window not in ("global", "sliding"):
            raise ConfigError(f"sweep.ssim_window must be global or sliding, got {s.ssim_window!r}")

        b = self.baseline
        bad_modes = [m for m in b.modes if m not in ("raw8", "jpeg")]
        if bad_modes:
            raise ConfigError(f"baseline.modes {bad_modes} outside ('raw8', 'jpeg')")
        bad_clf = [c for c in b.classifiers if c not in ("svm", "nn")]
        if bad_clf:
            raise ConfigError(f"baseline.classifiers {bad_clf} outside ('svm', 'nn')")
        if not math.isfinite(b.train_tx_power_dbm):
            raise ConfigError("baseline.train_tx_power_dbm must be finite")
        if b.n_mc < 1:
            raise ConfigError(f"baseline.n_mc must be >= 1, got {b.n_mc}")

        if self.bytes.quant_bits < 1:
            raise ConfigError(f"bytes.quant_bits must be >= 1, got {self.bytes.quant_bits}")
        if not self.bytes.baseline_bytes > 0:
            raise ConfigError(
                f"bytes.baseline_bytes must be positive, got {self.bytes.baseline_bytes}"
            )

        try:
            self.training.validate()
        except ValueError as exc:
            raise ConfigError(f"training: {exc}") from exc
        if not self.output_dir:
            raise ConfigError("output_dir must be set")


def _build_section(cls, table: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    coerced = {}
    for f in fields(cls):
        if f.name not in table:
            continue
        value = table[f.name]
        if isinstance(value, list):
            value = tuple(value)
        coerced[f.name] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def _build_link(table: dict) -> LinkBudget:
    geo_keys = {"earth_radius_km", "orbit_height_km", "elevation_deg"}
    link_keys = {"tx_power_dbm", "tx_gain_dbi", "rx_gain_dbi", "carrier_hz", "noise_power_dbm"}
    unknown = set(table) - geo_keys - link_keys
    if unknown:
        raise ConfigError(f"unknown key(s) in [link]: {sorted(unknown)}")
    try:
        geometry = OrbitGeometry(**{k: table[k] for k in geo_keys if k in table})
        return LinkBudget(
            geometry=geometry, **{k: table[k] for k in link_keys if k in table}
        )
    except ValueError as exc:
        raise ConfigError(f"[link]: {exc}") from exc


def load_config(path=None) -> ExperimentConfig:
    """Parse a TOML file into a validated ExperimentConfig.

    With no path, the built-in defaults are returned (already valid).
    """
    if path is None:
        cfg = ExperimentConfig()
        cfg.validate()
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    known_sections = {"data", "link", "training", "sweep", "baseline", "bytes", "output"}
    unknown = set(raw) - known_sections
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")

    output_table = raw.get("output", {})
    if not isinstance(output_table, dict) or set(output_table) - {"dir"}:
        raise ConfigError("[output] accepts only the 'dir' key")

    cfg = ExperimentConfig(
        data=_build_section(DataConfig, raw.get("data", {}), "data"),
        link=_build_link(raw.get("link", {})),
        training=_build_section(TrainConfig, raw.get("training", {}), "training"),
        sweep=_build_section(SweepConfig, raw.get("sweep", {}), "sweep"),
        baseline=_build_section(BaselineRunConfig, raw.get("baseline", {}), "baseline"),
        bytes=_build_section(ByteConfig, raw.get("bytes", {}), "bytes"),
        output_dir=output_table.get("dir", "runs/default"),
    )
    cfg.validate()
    return cfg


def with_output_dir(cfg: ExperimentConfig, output_dir: str) -> ExperimentConfig:
    return replace(cfg, output_dir=output_dir)
