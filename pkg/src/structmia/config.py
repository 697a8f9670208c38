"""Experiment configuration: an INI file with one section per concern.

Every field has a default, so an empty file (or no file) is the
``paper-default`` preset.  Unknown sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .attacks import ATTACKS, AttackConfig
from .distortions import DEFAULT_SPECS, KINDS
from .errors import ParameterError


class ConfigError(ParameterError):
    pass


@dataclass
class DatasetSection:
    n_member: int = 128
    n_holdout: int = 128
    size: int = 32
    k_classes: int = 4
    seed: int = 0
    manifest: str = ""  # read images from a manifest instead of regenerating


@dataclass
class ScheduleSection:
    t_max: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass
class ModelSection:
    backend: str = "oracle"  # oracle | trained
    path: str = "model.bin"
    epochs: int = 200
    lr: float = 0.05
    batch_size: int = 16
    momentum: float = 0.9
    base_ch: int = 32
    p_uncond: float = 0.1
    t_train_max: int = 200
    cosine: bool = True
    seed: int = 0


@dataclass
class AttackSection:
    attacks: str = "structural,secmi,pia,naive_loss"
    t_total: int = 100
    interval: int = 50
    gamma: float = 1.0
    t_eval: int = 100
    naive_draws: int = 1
    conditioning: str = "class"  # class | none
    seed: int = 0

    def attack_list(self) -> list[str]:
        names = [a.strip() for a in self.attacks.split(",") if a.strip()]
        bad = [a for a in names if a not in ATTACKS]
        if bad or not names:
            raise ConfigError(f"unknown attacks {bad}; choose from {ATTACKS}")
        return names

    def attack_config(self, **override) -> AttackConfig:
        kw = dict(t_total=self.t_total, interval=self.interval, gamma=self.gamma,
                  t_eval=self.t_eval, naive_draws=self.naive_draws, seed=self.seed)
        kw.update(override)
        try:
            return AttackConfig(**kw)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class DistortionSection:
    kinds: str = ",".join(KINDS)
    salt_pepper: float = DEFAULT_SPECS["salt_pepper"]
    rotation: float = DEFAULT_SPECS["rotation"]
    saturation: float = DEFAULT_SPECS["saturation"]
    brightness: float = DEFAULT_SPECS["brightness"]
    seed: int = 0

    def kind_list(self) -> list[str]:
        names = [k.strip() for k in self.kinds.split(",") if k.strip()]
        bad = [k for k in names if k not in KINDS]
        if bad:
            raise ConfigError(f"unknown distortions {bad}; choose from {KINDS}")
        return names


@dataclass
class SweepSection:
    timesteps: str = "50,100,200,300,400,600,800"
    intervals: str = "1,10,20,50,100"
    interval_t_total: int = 100
    gammas: str = "0,1,2,3,4,5"
    curve_grid: str = "0:800:50"
    curve_dt: int = 50

    @staticmethod
    def _ints(text: str) -> list[int]:
        try:
            return [int(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad integer list {text!r}") from exc

    def timestep_list(self) -> list[int]:
        return self._ints(self.timesteps)

    def interval_list(self) -> list[int]:
        return self._ints(self.intervals)

    def gamma_list(self) -> list[float]:
        try:
            return [float(v) for v in self.gammas.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad gamma list {self.gammas!r}") from exc

    def grid(self) -> list[int]:
        try:
            if ":" in self.curve_grid:
                lo, hi, step = (int(v) for v in self.curve_grid.split(":"))
                return list(range(lo, hi + 1, step))
            return self._ints(self.curve_grid)
        except ValueError as exc:
            raise ConfigError(f"bad curve grid {self.curve_grid!r}") from exc


@dataclass
class RunSection:
    out: str = "results"
    workers: int = 1
    preset: str = "paper-default"
    dump_trajectories: bool = False
    svg: bool = True


@dataclass
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    model: ModelSection = field(default_factory=ModelSection)
    attack: AttackSection = field(default_factory=AttackSection)
    distortion: DistortionSection = field(default_factory=DistortionSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def data_dict(self) -> dict:
        """Config minus the keys that must not influence result bytes."""
        d = self.to_dict()
        d["run"] = {k: v for k, v in d["run"].items() if k not in ("workers", "out")}
        return d

    def data_sha256(self) -> str:
        text = json.dumps(self.data_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def header_lines(self) -> list[str]:
        """Comment lines embedded at the top of every result file."""
        return [
            f"# structmia {__version__}",
            f"# config_sha256 {self.data_sha256()}",
            "# config " + json.dumps(self.data_dict(), sort_keys=True, separators=(",", ":")),
        ]

    def validate(self) -> None:
        if self.model.backend not in ("oracle", "trained"):
            raise ConfigError(f"model.backend must be oracle or trained, got {self.model.backend!r}")
        if self.attack.conditioning not in ("class", "none"):
            raise ConfigError("attack.conditioning must be class or none")
        if self.run.workers < 1:
            raise ConfigError("run.workers must be >= 1")
        if self.dataset.size < 16 or self.dataset.n_member < 2 or self.dataset.n_holdout < 2:
            raise ConfigError("dataset needs size >= 16 and at least 2 images per split")
        self.attack.attack_list()
        self.attack.attack_config()
        self.distortion.kind_list()
        self.sweep.grid()


def _coerce(value: str, typ, where: str):
    try:
        if typ is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return typ(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {value!r} as {typ.__name__}") from exc


_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


def apply_setting(cfg: ExperimentConfig, section: str, key: str, value: str) -> None:
    if section not in {f.name for f in dataclasses.fields(cfg)}:
        raise ConfigError(f"unknown config section [{section}]")
    sec = getattr(cfg, section)
    fields = {f.name: f for f in dataclasses.fields(sec)}
    if key not in fields:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    typ = _TYPES[fields[key].type] if isinstance(fields[key].type, str) else fields[key].type
    setattr(sec, key, _coerce(value, typ, f"[{section}] {key}"))


def load_config(path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Read an INI file (optional) and apply ``section.key=value`` overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} not found")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            for key, value in parser.items(section):
                apply_setting(cfg, section, key, value)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        apply_setting(cfg, section, key, value)
    cfg.validate()
    return cfg


def dump_config(cfg: ExperimentConfig, path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    for name, section in cfg.to_dict().items():
        parser[name] = {k: str(v).lower() if isinstance(v, bool) else str(v) for k, v in section.items()}
    with open(path, "w") as fh:
        parser.write(fh)
