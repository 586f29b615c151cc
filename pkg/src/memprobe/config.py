"""Experiment configuration: a flat key=value text format with section
prefixes (e.g. ``train.lr=1e-3``), assembled into nested dataclasses.

Unknown keys are rejected so typos fail loudly.  CLI flags override file
values; both override the documented defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .metrics import EvalThresholds
from .recovery import RecoveryConfig
from .trainer import TrainConfig


@dataclass
class DatasetConfig:
    path: str = ""
    synthetic: bool = True
    n: int = 20
    height: int = 16
    width: int = 16
    channels: int = 1
    limit: int | None = None

    @property
    def dim(self) -> int:
        return self.height * self.width * self.channels


@dataclass
class ArchConfig:
    kind: str = "deep"  # deep | tied
    num_layers: int = 10
    latent: int | None = None  # default 2n, set at runtime
    activation: str = "leaky_relu"
    act_param: float = 0.2


@dataclass
class DegradeConfig:
    pattern: str = "uniform_random"
    p_erase: float = 0.5
    fraction: float = 0.25
    period: int = 4
    duty: float = 0.5
    side: str = "left"
    mask_path: str = ""
    sigma_eps: float = 0.0
    noise_on_kept_only: bool = False

    def pattern_params(self) -> dict:
        return {
            "uniform_random": {"p_erase": self.p_erase},
            "center_block": {"fraction": self.fraction},
            "stripes": {"period": self.period, "duty": self.duty},
            "half": {"side": self.side},
            "from_file": {"path": self.mask_path},
        }[self.pattern]


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    recover: RecoveryConfig = field(default_factory=RecoveryConfig)
    thresholds: EvalThresholds = field(default_factory=EvalThresholds)
    out_dir: str = "out"
    seed: int = 42
    mode: str = "unknown-h"  # unknown-h | known-h | baseline
    gamma_set: bool = False  # True once recover.gamma was given explicitly


_SECTIONS = {
    "dataset": ("dataset", {
        "path": str, "synthetic": bool, "n": int, "height": int, "width": int,
        "channels": int, "limit": int,
    }),
    "arch": ("arch", {
        "kind": str, "num_layers": int, "latent": int, "activation": str,
        "act_param": float,
    }),
    "train": ("train", {
        "lr": ("learning_rate", float), "learning_rate": float, "beta1": float,
        "beta2": float, "eps": float, "batch_size": str, "seed": int,
        "max_epochs": int, "decay_patience": int, "decay_factor": float,
        "loss_checkpoints": ("loss_checkpoints", lambda s: tuple(
            float(v) for v in s.split(","))),
    }),
    "degrade": ("degrade", {
        "pattern": str, "p_erase": float, "fraction": float, "period": int,
        "duty": float, "side": str, "mask_path": str, "sigma_eps": float,
        "noise_on_kept_only": bool,
    }),
    "recover": ("recover", {
        "gamma": float, "admm_iters": int, "outer_tol": float, "patience": int,
        "max_outer": int, "mask_init": str, "seed": int,
    }),
    "eval": ("thresholds", {"accurate_mse": float, "approximate_mse": float}),
}

_TOP_LEVEL = {"out": ("out_dir", str), "seed": ("seed", int), "mode": ("mode", str)}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def apply_key(config: ExperimentConfig, key: str, value: str):
    key = key.strip()
    value = value.strip()
    if key in _TOP_LEVEL:
        attr, conv = _TOP_LEVEL[key]
        setattr(config, attr, conv(value))
        return
    if "." not in key:
        raise KeyError(f"unknown config key {key!r}")
    section, name = key.split(".", 1)
    if section not in _SECTIONS:
        raise KeyError(f"unknown config section {section!r}")
    attr, fields = _SECTIONS[section]
    if name not in fields:
        raise KeyError(f"unknown config key {key!r}")
    spec = fields[name]
    if isinstance(spec, tuple):
        name, conv = spec
    else:
        conv = spec
    if conv is bool:
        parsed = _parse_bool(value)
    elif conv is str:
        parsed = value
    else:
        parsed = conv(value)
    target = getattr(config, attr)
    if name == "batch_size" and parsed != "full":
        parsed = int(parsed)
    setattr(target, name, parsed)
    if section == "recover" and name == "gamma":
        config.gamma_set = True
    if hasattr(target, "__post_init__"):
        target.__post_init__()


def load_config(path) -> ExperimentConfig:
    config = ExperimentConfig()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            try:
                apply_key(config, key, value)
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return config
