"""Run configuration: dotted key-value files plus CLI overrides.

Config files are plain text, one `dotted.key = value` per line, `#` comments.
Every key can also be overridden on the command line as `--dotted.key value`,
so a run is fully described by (file, overrides) and its config hash.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..errors import ConfigError

SCHEMES = (
    "baseline",
    "perfect_csi",
    "per_re_demapper",
    "conv_demapper",
    "neural_receiver",
    "end_to_end",
)
PATTERNS = ("baseline", "pilotless")

# dotted-key defaults; single source of truth for names and types
_DEFAULTS = {
    "carrier_hz": 3.5e9,
    "subcarriers": 72,
    "spacing_hz": 30e3,
    "symbols": 14,
    "delay_spread_s": 100e-9,
    "speed_kmh": 50.0,
    "oscillators": 32,
    "scheme": "baseline",
    "pattern": "",  # empty = inferred from scheme
    "code.k_info": 682,
    "code.n_tx": 1024,
    "code.max_iters": 40,
    "snr.start_db": 0.0,
    "snr.stop_db": 20.0,
    "snr.step_db": 1.0,
    "stop.block_errors": 100,
    "stop.max_ttis": 2000,
    "seed_base": 1,
    "workers": 1,
    "batch_ttis": 25,
    "checkpoint": "",
    "train.steps": 0,  # 0 = per-scheme default budget (DEFAULT_TRAIN_STEPS)
    "train.batch_ttis": 4,
    "train.lr": 2e-3,
    "train.blocks": 4,
    "train.channels": 32,
    "train.snapshot_every": 0,
    "mac.episodes": 800,
    "mac.population": 24,
    "mac.steps": 24,
    "mac.p_loss": 0.2,
    "mac.epsilon": 0.1,
    "mac.lr": 0.15,
    "mac.discount": 0.95,
    "mac.eval_episodes": 200,
    "mac.reward_shared": False,
}


def parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"expected boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as e:
            raise ConfigError(f"expected integer, got {raw!r}") from e
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as e:
            raise ConfigError(f"expected number, got {raw!r}") from e
    return raw


def read_config_file(path: str) -> dict:
    """Parse a dotted key-value file into {key: raw-string}."""
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            out[key.strip()] = raw.strip()
    return out


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults <- file <- CLI overrides, with type checking against defaults."""
    merged = dict(_DEFAULTS)
    for source in (file_values or {}), (overrides or {}):
        for key, raw in source.items():
            if key not in _DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = parse_value(str(raw), _DEFAULTS[key]) if isinstance(raw, str) else raw
    return merged


def config_hash(values: dict) -> str:
    canon = "\n".join(f"{k}={values[k]!r}" for k in sorted(values))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class LinkConfig:
    carrier_hz: float = 3.5e9
    subcarriers: int = 72
    spacing_hz: float = 30e3
    symbols: int = 14
    delay_spread_s: float = 100e-9
    speed_kmh: float = 50.0
    oscillators: int = 32
    scheme: str = "baseline"
    pattern: str = "baseline"
    k_info: int = 682
    n_tx: int = 1024
    max_iters: int = 40
    snr_start_db: float = 0.0
    snr_stop_db: float = 20.0
    snr_step_db: float = 1.0
    stop_block_errors: int = 100
    stop_max_ttis: int = 2000
    seed_base: int = 1
    workers: int = 1
    batch_ttis: int = 25
    checkpoint: str = ""

    def __post_init__(self):
        for name in ("carrier_hz", "spacing_hz", "delay_spread_s", "snr_step_db"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("subcarriers", "symbols", "oscillators", "k_info", "n_tx",
                     "max_iters", "stop_block_errors", "stop_max_ttis",
                     "workers", "batch_ttis"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.speed_kmh < 0:
            raise ConfigError("speed_kmh must be >= 0")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown pilot pattern {self.pattern!r}")
        if self.scheme == "end_to_end" and self.pattern != "pilotless":
            raise ConfigError("end_to_end requires the pilotless pattern")
        if self.scheme != "end_to_end" and self.pattern == "pilotless":
            raise ConfigError(f"{self.scheme} requires the baseline pilot pattern")
        if self.snr_stop_db < self.snr_start_db:
            raise ConfigError("snr stop below start")

    @property
    def esno_grid_db(self) -> list:
        out, v = [], self.snr_start_db
        while v <= self.snr_stop_db + 1e-9:
            out.append(round(v, 9))
            v += self.snr_step_db
        return out


def link_config_from(values: dict) -> LinkConfig:
    scheme = values["scheme"]
    pattern = values["pattern"] or ("pilotless" if scheme == "end_to_end" else "baseline")
    return LinkConfig(
        carrier_hz=values["carrier_hz"],
        subcarriers=values["subcarriers"],
        spacing_hz=values["spacing_hz"],
        symbols=values["symbols"],
        delay_spread_s=values["delay_spread_s"],
        speed_kmh=values["speed_kmh"],
        oscillators=values["oscillators"],
        scheme=scheme,
        pattern=pattern,
        k_info=values["code.k_info"],
        n_tx=values["code.n_tx"],
        max_iters=values["code.max_iters"],
        snr_start_db=values["snr.start_db"],
        snr_stop_db=values["snr.stop_db"],
        snr_step_db=values["snr.step_db"],
        stop_block_errors=values["stop.block_errors"],
        stop_max_ttis=values["stop.max_ttis"],
        seed_base=values["seed_base"],
        workers=values["workers"],
        batch_ttis=values["batch_ttis"],
        checkpoint=values["checkpoint"],
    )


# default optimization budgets, sized so each scheme converges on a
# laptop-class CPU: the shared-weight demappers need fewer samples per
# parameter than the 936 independent per-RE networks; the receivers that
# must also learn channel estimation need the most
DEFAULT_TRAIN_STEPS = {
    "per_re_demapper": 3000,
    "conv_demapper": 2500,
    "neural_receiver": 4000,
    "end_to_end": 4000,
}


@dataclass(frozen=True)
class TrainConfig:
    scheme: str = "per_re_demapper"
    steps: int = 0  # 0 = the scheme's DEFAULT_TRAIN_STEPS budget
    batch_ttis: int = 4
    lr: float = 2e-3
    blocks: int = 4
    channels: int = 32
    snapshot_every: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES[2:]:
            raise ConfigError(f"scheme {self.scheme!r} is not trainable")
        if self.steps < 0 or self.batch_ttis < 1:
            raise ConfigError("steps must be >= 0 and batch_ttis >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.blocks < 1 or self.channels < 1:
            raise ConfigError("blocks and channels must be >= 1")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be >= 0")

    @property
    def budget(self) -> int:
        """Steps to run: the explicit count, or the scheme's default."""
        return self.steps if self.steps else DEFAULT_TRAIN_STEPS[self.scheme]


def train_config_from(values: dict) -> TrainConfig:
    return TrainConfig(
        scheme=values["scheme"],
        steps=values["train.steps"],
        batch_ttis=values["train.batch_ttis"],
        lr=values["train.lr"],
        blocks=values["train.blocks"],
        channels=values["train.channels"],
        snapshot_every=values["train.snapshot_every"],
    )


@dataclass(frozen=True)
class MacConfig:
    episodes: int = 800
    population: int = 24
    steps: int = 24
    p_loss: float = 0.2
    epsilon: float = 0.1
    lr: float = 0.15
    discount: float = 0.95
    eval_episodes: int = 200
    reward_shared: bool = False
    seed_base: int = 1

    def __post_init__(self):
        if self.episodes < 1 or self.population < 1 or self.eval_episodes < 1:
            raise ConfigError("episodes, population, eval_episodes must be >= 1")
        if self.steps < 8:
            raise ConfigError("steps must be >= 8 (arrival window needs room)")
        if not 0.0 <= self.p_loss <= 1.0:
            raise ConfigError("p_loss must be in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in [0, 1]")
        if not 0.0 < self.lr <= 1.0:
            raise ConfigError("lr must be in (0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError("discount must be in [0, 1)")


def mac_config_from(values: dict) -> MacConfig:
    return MacConfig(
        episodes=values["mac.episodes"],
        population=values["mac.population"],
        steps=values["mac.steps"],
        p_loss=values["mac.p_loss"],
        epsilon=values["mac.epsilon"],
        lr=values["mac.lr"],
        discount=values["mac.discount"],
        eval_episodes=values["mac.eval_episodes"],
        reward_shared=values["mac.reward_shared"],
        seed_base=values["seed_base"],
    )
