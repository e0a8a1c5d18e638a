"""Configuration types, validation and the TOML config file format.

Durations live in integer nanoseconds in memory and in microseconds in the
config file.  SNR-related quantities (Tx powers, noise figure) are dB at this
boundary only; the simulator converts to linear ratios.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import tomli
import tomli_w


class Scheme(str, enum.Enum):
    ORIGINAL = "original"
    RSMS_S = "rsms-s"
    RSMS_C = "rsms-c"
    RSMS_SC = "rsms-sc"

    @property
    def random_sensing(self) -> bool:
        return self in (Scheme.RSMS_S, Scheme.RSMS_SC)

    @property
    def random_comm(self) -> bool:
        return self in (Scheme.RSMS_C, Scheme.RSMS_SC)


class Mode(str, enum.Enum):
    NON_COOPERATIVE = "non-cooperative"
    COOPERATIVE = "cooperative"


class CvOffdiag(str, enum.Enum):
    """Off-diagonal convention of the CV process-noise block."""

    PRINTED = "printed"  # g_s * T'^2
    STANDARD = "standard"  # g_s * T'^2 / 2


def us_to_ns(us: float) -> int:
    return int(round(us * 1000.0))


def ns_to_us(ns: int) -> float:
    return ns / 1000.0


@dataclass(frozen=True)
class TimingConfig:
    """MAC timing.  All durations are integer nanoseconds."""

    sifs: int = 16_000
    tf: int = 10_800
    cts: int = 4_600
    ack: int = 4_600
    ndp_base: int = 44_000
    ltf_symbols: int = 4
    ltf_repetitions: int = 4
    window: int = 10_240_000
    n_windows: int = 200
    difs: int = 34_000
    slot: int = 9_000
    cw: int = 15

    @property
    def ndp(self) -> int:
        # 8 us per EHT-LTF symbol per repetition
        return self.ndp_base + 8_000 * self.ltf_symbols * self.ltf_repetitions


@dataclass(frozen=True)
class NetworkConfig:
    n_links: int = 3
    n_stas: int = 12
    carrier_freq: tuple[float, ...] = (2.437e9, 5.250e9, 6.295e9)
    bandwidth: tuple[float, ...] = (40e6, 80e6, 160e6)
    ap_tx_power: float = 43.0
    sta_tx_power: float = 23.0
    mimo: tuple[int, int] = (4, 2)
    noise_figure: float = 7.0
    arena_half_width: float = 10.0
    dl_arrival_rate: float = 20e6
    alpha: float = 0.5
    k: int = 4
    process_noise_intensity: float = 0.1
    scheme: Scheme = Scheme.ORIGINAL
    mode: Mode = Mode.NON_COOPERATIVE
    seed: int = 0
    cv_offdiag: CvOffdiag = CvOffdiag.STANDARD

    def replace(self, **changes: Any) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)


def validate_config(cfg: NetworkConfig, timing: TimingConfig) -> list[str]:
    """Return every invariant violation as a readable message.

    An empty list means both configs are valid.
    """
    out: list[str] = []
    if not 0.0 < cfg.alpha < 1.0:
        out.append("alpha must lie in open interval (0,1)")
    if cfg.k < 3:
        out.append("k must allow a trilateration triple (k ≥ 3)")
    if cfg.n_links < 1:
        out.append("n_links must be >= 1")
    if cfg.n_stas < 1:
        out.append("n_stas must be >= 1")
    if len(cfg.carrier_freq) != cfg.n_links:
        out.append("carrier_freq needs one entry per link")
    if len(cfg.bandwidth) != cfg.n_links:
        out.append("bandwidth needs one entry per link")
    if any(not (math.isfinite(b) and b > 0) for b in cfg.bandwidth):
        out.append("bandwidth entries must be positive")
    if any(not (math.isfinite(f) and f > 0) for f in cfg.carrier_freq):
        out.append("carrier_freq entries must be positive")
    if len(cfg.mimo) != 2 or min(cfg.mimo) < 1:
        out.append("mimo must be (n_tx, n_rx) with both >= 1")
    if not cfg.arena_half_width > 0:
        out.append("arena_half_width must be positive")
    if not cfg.dl_arrival_rate >= 0:
        out.append("dl_arrival_rate must be non-negative")
    if not cfg.process_noise_intensity > 0:
        out.append("process_noise_intensity must be positive")
    if not 0 <= cfg.seed < 2**63:
        out.append("seed must be a non-negative 64-bit integer")

    for name in ("sifs", "tf", "cts", "ack", "ndp_base", "window", "difs", "slot"):
        if getattr(timing, name) <= 0:
            out.append(f"{name} must be a positive duration")
    if timing.ltf_symbols < 1:
        out.append("ltf_symbols must be >= 1")
    if timing.ltf_repetitions < 1:
        out.append("ltf_repetitions must be >= 1")
    if timing.n_windows < 1:
        out.append("n_windows must be >= 1")
    if timing.cw < 0:
        out.append("cw must be >= 0")
    return out


# --- config file -----------------------------------------------------------

_TIMING_US = ("sifs", "tf", "cts", "ack", "ndp_base", "window", "difs", "slot")
_TIMING_COUNT = ("ltf_symbols", "ltf_repetitions", "n_windows", "cw")
_NET_KEYS = {f.name for f in dataclasses.fields(NetworkConfig)}


class ConfigError(ValueError):
    """Raised when a config file cannot be turned into valid configs."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def config_to_dict(cfg: NetworkConfig, timing: TimingConfig) -> dict[str, Any]:
    net: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, enum.Enum):
            v = v.value
        elif isinstance(v, tuple):
            v = list(v)
        net[f.name] = v
    tim: dict[str, Any] = {f"{k}_us": ns_to_us(getattr(timing, k)) for k in _TIMING_US}
    tim.update({k: getattr(timing, k) for k in _TIMING_COUNT})
    return {"network": net, "timing": tim}


def config_from_dict(data: dict[str, Any]) -> tuple[NetworkConfig, TimingConfig]:
    """Build configs from a parsed file.  Unknown keys are errors."""
    errors: list[str] = []
    for key in data:
        if key not in ("network", "timing"):
            errors.append(f"unknown top-level key {key!r}")
    net = dict(data.get("network", {}))
    tim = dict(data.get("timing", {}))
    for key in net:
        if key not in _NET_KEYS:
            errors.append(f"unknown key network.{key}")
    known_t = {f"{k}_us" for k in _TIMING_US} | set(_TIMING_COUNT)
    for key in tim:
        if key not in known_t:
            errors.append(f"unknown key timing.{key}")
    if errors:
        raise ConfigError(errors)

    kwargs: dict[str, Any] = {}
    try:
        for key, v in net.items():
            if key in ("carrier_freq", "bandwidth"):
                v = tuple(float(x) for x in v)
            elif key == "mimo":
                v = tuple(int(x) for x in v)
            elif key == "scheme":
                v = Scheme(v)
            elif key == "mode":
                v = Mode(v)
            elif key == "cv_offdiag":
                v = CvOffdiag(v)
            elif key in ("n_links", "n_stas", "k", "seed"):
                v = int(v)
            else:
                v = float(v)
            kwargs[key] = v
        tkw: dict[str, Any] = {}
        for key, v in tim.items():
            if key.endswith("_us"):
                tkw[key[:-3]] = us_to_ns(float(v))
            else:
                tkw[key] = int(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"bad value: {exc}"]) from exc

    cfg = NetworkConfig(**kwargs)
    timing = TimingConfig(**tkw)
    violations = validate_config(cfg, timing)
    if violations:
        raise ConfigError(violations)
    return cfg, timing


def dumps_config(cfg: NetworkConfig, timing: TimingConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg, timing))


def loads_config(text: str) -> tuple[NetworkConfig, TimingConfig]:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"not valid TOML: {exc}"]) from exc
    return config_from_dict(data)


def load_config(path: str | Path) -> tuple[NetworkConfig, TimingConfig]:
    return loads_config(Path(path).read_text(encoding="utf-8"))


def save_config(path: str | Path, cfg: NetworkConfig, timing: TimingConfig) -> None:
    Path(path).write_text(dumps_config(cfg, timing), encoding="utf-8")
