"""Experiment configuration: defaults pinned to the operating point used
throughout (k=350, M=16, MA=10, mask on, T=1), an INI-style config file with
a [defaults] block, and CLI-flag overrides."""

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from bowreid.descriptor import MaskParams
from bowreid.errors import ConfigError

CHANNELS = ("cn", "hs", "cn+hs")
MULTI_QUERY_MODES = ("off", "avg", "max")
IDF_VARIANTS = ("standard", "avg")


@dataclass(frozen=True)
class ExperimentConfig:
    data_root: str = ""
    layout: str = "market"
    out_dir: str = "out"
    cn_table: str = ""          # empty -> synthetic fallback table
    k: int = 350
    M: int = 16
    ma: int = 10
    patch_size: int = 4
    patch_step: int = 4
    height: int = 128
    width: int = 64
    mask: bool = True
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    idf: str = "standard"
    multi_query: str = "off"    # off | avg | max
    rerank_t: int = 1
    channels: str = "cn"        # cn | hs | cn+hs
    seed: int = 0
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-4
    max_train_descriptors: int = 200000
    threads: int = 1

    def __post_init__(self):
        if self.channels not in CHANNELS:
            raise ConfigError(f"channels must be one of {CHANNELS}")
        if self.multi_query not in MULTI_QUERY_MODES:
            raise ConfigError(f"multi_query must be one of {MULTI_QUERY_MODES}")
        if self.idf not in IDF_VARIANTS:
            raise ConfigError(f"idf must be one of {IDF_VARIANTS}")
        if self.k < 1 or self.M < 1 or self.ma < 1:
            raise ConfigError("k, M and ma must be positive")
        if self.ma > self.k:
            raise ConfigError(f"ma={self.ma} cannot exceed k={self.k}")
        if self.rerank_t < 0:
            raise ConfigError("rerank_t must be >= 0")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ConfigError("sigma must be positive")

    def channel_list(self):
        return self.channels.split("+")

    def mask_params(self):
        if not self.mask:
            return None
        return MaskParams(sigma_x=self.sigma_x, sigma_y=self.sigma_y)


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(name, kind, raw):
    try:
        if kind is bool:
            return _BOOL[str(raw).strip().lower()]
        return kind(raw)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value {raw!r} for option {name}") from exc


def load_config(path=None, overrides=None):
    """Config file values, then overrides (e.g. parsed CLI flags), on top of
    the defaults."""
    cfg = ExperimentConfig()
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(ExperimentConfig)}
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        parser = configparser.ConfigParser()
        parser.optionxform = str  # option names are case-sensitive (M vs ma)
        try:
            parser.read(p)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        if not parser.has_section("defaults"):
            raise ConfigError(f"{p}: missing [defaults] section")
        for name, raw in parser.items("defaults"):
            if name not in types:
                raise ConfigError(f"{p}: unknown option {name!r}")
            values[name] = _coerce(name, types[name], raw)
    if overrides:
        for name, val in overrides.items():
            if val is None:
                continue
            if name not in types:
                raise ConfigError(f"unknown option {name!r}")
            values[name] = _coerce(name, types[name], val)
    return replace(cfg, **values)
