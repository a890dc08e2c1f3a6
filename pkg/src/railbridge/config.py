"""Flat key-value experiment configuration.

One file drives every CLI subcommand: source amplitudes and detection for
the simulation, homodyne efficiency and cutoffs for sampling and
reconstruction, bench rates for the calibration report. The format is one
`key = value` per line with `#` comments; values are typed per key and
unknown or malformed lines fail with their line number so a typo cannot
silently fall back to a default.

A loaded file must pin the physics keys explicitly (a run config is a lab
record, not a patch); the built-in `default_config` carries the bench
values for flag-only invocations.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Dict, Optional

from .protocol import SourceParams
from .rates import RateModel


class ConfigError(ValueError):
    """Bad configuration file or value; message carries line numbers."""


@dataclass(frozen=True)
class Config:
    # simulation
    gamma1: float = 0.20
    gamma23: float = 0.054
    alpha: Optional[float] = None  # none -> balanced drive (= gamma1)
    alpha_phase: float = 0.0
    eta_d: float = 0.03
    order: str = "exact"
    cutoff: int = 2
    # homodyne and reconstruction
    eta: float = 0.5
    tomo_cutoff: int = 4
    samples: int = 2000
    # seed is tri-state: flag > file > RAILBRIDGE_SEED env > 0
    seed: Optional[int] = None
    # bench rates
    R_L: float = 76e6
    R_alpha: float = 22e3
    R_gamma1: float = 22e3
    R_gamma23: float = 1.7e3
    R_cc: float = 51.0
    projector_loss_factor: float = 4.0

    def __post_init__(self) -> None:
        if self.order not in ("pert", "exact"):
            raise ConfigError(f"order must be 'pert' or 'exact', got {self.order!r}")
        if self.cutoff < 1:
            raise ConfigError(f"cutoff={self.cutoff} must be >= 1")
        if self.tomo_cutoff < 1:
            raise ConfigError(f"tomo_cutoff={self.tomo_cutoff} must be >= 1")
        if self.samples < 1:
            raise ConfigError(f"samples={self.samples} must be >= 1")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta={self.eta} outside (0, 1]")

    def to_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# required in every loaded file; the rest default
REQUIRED_KEYS = ("gamma1", "gamma23", "eta_d", "eta", "order", "cutoff", "seed")

_OPTIONAL_FLOAT = object()  # sentinel: float or the word none
_OPTIONAL_INT = object()  # sentinel: int or the word none

KEY_TYPES: Dict[str, object] = {
    "gamma1": float,
    "gamma23": float,
    "alpha": _OPTIONAL_FLOAT,
    "alpha_phase": float,
    "eta_d": float,
    "order": str,
    "cutoff": int,
    "eta": float,
    "tomo_cutoff": int,
    "samples": int,
    "seed": _OPTIONAL_INT,
    "R_L": float,
    "R_alpha": float,
    "R_gamma1": float,
    "R_gamma23": float,
    "R_cc": float,
    "projector_loss_factor": float,
}


def default_config() -> Config:
    return Config()


def _parse_value(key: str, raw: str, lineno: int) -> object:
    kind = KEY_TYPES[key]
    if kind in (_OPTIONAL_FLOAT, _OPTIONAL_INT):
        if raw.lower() == "none":
            return None
        kind = float if kind is _OPTIONAL_FLOAT else int
    if kind is str:
        return raw
    try:
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        name = "an integer" if kind is int else "a number"
        raise ConfigError(
            f"line {lineno}: value for {key!r} must be {name}, got {raw!r}"
        ) from None


def parse_config(text: str, source: str = "<config>") -> Config:
    """Parse config text; every violation names its line number."""
    seen: Dict[str, object] = {}
    lines_of: Dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value'")
        key, _, raw = (part.strip() for part in body.partition("="))
        if key not in KEY_TYPES:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in seen:
            first = lines_of[key]
            raise ConfigError(
                f"{source}: line {lineno}: duplicate key {key!r} (first on "
                f"line {first})"
            )
        try:
            seen[key] = _parse_value(key, raw, lineno)
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from None
        lines_of[key] = lineno
    missing = [k for k in REQUIRED_KEYS if k not in seen]
    if missing:
        raise ConfigError(f"{source}: missing required keys: {', '.join(missing)}")
    try:
        return Config(**seen)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str) -> Config:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=path)


def format_config(config: Config) -> str:
    """Render a config as parseable text (inverse of parse_config)."""
    lines = []
    for f in fields(Config):
        v = getattr(config, f.name)
        if v is None:
            v = "none"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def to_source_params(config: Config) -> SourceParams:
    return SourceParams(
        gamma1=config.gamma1,
        gamma23=config.gamma23,
        alpha=config.alpha,
        phi_alpha=config.alpha_phase,
        eta_d=config.eta_d,
        order=config.order,
    )


def to_rate_model(config: Config) -> RateModel:
    return RateModel(
        R_L=config.R_L,
        R_alpha=config.R_alpha,
        R_gamma1=config.R_gamma1,
        R_gamma23=config.R_gamma23,
        R_cc=config.R_cc,
        projector_loss_factor=config.projector_loss_factor,
    )
