"""Flat key/value configuration files with dotted section prefixes.

Format, one entry per line:

    sim.capacity = 100
    arrival.base_rate = 0.33
    arrival.dow_multipliers = 0.9, 0.95, 1.0, 1.05, 1.1, 1.2, 0.8
    sim.theta.0.3 = 0.005405

Blank lines and '#' comments are ignored.  Values stay strings here; the
consumers coerce.  Every file-provided key can be overridden on the command
line with repeated `--set section.key=value` flags.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .errors import ConfigError

__all__ = ["read_config", "apply_overrides", "config_digest", "write_provenance"]


def read_config(path: str | Path | None) -> dict[str, str]:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {line_no}: expected 'key = value'")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}: line {line_no}: empty key")
        out[key] = val.strip()
    return out


def apply_overrides(cfg: dict[str, str], overrides: list[str]) -> dict[str, str]:
    out = dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def config_digest(cfg: dict[str, str]) -> str:
    payload = "\n".join(f"{k} = {cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(payload.encode()).hexdigest()


def write_provenance(output_path: str | Path, cfg: dict[str, str], seed: int | None) -> Path:
    """Sidecar recording the effective configuration next to an artifact."""
    output_path = Path(output_path)
    sidecar = output_path.with_name(output_path.name + ".provenance.txt")
    lines = [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    if seed is not None:
        lines.append(f"seed = {seed}")
    lines.append(f"config_sha256 = {config_digest(cfg)}")
    sidecar.write_text("\n".join(lines) + "\n")
    return sidecar
