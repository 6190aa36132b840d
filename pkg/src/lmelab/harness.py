"""Run configuration, output writing, and reproducibility plumbing.

Configs are flat UTF-8 key=value documents ('#' comments allowed); which
keys are legal depends on the subcommand, unknown or duplicate keys are
rejected by name, and every applied default is echoed into the manifest so
a run is fully described by its outputs.  Data files are CSV with 17
significant digits and LF endings; each run writes exactly one JSON
manifest describing all of its files.
"""

from __future__ import annotations

import json
import os
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import ConfigError

__all__ = [
    "RunConfig",
    "RunManifest",
    "SCHEMAS",
    "parse_config",
    "config_from_file",
    "format_real",
    "write_csv",
    "write_json",
    "write_manifest",
    "version_string",
]


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _positive_q(value: float) -> float:
    if not value > 0.5:
        raise ConfigError(f"q must exceed 1/2, got {value}")
    return value


def _positive(name):
    def check(value):
        if not value > 0:
            raise ConfigError(f"{name} must be positive, got {value}")
        return value

    return check


# key -> (parser, default or REQUIRED, optional validator)
_REQUIRED = object()

SCHEMAS: dict[str, dict] = {
    "analytics": {
        "q": (float, 2.0, _positive_q),
        "b": (float, 0.5, _positive("b")),
        "kmax": (int, 6, None),
    },
    "theta-check": {
        "epsilons": (_float_list, (1e-1, 1e-2, 1e-3), None),
        "samples": (int, 1_000_000, _positive("samples")),
        "seed": (int, 0, None),
    },
    "simulate-lme": {
        "q": (float, _REQUIRED, _positive_q),
        "b": (float, _REQUIRED, _positive("b")),
        "n_max": (int, 10_000, _positive("n_max")),
        "pool_size": (int, 100_000, _positive("pool_size")),
        "seed": (int, 0, None),
        "track_powers": (_float_list, (2.0, 3.0), None),
        "checkpoints": (_int_list, (), None),
    },
    "moments": {
        "q": (float, _REQUIRED, _positive_q),
        "kmax": (int, 8, _positive("kmax")),
    },
    "laplace": {
        "q": (float, 0.75, _positive_q),
        "b": (float, 0.5, _positive("b")),
        "init": (str, "delta", None),
        "n_schedule": (int, 4000, _positive("n_schedule")),
        "refine": (_bool, True, None),
    },
    "brw": {
        "mode": (str, "cascade", None),
        "beta": (float, 0.8326, _positive("beta")),
        "p": (float, 2.0, _positive("p")),
        "depth": (int, 40, _positive("depth")),
        "replicas": (int, 1_000_000, _positive("replicas")),
        "seed": (int, 0, None),
    },
    "rg-chain": {
        "N": (int, 4096, _positive("N")),
        "b": (float, 0.3, _positive("b")),
        "a": (float, 0.4, None),
        "n_max": (int, 100, _positive("n_max")),
        "q_list": (_float_list, (0.75, 2.0), None),
        "seed": (int, 0, None),
        "replicas": (int, 1, _positive("replicas")),
    },
    "prbm": {
        "N_list": (_int_list, (256, 512, 1024, 2048), None),
        "b": (float, 0.1, _positive("b")),
        "q": (float, 2.0, _positive("q")),
        "realizations": (int, 20, _positive("realizations")),
        "seed": (int, 0, None),
    },
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: dict
    seed: int = 0
    out_dir: str = "."
    threads: int = 1


@dataclass
class RunManifest:
    """Sidecar metadata; the one place wall time lives (data files stay
    byte-identical across reruns)."""

    subcommand: str
    config: dict
    version: str
    wall_time_s: float
    tolerances: dict
    files: list[str] = field(default_factory=list)


def parse_config(text: str, subcommand: str) -> dict:
    """Parse a flat key=value document against the subcommand's schema."""
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    schema = SCHEMAS[subcommand]
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}")
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for subcommand {subcommand!r}")
        raw[key] = value
    out = {}
    for key, (parser, default, validator) in schema.items():
        if key in raw:
            try:
                value = parser(raw[key])
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"key {key!r}: type mismatch ({exc})") from exc
        else:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key {key!r}")
            value = default
        if validator is not None:
            value = validator(value)
        out[key] = value
    return out


def config_from_file(path: str | Path, subcommand: str) -> dict:
    return parse_config(Path(path).read_text(encoding="utf-8"), subcommand)


def format_real(x: float) -> str:
    """17 significant digits, '.' decimal separator."""
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = [
            format_real(v) if isinstance(v, float) else str(v) for v in row
        ]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _json_default(obj):
    import numpy as np

    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"lmelab-{__version__}"


def write_manifest(
    out_dir: Path,
    subcommand: str,
    config: dict,
    files: list[str],
    wall_time_s: float,
    tolerances: dict | None = None,
) -> Path:
    manifest = RunManifest(
        subcommand=subcommand,
        config=config,
        version=version_string(),
        wall_time_s=wall_time_s,
        tolerances=tolerances or {},
        files=files,
    )
    path = out_dir / f"{subcommand}_manifest.json"
    write_json(
        path,
        {
            "subcommand": manifest.subcommand,
            "config": manifest.config,
            "version": manifest.version,
            "wall_time_s": manifest.wall_time_s,
            "tolerances": manifest.tolerances,
            "files": manifest.files,
        },
    )
    return path


def wall_clock() -> float:
    return time.monotonic()
