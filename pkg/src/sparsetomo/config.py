"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments, lists are comma separated.  Class
assignments use one key per class::

    class.1 = 12, 40, 41, 77        # first id is the generating profile
    class_align.1 = procrustes      # or "weights"
"""

import hashlib
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

_PI_EXPR = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.eE+-]+))?\s*$")


def _float(text):
    m = _PI_EXPR.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) not in ("", None) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    return float(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text):
    return [_float(v) for v in text.split(",") if v.strip()]


@dataclass
class RunConfig:
    # simulation
    fixture: str = ""
    mixture: str = ""
    T: int = 64
    L: float = 2.2
    noise_sd: float = 1e-4
    N: int = 150
    seed: int = 0
    # deconvolution
    w: float = math.pi / 3
    kernel_sigma2: float = 0.46**2
    t_factor: float = 0.95
    t_max_factor: float = 1.0
    max_steps: int = 2000
    allow_negative: bool = False
    expected_K: int = 4
    # shape recovery
    full_K: int = 0
    roman_samples: int = 1000
    roman_seed: int = 0
    classes: dict = field(default_factory=dict)
    class_align: dict = field(default_factory=dict)
    # reconstruction
    sigma2_grid: list = field(default_factory=list)
    sigma2_grid_points: int = 21
    weight_radius_sd: float = 3.0
    volume_V: int = 48
    volume_extent: float = 2.2
    # io
    stack: str = "profiles.pfs"
    rotations: str = ""
    truth: str = ""
    estimates: str = "estimates.txt"
    output_dir: str = "out"
    reconstruction: str = ""
    residual_profiles: int = 3
    figures: bool = True
    jobs: int = 0
    source_text: str = field(default="", repr=False)

    @property
    def rotations_path(self):
        return self.rotations or self.stack + ".rotations"

    @property
    def reconstruction_path(self):
        return self.reconstruction or str(Path(self.output_dir) / "reconstruction.rm3")

    def digest(self):
        return hashlib.sha256(self.source_text.encode()).hexdigest()[:16]

    def validate(self):
        positive = ["T", "L", "w", "kernel_sigma2", "t_factor", "t_max_factor", "max_steps",
                    "expected_K", "roman_samples", "sigma2_grid_points", "volume_V",
                    "volume_extent"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be nonnegative")
        if self.N < 0:
            raise ConfigError("N must be nonnegative")
        if self.t_factor > self.t_max_factor:
            raise ConfigError("t_factor may not exceed t_max_factor")
        if any(v <= 0 for v in self.sigma2_grid):
            raise ConfigError("sigma2_grid values must be positive")
        for cid, mode in self.class_align.items():
            if mode not in ("procrustes", "weights"):
                raise ConfigError(f"class_align.{cid} must be 'procrustes' or 'weights'")
            if cid not in self.classes:
                raise ConfigError(f"class_align.{cid} names an undefined class")
        return self


_SCALAR = {f.name: f.type for f in fields(RunConfig)
           if f.name not in ("classes", "class_align", "sigma2_grid", "source_text")}
_PARSERS = {int: int, float: _float, str: str, bool: _bool,
            "int": int, "float": _float, "str": str, "bool": _bool}


def _assign(cfg, key, value):
    key = key.strip()
    value = value.strip()
    try:
        if key.startswith("class."):
            cid = int(key.split(".", 1)[1])
            ids = [int(v) for v in value.split(",") if v.strip()]
            if not ids:
                raise ValueError("empty class")
            cfg.classes[cid] = ids
        elif key.startswith("class_align."):
            cfg.class_align[int(key.split(".", 1)[1])] = value
        elif key == "sigma2_grid":
            cfg.sigma2_grid = _float_list(value)
        elif key in _SCALAR:
            setattr(cfg, key, _PARSERS[_SCALAR[key]](value))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc


def parse_config(text, overrides=()):
    cfg = RunConfig()
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        _assign(cfg, key, value)
        lines.append(f"{key.strip()}={value.strip()}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        _assign(cfg, key, value)
        lines.append(f"{key.strip()}={value.strip()}")
    cfg.source_text = "\n".join(sorted(lines))
    return cfg.validate()


def load_config(path=None, overrides=()):
    text = ""
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)
