"""Pipeline configuration stored as an INI-style text file.

Sections and keys::

    [depth]   d_min d_max n_bins f_base
    [slic]    step lambda_lab lambda_d lambda_pix iters exhaustive
    [fusion]  lambda0 lambda1 lambda2
    [mask]    threshold_px
    [eval]    min_depth max_depth median_scaling eigen_crop

``none`` is accepted for the optional keys ``depth.f_base`` and
``slic.lambda_pix``. ``;`` and ``#`` start comments, also after a value.
Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .depth_codec import DEFAULT_D_MAX, DEFAULT_D_MIN, DEFAULT_N_BINS, make_bins
from .errors import ConfigError
from .flow_mask import DEFAULT_THRESHOLD_PX
from .fusion import FusionWeights
from .metrics import EvalConfig
from .slic3d import SlicParams


@dataclass(frozen=True)
class DepthSection:
    d_min: float = DEFAULT_D_MIN
    d_max: float = DEFAULT_D_MAX
    n_bins: int = DEFAULT_N_BINS
    f_base: float | None = None


@dataclass(frozen=True)
class SlicSection:
    step: int = 16
    lambda_lab: float = 0.1
    lambda_d: float = 0.2
    lambda_pix: float | None = None
    iters: int = 10
    exhaustive: bool = False


@dataclass(frozen=True)
class FusionSection:
    lambda0: float = 0.001
    lambda1: float = 1.0
    lambda2: float = 0.1


@dataclass(frozen=True)
class MaskSection:
    threshold_px: float = DEFAULT_THRESHOLD_PX


@dataclass(frozen=True)
class EvalSection:
    min_depth: float = 1e-3
    max_depth: float = 80.0
    median_scaling: bool = False
    eigen_crop: bool = False


@dataclass(frozen=True)
class Config:
    depth: DepthSection = field(default_factory=DepthSection)
    slic: SlicSection = field(default_factory=SlicSection)
    fusion: FusionSection = field(default_factory=FusionSection)
    mask: MaskSection = field(default_factory=MaskSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        # build every derived object once so bad values fail at load time
        try:
            self.bins()
            self.slic_params()
            self.fusion_weights()
            self.eval_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.fusion.lambda0 + self.fusion.lambda2 <= 0:
            raise ConfigError("fusion.lambda0 + fusion.lambda2 must be positive")
        if not self.mask.threshold_px > 0:
            raise ConfigError("mask.threshold_px must be positive")
        if self.depth.f_base is not None and not self.depth.f_base > 0:
            raise ConfigError("depth.f_base must be positive")

    def bins(self):
        return make_bins(self.depth.d_min, self.depth.d_max, self.depth.n_bins)

    def slic_params(self) -> SlicParams:
        s = self.slic
        return SlicParams(s.step, s.lambda_lab, s.lambda_d, s.lambda_pix, s.iters, s.exhaustive)

    def fusion_weights(self) -> FusionWeights:
        f = self.fusion
        return FusionWeights(f.lambda0, f.lambda1, f.lambda2)

    def eval_config(self) -> EvalConfig:
        e = self.eval
        return EvalConfig(e.median_scaling, e.min_depth, e.max_depth, e.eigen_crop)

    def to_text(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for sec in fields(self):
            section = getattr(self, sec.name)
            parser[sec.name] = {f.name: _format(getattr(section, f.name)) for f in fields(section)}
        lines = []
        for name in parser.sections():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in parser[name].items())
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "Config":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        sections = {f.name: f.default_factory for f in fields(cls)}
        kwargs = {}
        for name in parser.sections():
            if name not in sections:
                raise ConfigError(f"{source}: unknown section [{name}]")
            default = sections[name]()
            known = {f.name: f for f in fields(default)}
            values = {}
            for key, raw in parser[name].items():
                if key not in known:
                    raise ConfigError(f"{source}: unknown key {name}.{key}")
                values[key] = _parse(raw, getattr(default, key), f"{name}.{key}", source)
            kwargs[name] = replace(default, **values)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "Config":
        path = Path(path)
        return cls.from_text(path.read_text(), source=str(path))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


_OPTIONAL = {"depth.f_base", "slic.lambda_pix"}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value)


def _parse(raw: str, default, key: str, source: str):
    raw = raw.strip()
    try:
        if raw.lower() == "none":
            if key not in _OPTIONAL:
                raise ValueError("none is not allowed here")
            return None
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{source}: {key}: {exc}") from None
