"""Experiment configuration: plain ``key = value`` files with ``#`` comments."""
from __future__ import annotations

import math
import typing
from dataclasses import dataclass, fields, replace

from .grid_field import INITIAL_DATA_KINDS, NormSpec
from .nonlinearity_net import NonlinearitySpec
from .picard_core import AdmissibilityError, PicardConfig, check_exponents, select_T
from .semigroup_kernel import BASIS_KINDS, OperatorSpec

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "parse_config_text", "serialize_config"]


class ConfigError(ValueError):
    """Malformed or inadmissible configuration."""


REQUIRED = ("R", "M", "M_prime", "delta", "F_kind", "p", "c_F")


@dataclass(frozen=True)
class ExperimentConfig:
    # solution balls and contraction target
    R: float
    M: float
    M_prime: float
    delta: float
    # nonlinearity
    F_kind: str
    p: float
    c_F: float
    F_sign: float = 1.0
    F_coeffs: tuple[float, ...] = ()
    # operator and norm
    nu: float = 0.5
    c_L: float = 1.0
    eigen_count_eval: int = 200
    r: float = 2.0
    s: float = 2.0
    # window: T is the practical cap; certified mode recomputes it
    T: float = 0.1
    mode: str = "practical"
    # discretization
    nt: int = 64
    nx: int = 64
    grid4: int = 32
    dt_factor: float = 0.25
    l_max: int = 200
    tol: float = 0.0
    # construction
    basis_kind: str = "haar"
    eps_list: tuple[float, ...] = (0.1, 0.01)
    haar_levels: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    fourier_cutoffs: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 46)
    spectral_modes: tuple[int, ...] = (1, 2, 4, 8, 16)
    # initial data
    u0_count: int = 8
    u0_seed: int = 0
    u0_kinds: tuple[str, ...] = ("eigenmode", "random-trig", "bump")
    # long-time
    kappa: int = 3

    def __post_init__(self):
        errors = []
        if self.mode not in ("certified", "practical"):
            errors.append(f"mode must be certified or practical, got {self.mode!r}")
        if self.basis_kind not in BASIS_KINDS:
            errors.append(f"basis_kind must be one of {BASIS_KINDS}")
        for k in self.u0_kinds:
            if k not in INITIAL_DATA_KINDS:
                errors.append(f"u0_kinds entry {k!r} not in {INITIAL_DATA_KINDS}")
        if any(not 0 < e < 1 for e in self.eps_list):
            errors.append("eps_list entries must lie in (0, 1)")
        if self.kappa < 1:
            errors.append("kappa must be >= 1")
        if not 0 < self.dt_factor <= 1 or abs(1 / self.dt_factor - round(1 / self.dt_factor)) > 1e-9:
            errors.append("dt_factor must be 1/n for a positive integer n")
        if errors:
            raise ConfigError("; ".join(errors))
        try:
            self.norm.require_at_least(self.p)
            check_exponents(self.nu, self.p, self.r, self.s)
            self.nonlinearity
            self.operator
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def norm(self) -> NormSpec:
        return NormSpec(self.r, self.s)

    @property
    def operator(self) -> OperatorSpec:
        return OperatorSpec(self.nu, self.c_L, self.eigen_count_eval)

    @property
    def nonlinearity(self) -> NonlinearitySpec:
        return NonlinearitySpec(self.F_kind, self.p, self.c_F, self.F_sign, self.F_coeffs)

    @property
    def certified(self) -> bool:
        return self.mode == "certified"

    def certify(self):
        """Run the admissibility search; raises ConfigError on failure."""
        try:
            return select_T(self.R, self.M, self.M_prime, self.delta, self.operator, self.nonlinearity, self.norm)
        except AdmissibilityError as exc:
            raise ConfigError(str(exc)) from exc

    def picard(self, T: float | None = None, **changes) -> PicardConfig:
        return PicardConfig(
            R=self.R, M=self.M, M_prime=self.M_prime, T=self.T if T is None else T, delta=self.delta,
            norm=self.norm, operator=self.operator, nonlinearity=self.nonlinearity,
            nt=self.nt, nx=self.nx, certified=self.certified, **changes,
        )

    def updated(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _parse_scalar(kind, text: str, key: str):
    text = text.strip()
    try:
        if kind is float:
            v = float(text)
            if math.isnan(v):
                raise ValueError
            return v
        if kind is int:
            return int(text)
        if kind is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError
        return text
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {text!r} as {kind.__name__}") from None


def _field_types():
    hints = typing.get_type_hints(ExperimentConfig)
    out = {}
    for f in fields(ExperimentConfig):
        h = hints[f.name]
        if typing.get_origin(h) is tuple:
            out[f.name] = (tuple, typing.get_args(h)[0])
        else:
            out[f.name] = (None, h)
    return out


def parse_config_text(text: str) -> ExperimentConfig:
    types = _field_types()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        container, kind = types[key]
        if container is tuple:
            items = [v for v in val.split(",") if v.strip()]
            values[key] = tuple(_parse_scalar(kind, v, key) for v in items)
        else:
            values[key] = _parse_scalar(kind, val, key)
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    try:
        return ExperimentConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else "%.17g" % v
    return str(v)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            lines.append(f"{f.name} = {', '.join(_fmt(x) for x in v)}")
        else:
            lines.append(f"{f.name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"
