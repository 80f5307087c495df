import configparser
import dataclasses
import math
import os
import pathlib
import typing

from rgbps.albedo import AlbedoGrid
from rgbps.basis import PatchGeometry
from rgbps.common import (
    DEFAULT_GAMMA,
    DEFAULT_ITERATIONS,
    DEFAULT_LAMBDA_FACTOR,
    DEFAULT_LAMBDA_FINAL,
    DEFAULT_LAMBDA_INIT,
    EPS_TAU,
    ConfigError,
    InvalidInputError,
    thread_count,
)
from rgbps.model import SelectionRule
from rgbps.solver import SolverConfig

H_MAX_SYNTHETIC = 1e-4
H_MAX_REAL = 1e-2

_CONFIG_FILE: pathlib.Path = pathlib.Path('rgbps.ini')
_SECTION = 'pipeline'


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    patch_side: int = 8
    degree: int = 5
    n_chroma_elev: int = 64
    n_chroma_azim: int = 64
    n_lum: int = 100
    tau_max: float = 3.0
    albedo_set_size: int = 100
    h_max: float = H_MAX_SYNTHETIC
    gamma: float = DEFAULT_GAMMA
    lambda_init: float = DEFAULT_LAMBDA_INIT
    lambda_factor: float = DEFAULT_LAMBDA_FACTOR
    lambda_final: float = DEFAULT_LAMBDA_FINAL
    iterations: int = DEFAULT_ITERATIONS
    selection: SelectionRule = SelectionRule.objective
    rel_tol: float = 0.0
    eps_tau: float = EPS_TAU
    noise_sigma: float = 0.001
    seed: int = 0
    threads: int = 1
    mask_threshold: float = 0.02

    def __post_init__(self):
        try:
            self.geometry()
            self.grid()
            self.solver()
        except InvalidInputError as e:
            raise ConfigError(str(e))
        if self.albedo_set_size < 1:
            raise ConfigError('albedo_set_size must be >= 1')
        if not self.h_max > 0:
            raise ConfigError('h_max must be > 0')
        if self.eps_tau <= 0 or self.noise_sigma < 0:
            raise ConfigError('eps_tau must be > 0 and noise_sigma >= 0')
        if self.threads < 1:
            raise ConfigError('threads must be >= 1')
        if not 0 <= self.mask_threshold < 1:
            raise ConfigError('mask_threshold must lie in [0, 1)')

    def geometry(self) -> PatchGeometry:
        return PatchGeometry(self.patch_side, self.degree)

    def grid(self) -> AlbedoGrid:
        return AlbedoGrid(self.n_chroma_elev, self.n_chroma_azim, self.n_lum, self.tau_max)

    def solver(self) -> SolverConfig:
        return SolverConfig(
            gamma=self.gamma,
            lambda_init=self.lambda_init,
            lambda_factor=self.lambda_factor,
            lambda_final=self.lambda_final,
            iterations=self.iterations,
            selection=self.selection,
            rel_tol=self.rel_tol,
        )

    @property
    def workers(self) -> int:
        return thread_count(self.threads)

    def with_overrides(self, **overrides) -> 'PipelineConfig':
        """Apply non-None overrides (typically parsed CLI flags)."""
        given = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(given) - set(field_names())
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **given)


def field_names() -> list[str]:
    return [f.name for f in dataclasses.fields(PipelineConfig)]


def _field_types() -> dict[str, typing.Any]:
    return typing.get_type_hints(PipelineConfig)


def coerce(key: str, raw: str):
    kind = _field_types()[key]
    try:
        if kind is SelectionRule:
            return SelectionRule[raw.strip().lower()]
        if kind is int:
            return int(raw)
        value = float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f'bad value for {key}: {raw!r}')
    if not math.isfinite(value):
        raise ConfigError(f'{key} must be finite, got {raw!r}')
    return value


def parse(text: str, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    """Parse ``key = value`` lines, with or without an ini section header."""
    parser = configparser.ConfigParser()
    try:
        if not text.lstrip().startswith('['):
            text = f'[{_SECTION}]\n' + text
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f'malformed configuration: {e}')

    values = {}
    for section in parser.sections():
        for key, raw in parser[section].items():
            if key not in field_names():
                raise ConfigError(f'unknown configuration key: {key}')
            values[key] = coerce(key, raw)
    return dataclasses.replace(base, **values)


def dumps(cfg: PipelineConfig) -> str:
    lines = [f'[{_SECTION}]']
    for name in field_names():
        value = getattr(cfg, name)
        lines.append(f'{name} = {repr(value) if isinstance(value, float) else str(value)}')
    return '\n'.join(lines) + '\n'


def load(path: pathlib.Path | None = None) -> PipelineConfig:
    """Load the configuration; a missing default file is created with defaults."""
    target = path or _CONFIG_FILE
    if not target.exists():
        if path is not None:
            raise ConfigError(f'configuration file does not exist: {path}')
        cfg = PipelineConfig()
        save(cfg)
        return cfg
    with open(target, 'r', encoding='utf-8') as cfgfile:
        return parse(cfgfile.read())


def save(cfg: PipelineConfig, path: pathlib.Path | None = None):
    with open(path or _CONFIG_FILE, 'w', encoding='utf-8') as cfgfile:
        cfgfile.write(dumps(cfg))


def clear(path: pathlib.Path | None = None):
    target = path or _CONFIG_FILE
    if target.exists():
        os.remove(target)
