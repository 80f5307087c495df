import math
import os
import pathlib
import sys

DATA_PATH = pathlib.Path(__file__).parent / 'data'
BENCHMARK_RIG = DATA_PATH / 'benchmark_rig.txt'

THREADS_ENV = 'RGBPS_THREADS'

# numerical tolerances shared across stages
EPS_HORIZONTAL = 1e-6
EPS_TAU = 1e-8
EPS_CHROMA = 1e-6
RIG_DET_TOL = 1e-9
UNIT_TOL = 1e-6

# optimisation defaults
DEFAULT_GAMMA = 4.0
DEFAULT_LAMBDA_INIT = 2.0 ** -64
DEFAULT_LAMBDA_FACTOR = math.sqrt(2.0)
DEFAULT_LAMBDA_FINAL = 256.0
DEFAULT_ITERATIONS = 145

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_BAD_INPUT = 2


class RgbpsError(Exception):
    """Base class for every failure raised by rgbps."""


class InvalidInputError(RgbpsError, ValueError):
    """Input data or files that violate a documented contract."""


class SingularRigError(InvalidInputError):
    pass


class HorizontalNormalError(InvalidInputError):
    def __init__(self, offenders: list[tuple[int, int]], eps: float):
        self.offenders = offenders
        shown = ', '.join(f'({r}, {c})' for r, c in offenders[:10])
        more = f' and {len(offenders) - 10} more' if len(offenders) > 10 else ''
        super().__init__(
            f'{len(offenders)} normal(s) with z <= {eps:g}: {shown}{more}'
        )


class RankDeficientError(InvalidInputError):
    pass


class EmptyMaskError(InvalidInputError):
    pass


class EmptyHistogramError(RgbpsError):
    pass


class ConfigError(InvalidInputError):
    pass


class SynthesisError(RgbpsError):
    pass


def warn(message: str):
    print(f'Warning: {message}', file=sys.stderr)


def thread_count(configured: int = 1) -> int:
    """Resolve the worker count; the environment wins over configuration."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            configured = int(env)
        except ValueError:
            raise ConfigError(f'{THREADS_ENV} must be an integer, got {env!r}')
    return max(1, configured)
