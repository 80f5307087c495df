import pathlib

import numpy as np

from rgbps.common import InvalidInputError
from rgbps.formats import require_file
from rgbps.model import LightingRig


def read_rig(path: pathlib.Path | str) -> LightingRig:
    """Nine whitespace-separated numbers: the red, green, then blue light."""
    path = require_file(path)
    with open(path, 'r', encoding='utf-8') as f:
        tokens = f.read().split()
    try:
        values = [float(t) for t in tokens]
    except ValueError as e:
        raise InvalidInputError(f'{path}: {e}')
    if len(values) != 9:
        raise InvalidInputError(f'{path}: expected 9 numbers, found {len(values)}')
    return LightingRig(np.array(values).reshape(3, 3).T)


def write_rig(path: pathlib.Path | str, rig: LightingRig):
    with open(path, 'w', encoding='utf-8') as f:
        for column in rig.matrix.T:
            f.write(' '.join(repr(float(v)) for v in column) + '\n')
