import pathlib

from rgbps.common import InvalidInputError


def require_file(path: pathlib.Path | str) -> pathlib.Path:
    path = pathlib.Path(path)
    if not path.is_file():
        raise InvalidInputError(f'file does not exist: {path}')
    return path


def ensure_dir(path: pathlib.Path | str) -> pathlib.Path:
    path = pathlib.Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
