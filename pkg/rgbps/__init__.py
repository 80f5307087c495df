from . import basis
from . import albedo
from . import local
from . import solver
from . import synth
from . import evaluate
from . import pipeline

__all__ = ["basis", "albedo", "local", "solver", "synth", "evaluate", "pipeline"]
