"""Level set topology optimization with wave-type evolution equations on P1 triangle meshes."""
from .config import RunConfig, parse_config
from .errors import (ConfigError, InvalidArgument, NumericDegeneracy, RunAborted, SolverFailure,
                     WavetopoError)
from .optimizer import History, check_convergence, run
from .presets import preset

__version__ = "0.1.0"

__all__ = ["RunConfig", "parse_config", "preset", "run", "check_convergence", "History", "WavetopoError",
           "InvalidArgument", "NumericDegeneracy", "SolverFailure", "ConfigError", "RunAborted"]
