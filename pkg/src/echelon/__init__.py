"""Forecast-driven ordering in a three-tier lost-sales supply chain."""
from .core import Rng
from .demand import DemandSpec, generate
from .simulator import ChainConfig, RunResult, run_episode

__version__ = "0.1.0"

__all__ = ["Rng", "DemandSpec", "generate", "ChainConfig", "RunResult", "run_episode", "__version__"]
