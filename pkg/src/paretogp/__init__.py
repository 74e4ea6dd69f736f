"""Multi-objective genetic programming for symbolic regression.

Public surface: expression trees (`expr`), dataset handling (`data`),
linear-scaled fitness (`fitness`), variation operators (`variation`),
Pareto machinery (`moea_core`), the eight algorithms and engine
(`algorithms`), hypervolume and statistics (`metrics_stats`), the
evolvability measurement workflow (`evolvability`), and the CLI (`cli`).
"""

from .algorithms import ALGORITHM_IDS, EngineConfig, run_evolution
from .data import make_synthetic, resolve_dataset, split_and_standardize
from .metrics_stats import hypervolume_2d, mann_whitney_u

__all__ = [
    "ALGORITHM_IDS",
    "EngineConfig",
    "run_evolution",
    "make_synthetic",
    "resolve_dataset",
    "split_and_standardize",
    "hypervolume_2d",
    "mann_whitney_u",
]
