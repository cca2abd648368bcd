"""Simulation and analysis of critical Erdos-Renyi graph dynamics."""
from .errors import DynpercError
from .graph_state import GraphState, components, p_critical, sample_er, sizes_rescaled
from .dynamics import ProcessSpec, run

__all__ = ["DynpercError", "GraphState", "components", "p_critical", "sample_er", "sizes_rescaled",
           "ProcessSpec", "run"]
__version__ = "0.1.0"
