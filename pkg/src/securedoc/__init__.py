"""Secure distributed optimal coordination of networked strict-feedback systems."""
from . import control, cyber, graph, monitor, plant, rov, scenario, secure, sim, traceio
from .graph import Graph, build_graph, laplacian, prune, ring
from .scenario import build_scenario, load_scenario
from .sim import NodeSpec, ScenarioConfig, Trace, run

__version__ = "0.1.0"
