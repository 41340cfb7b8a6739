"""Delta-based accumulative iterative computation on graphs."""

from .algorithms import ALGORITHMS, AlgorithmSpec, LinearSystem, build_kernel
from .engine import EngineConfig, RunResult, RunStats, check_termination, recover, run
from .graph import Graph, GeneratorConfig, generate, parse_lines, partition, read_graph, write_graph
from .kernel import Kernel, check_conditions

__all__ = [
    "ALGORITHMS", "AlgorithmSpec", "LinearSystem", "build_kernel",
    "EngineConfig", "RunResult", "RunStats", "check_termination", "recover", "run",
    "Graph", "GeneratorConfig", "generate", "parse_lines", "partition", "read_graph", "write_graph",
    "Kernel", "check_conditions",
]
