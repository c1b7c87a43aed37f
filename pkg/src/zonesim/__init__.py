"""Trace-driven simulator of zoned consumer flash storage."""

from .config import SMALL, build_config, load_config
from .errors import SimError, SimulationError, TraceParseError
from .namespace import DeviceOptions, NamespaceConfig, NsKind, init_device
from .sim import Simulator, run_trace
from .stats import StatsReport, emit_report, parse_report
from .trace import TraceRecord, format_trace, parse_trace
from .workloads import generate_workload, shape_of

__all__ = [
    "SMALL", "build_config", "load_config", "SimError", "SimulationError", "TraceParseError",
    "DeviceOptions", "NamespaceConfig", "NsKind", "init_device", "Simulator", "run_trace",
    "StatsReport", "emit_report", "parse_report", "TraceRecord", "format_trace", "parse_trace",
    "generate_workload", "shape_of",
]
