"""Event-driven FB execution: clocks, device runtimes, services, simulation."""

from secfb.runtime.algorithms import algorithm, get_algorithm, registered_algorithms
from secfb.clock import ClockMode, RealClock, VirtualClock
from secfb.runtime.engine import (
    DeviceRuntime,
    FBContext,
    InstantiationError,
    LatencySample,
    RuntimeFault,
    TraceEntry,
    instantiate_device,
)
from secfb.runtime.services import DH_GROUPS, KeStatus, Service, default_services, service
from secfb.runtime.simulation import Simulation, device_network, run_real

__all__ = [
    "algorithm",
    "get_algorithm",
    "registered_algorithms",
    "ClockMode",
    "RealClock",
    "VirtualClock",
    "DeviceRuntime",
    "FBContext",
    "InstantiationError",
    "LatencySample",
    "RuntimeFault",
    "TraceEntry",
    "instantiate_device",
    "DH_GROUPS",
    "KeStatus",
    "Service",
    "default_services",
    "service",
    "Simulation",
    "device_network",
    "run_real",
]
