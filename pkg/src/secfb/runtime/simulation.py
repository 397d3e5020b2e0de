"""Drive several device runtimes on one virtual clock or on wall-clock threads."""

from __future__ import annotations

import logging
import threading
import time
from typing import Any, Callable, Mapping, Optional

from secfb.core import Application, FBNetwork, FBType
from secfb.crypto.entropy import SeededEntropy
from secfb.clock import RealClock, VirtualClock
from secfb.runtime.costs import CostModel
from secfb.runtime.engine import DEFAULT_MAX_STEPS, DeviceRuntime, LatencySample, TraceEntry
from secfb.transport.loopback import LatencyModel, LoopbackFabric

__all__ = ["Simulation", "device_network", "run_real"]

log = logging.getLogger(__name__)


def device_network(app: Application, device: str) -> FBNetwork:
    """The part of ``app.root`` mapped to ``device``; cross-device connections are dropped."""
    local = {i: t for i, t in app.root.instances.items() if app.mapping.get(i) == device}

    def keep(conn):
        return conn.source.instance in local and conn.target.instance in local

    return FBNetwork(
        local,
        tuple(c for c in app.root.event_conns if keep(c)),
        tuple(c for c in app.root.data_conns if keep(c)),
        {k: v for k, v in app.root.params.items() if k[0] in local},
    )


class Simulation:
    """Deterministic multi-device run over a loopback fabric.

    Devices are stepped round-robin until all are idle, then the clock jumps
    to the next timer or delayed frame.  With a fixed seed two runs produce
    identical traces.
    """

    def __init__(
        self,
        latency: LatencyModel | float = 0.0,
        *,
        seed: int = 0,
        services: Optional[Mapping[str, type]] = None,
        trace: bool = True,
        max_steps: int = DEFAULT_MAX_STEPS,
        cost: Optional[CostModel] = None,
    ):
        if not isinstance(latency, LatencyModel):
            latency = LatencyModel(float(latency), seed=seed)
        self.clock = VirtualClock()
        self.fabric = LoopbackFabric(self.clock, latency)
        self.seed = seed
        self.services = services
        self.trace_enabled = trace
        self.max_steps = max_steps
        self.cost = cost
        self.devices: dict[str, DeviceRuntime] = {}

    def add_device(self, name: str, network: FBNetwork, resolve: Callable[[str], Optional[FBType]] | Mapping[str, FBType]) -> DeviceRuntime:
        if name in self.devices:
            raise ValueError(f"device {name} added twice")
        if isinstance(resolve, Mapping):
            resolve = resolve.get
        rt = DeviceRuntime(
            name,
            network,
            resolve,
            self.services,
            self.clock,
            self.fabric.attach(name),
            SeededEntropy(f"{self.seed}:{name}"),
            self.trace_enabled,
            self.cost,
        )
        self.devices[name] = rt
        return rt

    @classmethod
    def from_application(cls, app: Application, **kwargs) -> "Simulation":
        sim = cls(**kwargs)
        for device in app.devices:
            sim.add_device(device, device_network(app, device), app.type_of)
        return sim

    @classmethod
    def from_plan(cls, plan, **kwargs) -> "Simulation":
        """One runtime per device of a compiled deployment plan."""
        sim = cls(**kwargs)
        for device, network in plan.networks.items():
            sim.add_device(device, network, plan.app.type_of)
        return sim

    def start(self) -> None:
        for rt in self.devices.values():
            rt.start()
        self.settle()

    def settle(self) -> int:
        """Step every device until none has queued work."""
        total = 0
        while True:
            progressed = 0
            for rt in self.devices.values():
                if rt.pending():
                    progressed += rt.run_until_idle(self.max_steps)
            total += progressed
            if not progressed:
                return total

    def run_until(self, t: float) -> None:
        self.settle()
        while True:
            due = self.clock.next_due()
            if due is None or due > t:
                break
            self.clock.advance_to(due)
            self.clock.fire_due()
            self.settle()
        if t > self.clock.now():
            self.clock.advance_to(t)

    def run_for(self, duration: float) -> None:
        self.run_until(self.clock.now() + duration)

    def at(self, t: float, action: Callable[[], None]) -> None:
        self.clock.call_at(t, action)

    def inject(self, device: str, target: str, event: str, data: Optional[Mapping[str, Any]] = None) -> None:
        self.devices[device].inject(target, event, data)

    @property
    def samples(self) -> list[LatencySample]:
        return [s for rt in self.devices.values() for s in rt.samples]

    @property
    def trace(self) -> list[TraceEntry]:
        return [e for rt in self.devices.values() for e in rt.trace]

    @property
    def diagnostics(self):
        return [d for rt in self.devices.values() for d in rt.diagnostics]

    def counter(self, name: str) -> int:
        """Sum a counter suffix (``undecryptable``, ``sessions``...) over all devices."""
        return sum(n for rt in self.devices.values() for key, n in rt.counters.items() if key.endswith(":" + name) or key == name)


def run_real(runtimes: list[DeviceRuntime], duration_s: float) -> None:
    """Run each runtime on its own thread against the wall clock for ``duration_s``."""
    stop = threading.Event()
    threads = [threading.Thread(target=rt.run_forever, args=(stop,), name=f"dev-{rt.name}", daemon=True) for rt in runtimes]
    for th in threads:
        th.start()
    try:
        time.sleep(duration_s)
    finally:
        stop.set()
        for th in threads:
            th.join(timeout=2.0)
        for rt in runtimes:
            rt.stop()


def real_clock() -> RealClock:
    return RealClock()
