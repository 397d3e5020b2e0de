"""Event-driven executor for one device's FB network.

Composite instances are flattened into leaf instances addressed by dotted
paths (``CLSender.AESEncrypt``).  Each device has two FIFO queues: events
emitted by FBs go to the internal queue, while network receipts, timer
ticks and injections go to the external queue.  The internal queue is always
drained first, so the chain triggered by one external event runs to
completion before the next external event is taken.
"""

from __future__ import annotations

import collections
import logging
import threading
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Optional

from secfb.core import Diagnostic, Endpoint, FBKind, FBNetwork, FBType
from secfb.crypto.entropy import Entropy, SeededEntropy
from secfb.guards import evaluate_guard, parse_guard
from secfb.runtime.algorithms import get_algorithm
from secfb.clock import Clock, VirtualClock
from secfb.runtime.costs import CostModel

__all__ = [
    "TraceEntry",
    "LatencySample",
    "RuntimeFault",
    "InstantiationError",
    "FBContext",
    "DeviceRuntime",
    "instantiate_device",
    "ECC_STEP_LIMIT",
]

log = logging.getLogger(__name__)

ECC_STEP_LIMIT = 1000
DEFAULT_MAX_STEPS = 1_000_000


@dataclass(frozen=True)
class TraceEntry:
    time: float
    device: str
    instance: str
    event: str
    inputs: tuple[tuple[str, Any], ...] = ()


@dataclass(frozen=True)
class LatencySample:
    """One delivered trip signal: ``t1`` before encryption, ``t2`` after decryption."""

    link: int
    seq: int
    epoch: int
    t1: int
    t2: int
    device: str = ""

    @property
    def latency(self) -> int:
        return self.t2 - self.t1


class RuntimeFault(RuntimeError):
    pass


class InstantiationError(RuntimeFault):
    pass


@dataclass
class _Ctx:
    prefix: str
    network: FBNetwork
    parent: Optional["_Ctx"]
    owner: Optional[str]
    ev_out: dict
    data_out: dict
    data_src: dict


class _Instance:
    __slots__ = (
        "path", "name", "fbt", "ctx", "vars", "ext", "ecc_state", "faulted",
        "service", "sample_on", "always", "outputs", "store", "transitions", "fbctx",
    )

    def __init__(self, path: str, name: str, fbt: FBType, ctx: _Ctx):
        self.path = path
        self.name = name
        self.fbt = fbt
        self.ctx = ctx
        itf = fbt.interface
        self.vars: dict[str, Any] = {}
        self.ext: dict[str, Any] = {}
        for port, kind in itf.data_inputs:
            self.vars[port] = self.ext[port] = kind.default()
        for port, kind in itf.data_outputs:
            self.vars[port] = kind.default()
        for var in fbt.variables:
            self.vars[var.name] = var.initial_value()
        self.outputs = tuple(p for p, _ in itf.data_outputs)
        associated = {p for ev in itf.event_inputs for p in itf.with_assoc.get(ev, ())}
        self.always = tuple(p for p, _ in itf.data_inputs if p not in associated)
        self.sample_on = {ev: tuple(itf.with_assoc.get(ev, ())) + self.always for ev in itf.event_inputs}
        self.ecc_state = fbt.ecc.initial if fbt.ecc is not None else None
        self.transitions: dict[str, list] = {}
        if fbt.ecc is not None:
            for tr in fbt.ecc.transitions:
                node = parse_guard(tr.guard) if tr.guard is not None else None
                self.transitions.setdefault(tr.source, []).append((tr, node))
        self.faulted = False
        self.service = None
        self.store: dict[str, Any] = {}
        self.fbctx: Optional[FBContext] = None


class FBContext:
    """Services available to algorithms and SIFB services of one instance."""

    def __init__(self, rt: "DeviceRuntime", inst: _Instance):
        self._rt = rt
        self._inst = inst

    @property
    def path(self) -> str:
        return self._inst.path

    @property
    def fbtype(self) -> FBType:
        return self._inst.fbt

    @property
    def vars(self) -> dict[str, Any]:
        return self._inst.vars

    @property
    def state(self) -> dict[str, Any]:
        return self._inst.store

    @property
    def rng(self) -> Entropy:
        return self._rt.rng

    @property
    def clock(self) -> Clock:
        return self._rt.clock

    @property
    def transport(self):
        return self._rt.transport

    @property
    def device(self) -> str:
        return self._rt.name

    def now(self) -> float:
        return self._rt.local_now()

    def write(self, port: str, value: Any) -> None:
        self._rt._write(self._inst, port, value)

    def emit(self, event: str) -> None:
        self._rt._emit(self._inst, event)

    def post(self, event: str, payload: Any = None) -> None:
        """Thread-safe: queue an external event for this instance's service."""
        self._rt.post(self._inst.path, event, payload)

    def schedule(self, delay_ms: float, event: str, payload: Any = None):
        due = self._rt.local_now() + max(0.0, delay_ms)
        return self._rt.clock.call_at(due, lambda: self.post(event, payload))

    def charge(self, name: str) -> None:
        """Account processing time for ``name`` under the device's cost model."""
        self._rt._charge(name, self._inst.vars)

    def count(self, name: str, n: int = 1) -> None:
        self._rt.counters[f"{self._inst.path}:{name}"] += n

    def record_sample(self, sample: LatencySample) -> None:
        self._rt.samples.append(sample)

    def warn(self, message: str, code: str = "service") -> None:
        self._rt._diagnose(code, message, self._inst.path, "warning")


class DeviceRuntime:
    """Instances, queues and routing tables of one device."""

    def __init__(
        self,
        name: str,
        network: FBNetwork,
        resolve: Callable[[str], Optional[FBType]],
        services: Optional[Mapping[str, type]] = None,
        clock: Optional[Clock] = None,
        transport=None,
        rng: Optional[Entropy] = None,
        trace: bool = True,
        cost: Optional[CostModel] = None,
    ):
        from secfb.runtime.services import default_services

        self.name = name
        self.cost = cost
        self._busy_until = 0.0
        self.network = network
        self.clock = clock or VirtualClock()
        self.transport = transport
        self.rng = rng or SeededEntropy(f"device:{name}")
        self.services = default_services() if services is None else services
        self.trace_enabled = trace
        self.trace: list[TraceEntry] = []
        self.samples: list[LatencySample] = []
        self.diagnostics: list[Diagnostic] = []
        self.counters: collections.Counter = collections.Counter()
        self.instances: dict[str, _Instance] = {}
        self._composites: dict[str, _Ctx] = {}
        self._internal: collections.deque = collections.deque()
        self._external: collections.deque = collections.deque()
        self._cond = threading.Condition()
        self._started = False
        self._resolve = resolve
        self._root = self._expand(network, "", None, None)
        self._routes: dict[tuple[str, str], list[tuple[str, str]]] = {}
        self._fanout: dict[tuple[str, str], list[tuple[str, str]]] = {}
        self._link()
        if cost is not None and hasattr(transport, "time_source"):
            transport.time_source = self.local_now
        for inst in self.instances.values():
            inst.fbctx = FBContext(self, inst)
            if inst.fbt.kind is FBKind.SIFB:
                inst.service = self.services[inst.fbt.service](inst.fbctx)

    # -- construction -------------------------------------------------------

    def _expand(self, network: FBNetwork, prefix: str, parent: Optional[_Ctx], owner: Optional[str]) -> _Ctx:
        ev_out, data_out, data_src = {}, {}, {}
        for conn in network.event_conns:
            ev_out.setdefault(conn.source, []).append(conn.target)
        for conn in network.data_conns:
            data_out.setdefault(conn.source, []).append(conn.target)
            data_src[conn.target] = conn.source
        ctx = _Ctx(prefix, network, parent, owner, ev_out, data_out, data_src)
        for inst, type_name in network.instances.items():
            fbt = self._resolve(type_name)
            path = prefix + inst
            if fbt is None:
                raise InstantiationError(f"instance {path} has unknown FB type {type_name!r}")
            if fbt.kind is FBKind.COMPOSITE:
                self._composites[path] = self._expand(fbt.network, path + ".", ctx, inst)
                continue
            if fbt.kind is FBKind.SIFB and fbt.service not in self.services:
                raise InstantiationError(f"no service binding {fbt.service!r} for SIFB type {fbt.name}")
            if fbt.kind is FBKind.BASIC:
                for actions in fbt.ecc.actions.values():
                    for act in actions:
                        if act.algorithm and get_algorithm(act.algorithm) is None:
                            raise InstantiationError(
                                f"algorithm {act.algorithm!r} used by {fbt.name} is not registered"
                            )
            self.instances[path] = _Instance(path, inst, fbt, ctx)
        return ctx

    def _forward(self, ctx: _Ctx, source: Endpoint, index: str, seen=None) -> list[tuple[str, str]]:
        """Leaf input ports reached from ``source`` (a source endpoint in ``ctx``)."""
        out = []
        for target in getattr(ctx, index).get(source, ()):
            if target.instance is None:
                if ctx.parent is not None:
                    out += self._forward(ctx.parent, Endpoint(ctx.owner, target.port), index)
                continue
            path = ctx.prefix + target.instance
            if path in self.instances:
                out.append((path, target.port))
            elif path in self._composites:
                out += self._forward(self._composites[path], Endpoint(None, target.port), index)
        return out

    def _driver(self, ctx: _Ctx, target: Endpoint):
        """What feeds a data input: ('out', path, port), ('const', value) or None."""
        source = ctx.data_src.get(target)
        if source is None:
            key = (target.instance, target.port)
            if key in ctx.network.params:
                return ("const", ctx.network.params[key])
            return None
        if source.instance is None:
            if ctx.parent is None:
                return None
            return self._driver(ctx.parent, Endpoint(ctx.owner, source.port))
        path = ctx.prefix + source.instance
        if path in self.instances:
            return ("out", path, source.port)
        inner = self._composites.get(path)
        if inner is None:
            return None
        return self._driver(inner, Endpoint(None, source.port))

    def _link(self) -> None:
        for inst in self.instances.values():
            itf = inst.fbt.interface
            for ev in itf.event_outputs:
                self._routes[(inst.path, ev)] = self._forward(inst.ctx, Endpoint(inst.name, ev), "ev_out")
            for port, kind in itf.data_inputs:
                drv = self._driver(inst.ctx, Endpoint(inst.name, port))
                if drv is None:
                    continue
                if drv[0] == "const":
                    inst.vars[port] = inst.ext[port] = kind.coerce(drv[1])
                else:
                    self._fanout.setdefault((drv[1], drv[2]), []).append((inst.path, port))

    # -- public API -----------------------------------------------------------

    def local_now(self) -> float:
        """Clock time, or later while charged processing time is still running."""
        now = self.clock.now()
        return now if self.cost is None else max(now, self._busy_until)

    def _charge(self, name: str, values) -> None:
        if self.cost is not None:
            ms = self.cost.cost(name, values)
            if ms:
                self._busy_until = self.local_now() + ms

    def resolve_event(self, target: str, event: str) -> list[tuple[str, str]]:
        """Leaf events reached by delivering ``event`` to instance path ``target``."""
        if target in self.instances:
            return [(target, event)]
        ctx = self._composites.get(target)
        if ctx is None:
            raise KeyError(f"no instance {target!r} on device {self.name}")
        return self._forward(ctx, Endpoint(None, event), "ev_out")

    def resolve_data(self, target: str, port: str) -> list[tuple[str, str]]:
        if target in self.instances:
            return [(target, port)]
        ctx = self._composites.get(target)
        if ctx is None:
            raise KeyError(f"no instance {target!r} on device {self.name}")
        return self._forward(ctx, Endpoint(None, port), "data_out")

    def inject(self, target: str, event: str, data: Optional[Mapping[str, Any]] = None) -> None:
        """Queue an external event; ``data`` is written to the target's inputs first."""
        events = self.resolve_event(target, event)
        writes = []
        for port, value in (data or {}).items():
            for path, leaf_port in self.resolve_data(target, port):
                kind = self.instances[path].fbt.interface.input_kind(leaf_port)
                writes.append((path, leaf_port, kind.coerce(value)))
        self._put(("inject", events, writes))

    def post(self, path: str, event: str, payload: Any = None) -> None:
        """Thread-safe handoff into the external queue."""
        self._put(("post", path, event, payload))

    def _put(self, item) -> None:
        with self._cond:
            self._external.append(item)
            self._cond.notify()

    def start(self) -> None:
        """Let services with start-up behaviour (E_RESTART) queue their events."""
        if self._started:
            return
        self._started = True
        for inst in self.instances.values():
            if inst.service is not None:
                inst.service.start()

    def stop(self) -> None:
        for inst in self.instances.values():
            if inst.service is not None:
                inst.service.stop()

    def pending(self) -> int:
        return len(self._internal) + len(self._external)

    def state_of(self, path: str) -> Optional[str]:
        return self.instances[path].ecc_state

    def value(self, path: str, port: str) -> Any:
        return self.instances[path].vars[port]

    def is_faulted(self, path: str) -> bool:
        return self.instances[path].faulted

    def step(self) -> bool:
        """Process one event; False iff both queues were empty."""
        if self._internal:
            path, event = self._internal.popleft()
            self._dispatch(path, event)
            return True
        with self._cond:
            if not self._external:
                return False
            item = self._external.popleft()
        if item[0] == "post":
            _, path, event, payload = item
            self._dispatch(path, event, payload, internal_post=True)
        else:
            _, events, writes = item
            for path, port, value in writes:
                self.instances[path].ext[port] = value
            if not events:
                return True
            self._internal.extend(events[1:])
            self._dispatch(*events[0])
        return True

    def run_until_idle(self, max_steps: int = DEFAULT_MAX_STEPS) -> int:
        if max_steps <= 0:
            raise ValueError("max_steps must be positive")
        steps = 0
        while steps < max_steps:
            if not self.step():
                return steps
            steps += 1
        if self.pending():
            self._diagnose(
                "non-termination",
                f"stopped after {max_steps} steps with {self.pending()} events queued (event loop in network?)",
                self.name,
            )
        return steps

    def run_forever(self, stop: threading.Event, idle_wait: float = 0.05) -> None:
        """Wall-clock loop for REAL mode; returns once ``stop`` is set."""
        self.start()
        while not stop.is_set():
            if self.step():
                continue
            with self._cond:
                if not self._external and not self._internal:
                    self._cond.wait(idle_wait)

    # -- execution --------------------------------------------------------------

    def _diagnose(self, code: str, message: str, location: str, severity: str = "error") -> None:
        self.diagnostics.append(Diagnostic(code, message, location, severity))
        log.log(logging.WARNING if severity == "error" else logging.INFO, "%s: %s: %s", self.name, location, message)

    def _fault(self, inst: _Instance, message: str) -> None:
        inst.faulted = True
        self.counters["faults"] += 1
        self._diagnose("fault", message, inst.path)

    def _write(self, inst: _Instance, port: str, value: Any) -> None:
        inst.vars[port] = value
        for path, in_port in self._fanout.get((inst.path, port), ()):
            self.instances[path].ext[in_port] = value

    def _flush(self, inst: _Instance) -> None:
        for port in inst.outputs:
            targets = self._fanout.get((inst.path, port))
            if targets:
                value = inst.vars[port]
                for path, in_port in targets:
                    self.instances[path].ext[in_port] = value

    def _emit(self, inst: _Instance, event: str) -> None:
        self.counters["events_emitted"] += 1
        self._internal.extend(self._routes.get((inst.path, event), ()))

    def _dispatch(self, path: str, event: str, payload: Any = None, internal_post: bool = False) -> None:
        inst = self.instances[path]
        self.counters["events_processed"] += 1
        if inst.faulted:
            self.counters["dropped_faulted"] += 1
            return
        sampled = ()
        if not internal_post:
            sampled = inst.sample_on.get(event, inst.always)
            for port in sampled:
                inst.vars[port] = inst.ext[port]
        if self.trace_enabled:
            snap = tuple((p, inst.vars[p]) for p in sampled)
            self.trace.append(TraceEntry(self.local_now(), self.name, path, event, snap))
        try:
            if inst.fbt.kind is FBKind.SIFB:
                inst.service.handle(event, payload)
            else:
                self._run_ecc(inst, event)
        except Exception as exc:  # algorithm or service failure
            self._fault(inst, f"{type(exc).__name__}: {exc}")

    def _run_ecc(self, inst: _Instance, event: str) -> None:
        actions = inst.fbt.ecc.actions
        consumed = False
        steps = 0
        while True:
            for tr, guard in inst.transitions.get(inst.ecc_state, ()):
                if tr.event is not None and (consumed or tr.event != event):
                    continue
                if guard is not None and not evaluate_guard(guard, inst.vars):
                    continue
                break
            else:
                return
            consumed = True
            steps += 1
            if steps > ECC_STEP_LIMIT:
                raise RuntimeFault(f"ECC did not settle within {ECC_STEP_LIMIT} transitions")
            inst.ecc_state = tr.target
            for act in actions.get(tr.target, ()):
                if act.algorithm is not None:
                    get_algorithm(act.algorithm)(inst.vars, inst.fbctx)
                    self._charge(act.algorithm, inst.vars)
                    self._flush(inst)
                if act.event is not None:
                    self._emit(inst, act.event)


def instantiate_device(
    network: FBNetwork,
    resolve: Callable[[str], Optional[FBType]] | Mapping[str, FBType] | None = None,
    services: Optional[Mapping[str, type]] = None,
    clock: Optional[Clock] = None,
    transport=None,
    *,
    name: str = "device",
    rng: Optional[Entropy] = None,
    trace: bool = True,
) -> DeviceRuntime:
    """Create a runtime with every instance in its initial ECC state and no events queued.

    Raises:
        InstantiationError: unknown type, SIFB type without a service
            binding, or an unregistered algorithm.
    """
    if resolve is None:
        from secfb.library import standard_library

        resolve = standard_library().get
    elif isinstance(resolve, Mapping):
        resolve = resolve.get
    return DeviceRuntime(name, network, resolve, services, clock, transport, rng, trace)


def first_diagnostic(diags: Iterable[Diagnostic], code: str) -> Optional[Diagnostic]:
    return next((d for d in diags if d.code == code), None)
