"""Function-block domain model and structural validation.

Everything here is plain immutable data.  An :class:`Application` holds a
library of FB types, a root network of instances, the device list, the
instance-to-device mapping and the secure-link annotations attached to data
connections.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Optional

from secfb.guards import GuardError, guard_names, parse_guard

__all__ = [
    "DataKind",
    "FBKind",
    "SecGoal",
    "SourceSpan",
    "Diagnostic",
    "Endpoint",
    "Connection",
    "Variable",
    "Transition",
    "Action",
    "ECC",
    "FBInterface",
    "FBType",
    "FBNetwork",
    "SecureLink",
    "Application",
    "UnmappedInstanceError",
    "AES_KEY_SIZES",
    "DEFAULT_KEYSIZE",
    "DEFAULT_REKEY_MS",
    "validate_application",
    "validate_types",
    "cross_device_connections",
]

AES_KEY_SIZES = (128, 192, 256)
DEFAULT_KEYSIZE = 128
DEFAULT_REKEY_MS = 60_000
AES_PARAMS = frozenset({"keysize", "rekey", "channel", "mode"})


class DataKind(enum.Enum):
    BOOL = "BOOL"
    INT = "INT"
    UINT = "UINT"
    LREAL = "LREAL"
    BYTE = "BYTE"
    BYTES16 = "BYTES16"
    BYTES = "BYTES"
    STRING = "STRING"

    def default(self) -> Any:
        return _DEFAULTS[self]

    def coerce(self, value: Any) -> Any:
        """Return ``value`` as a member of this kind or raise ``ValueError``."""
        if self is DataKind.BOOL:
            if isinstance(value, bool):
                return value
        elif self in (DataKind.INT, DataKind.UINT, DataKind.BYTE):
            if isinstance(value, int) and not isinstance(value, bool):
                if self is DataKind.UINT and value < 0:
                    raise ValueError(f"UINT value must be non-negative, got {value}")
                if self is DataKind.BYTE and not 0 <= value <= 255:
                    raise ValueError(f"BYTE value out of range: {value}")
                return value
        elif self is DataKind.LREAL:
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                value = float(value)
                if not math.isfinite(value):
                    raise ValueError("LREAL value must be finite")
                return value
        elif self is DataKind.BYTES16:
            if isinstance(value, (bytes, bytearray)):
                if len(value) != 16:
                    raise ValueError(f"BYTES16 value must have 16 bytes, got {len(value)}")
                return bytes(value)
        elif self is DataKind.BYTES:
            if isinstance(value, (bytes, bytearray)):
                return bytes(value)
        elif self is DataKind.STRING:
            if isinstance(value, str):
                return value
        raise ValueError(f"{value!r} is not a valid {self.value} value")


_DEFAULTS = {
    DataKind.BOOL: False,
    DataKind.INT: 0,
    DataKind.UINT: 0,
    DataKind.LREAL: 0.0,
    DataKind.BYTE: 0,
    DataKind.BYTES16: bytes(16),
    DataKind.BYTES: b"",
    DataKind.STRING: "",
}


class FBKind(enum.Enum):
    BASIC = "basic"
    COMPOSITE = "composite"
    SIFB = "sifb"


class SecGoal(enum.Enum):
    CONFIDENTIALITY = "C"
    INTEGRITY = "I"
    AVAILABILITY = "A"

    @classmethod
    def from_token(cls, token: str) -> "SecGoal":
        for goal in cls:
            if token in (goal.value, goal.name.capitalize(), goal.name):
                return goal
        raise ValueError(f"unknown security goal {token}")


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int = 1

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError("line and column are 1-based")

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    location: str = ""
    severity: str = "error"
    span: Optional[SourceSpan] = None

    def __str__(self) -> str:
        where = str(self.span) if self.span else self.location
        return f"{where}: {self.severity}: {self.message} [{self.code}]"


@dataclass(frozen=True)
class Endpoint:
    """``instance.port``; ``instance`` is None for a composite's own interface port."""

    instance: Optional[str]
    port: str

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        inst, dot, port = text.rpartition(".")
        return cls(inst if dot else None, port)

    def __str__(self) -> str:
        return f"{self.instance}.{self.port}" if self.instance is not None else self.port


@dataclass(frozen=True)
class Connection:
    source: Endpoint
    target: Endpoint
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @classmethod
    def of(cls, source: str, target: str) -> "Connection":
        return cls(Endpoint.parse(source), Endpoint.parse(target))

    def __str__(self) -> str:
        return f"{self.source} -> {self.target}"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: DataKind
    initial: Any = None

    def initial_value(self) -> Any:
        return self.kind.default() if self.initial is None else self.initial


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    event: Optional[str] = None  # None means ALWAYS
    guard: Optional[str] = None


@dataclass(frozen=True)
class Action:
    algorithm: Optional[str] = None
    event: Optional[str] = None


@dataclass(frozen=True)
class ECC:
    states: tuple[str, ...]
    initial: str
    transitions: tuple[Transition, ...] = ()
    actions: Mapping[str, tuple[Action, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class FBInterface:
    event_inputs: tuple[str, ...] = ()
    event_outputs: tuple[str, ...] = ()
    data_inputs: tuple[tuple[str, DataKind], ...] = ()
    data_outputs: tuple[tuple[str, DataKind], ...] = ()
    with_assoc: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def input_kind(self, name: str) -> Optional[DataKind]:
        return dict(self.data_inputs).get(name)

    def output_kind(self, name: str) -> Optional[DataKind]:
        return dict(self.data_outputs).get(name)


@dataclass(frozen=True)
class FBType:
    name: str
    kind: FBKind
    interface: FBInterface
    ecc: Optional[ECC] = None
    network: Optional["FBNetwork"] = None
    service: Optional[str] = None
    variables: tuple[Variable, ...] = ()


@dataclass(frozen=True)
class FBNetwork:
    instances: Mapping[str, str] = field(default_factory=dict)
    event_conns: tuple[Connection, ...] = ()
    data_conns: tuple[Connection, ...] = ()
    params: Mapping[tuple[str, str], Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SecureLink:
    d_con: Connection
    sec_goal: SecGoal
    alg: str
    params: Mapping[str, Any] = field(default_factory=dict)
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def keysize(self) -> int:
        return self.params.get("keysize", DEFAULT_KEYSIZE)

    @property
    def rekey_ms(self) -> int:
        return self.params.get("rekey", DEFAULT_REKEY_MS)

    @property
    def channel(self) -> Optional[str]:
        value = self.params.get("channel")
        return None if value is None else str(value)

    def with_params(self, **changes: Any) -> "SecureLink":
        return SecureLink(self.d_con, self.sec_goal, self.alg, {**self.params, **changes}, self.span)


@dataclass(frozen=True)
class Application:
    fb_types: Mapping[str, FBType] = field(default_factory=dict)
    root: FBNetwork = field(default_factory=FBNetwork)
    devices: tuple[str, ...] = ()
    mapping: Mapping[str, str] = field(default_factory=dict)
    secure_links: tuple[SecureLink, ...] = ()

    def type_of(self, type_name: str) -> Optional[FBType]:
        """Resolve a type name against the application first, then the standard library."""
        found = self.fb_types.get(type_name)
        if found is None:
            from secfb.library import standard_library

            found = standard_library().get(type_name)
        return found

    def instance_type(self, instance: str) -> Optional[FBType]:
        type_name = self.root.instances.get(instance)
        return None if type_name is None else self.type_of(type_name)

    def secure_link_for(self, conn: Connection) -> Optional[SecureLink]:
        for link in self.secure_links:
            if link.d_con == conn:
                return link
        return None


class UnmappedInstanceError(LookupError):
    def __init__(self, instance: str):
        super().__init__(f"instance {instance!r} is not mapped to a device")
        self.instance = instance


# -- validation -------------------------------------------------------------


class _Collector:
    def __init__(self):
        self.items: list[Diagnostic] = []

    def error(self, code: str, message: str, location: str = "", span=None):
        self.items.append(Diagnostic(code, message, location, "error", span))


def _duplicates(names: Iterable[str]) -> list[str]:
    seen, dups = set(), []
    for name in names:
        if name in seen and name not in dups:
            dups.append(name)
        seen.add(name)
    return dups


def _check_interface(fbt: FBType, out: _Collector) -> None:
    itf = fbt.interface
    loc = f"fbtype {fbt.name}"
    for label, names in (
        ("event input", itf.event_inputs),
        ("event output", itf.event_outputs),
        ("data input", [n for n, _ in itf.data_inputs]),
        ("data output", [n for n, _ in itf.data_outputs]),
    ):
        for dup in _duplicates(names):
            out.error("duplicate-port", f"duplicate {label} {dup!r}", loc)
    data_in = {n for n, _ in itf.data_inputs}
    data_out = {n for n, _ in itf.data_outputs}
    for event, ports in itf.with_assoc.items():
        if event in itf.event_inputs:
            allowed, direction = data_in, "input"
        elif event in itf.event_outputs:
            allowed, direction = data_out, "output"
        else:
            out.error("bad-with", f"WITH on unknown event {event!r}", loc)
            continue
        for port in ports:
            if port not in allowed:
                out.error("bad-with", f"event {event} is associated with unknown data {direction} {port!r}", loc)


def _check_ecc(fbt: FBType, out: _Collector) -> None:
    ecc, itf = fbt.ecc, fbt.interface
    loc = f"fbtype {fbt.name}"
    states = set(ecc.states)
    for dup in _duplicates(ecc.states):
        out.error("duplicate-state", f"duplicate ECC state {dup!r}", loc)
    if ecc.initial not in states:
        out.error("bad-ecc", f"initial state {ecc.initial!r} is not declared", loc)
    readable = {n for n, _ in itf.data_inputs} | {v.name for v in fbt.variables}
    for tr in ecc.transitions:
        for end in (tr.source, tr.target):
            if end not in states:
                out.error("bad-ecc", f"transition endpoint {end!r} is not a declared state", loc)
        if tr.event is not None and tr.event not in itf.event_inputs:
            out.error("bad-ecc", f"transition triggered by unknown event {tr.event!r}", loc)
        if tr.guard is not None:
            try:
                names = guard_names(parse_guard(tr.guard))
            except GuardError as exc:
                out.error("bad-guard", f"malformed guard {tr.guard!r}: {exc}", loc)
                continue
            for name in sorted(names - readable):
                out.error("bad-guard", f"guard reads undeclared variable {name!r}", loc)
    for state, actions in ecc.actions.items():
        if state not in states:
            out.error("bad-ecc", f"actions attached to unknown state {state!r}", loc)
        for action in actions:
            if action.event is not None and action.event not in itf.event_outputs:
                out.error("bad-ecc", f"state {state} emits unknown event {action.event!r}", loc)


def _check_type(fbt: FBType, resolve, out: _Collector) -> None:
    loc = f"fbtype {fbt.name}"
    populated = {
        FBKind.BASIC: fbt.ecc is not None,
        FBKind.COMPOSITE: fbt.network is not None,
        FBKind.SIFB: fbt.service is not None,
    }
    for kind, present in populated.items():
        if (kind is fbt.kind) != present:
            out.error("bad-kind", f"{fbt.kind.value} type must populate exactly its own body", loc)
            break
    _check_interface(fbt, out)
    for var in fbt.variables:
        if var.initial is not None:
            try:
                var.kind.coerce(var.initial)
            except ValueError as exc:
                out.error("kind-mismatch", f"variable {var.name}: {exc}", loc)
    if fbt.kind is FBKind.BASIC and fbt.ecc is not None:
        _check_ecc(fbt, out)
    if fbt.kind is FBKind.COMPOSITE and fbt.network is not None:
        if _contains_type(fbt.network, fbt.name, resolve, set()):
            out.error("recursive-type", f"composite type {fbt.name} contains itself", loc)
            return
        _check_network(fbt.network, resolve, out, f"fbtype {fbt.name}", fbt)


def _contains_type(network: FBNetwork, name: str, resolve, visited: set) -> bool:
    for type_name in network.instances.values():
        if type_name == name:
            return True
        if type_name in visited:
            continue
        visited.add(type_name)
        inner = resolve(type_name)
        if inner is not None and inner.kind is FBKind.COMPOSITE and inner.network is not None:
            if _contains_type(inner.network, name, resolve, visited):
                return True
    return False


def _port_info(ep: Endpoint, network: FBNetwork, resolve, owner: Optional[FBType]):
    """Classify an endpoint as (category, kind, as_source, as_target) or None.

    ``category`` is 'event' or 'data'.
    """
    if ep.instance is None:
        if owner is None:
            return None
        itf = owner.interface
        # the composite's inputs act as sources inside its own network
        if ep.port in itf.event_inputs:
            return "event", None, True, False
        if ep.port in itf.event_outputs:
            return "event", None, False, True
        if (k := itf.input_kind(ep.port)) is not None:
            return "data", k, True, False
        if (k := itf.output_kind(ep.port)) is not None:
            return "data", k, False, True
        return None
    type_name = network.instances.get(ep.instance)
    fbt = resolve(type_name) if type_name else None
    if fbt is None:
        return None
    itf = fbt.interface
    if ep.port in itf.event_outputs:
        return "event", None, True, False
    if ep.port in itf.event_inputs:
        return "event", None, False, True
    if (k := itf.output_kind(ep.port)) is not None:
        return "data", k, True, False
    if (k := itf.input_kind(ep.port)) is not None:
        return "data", k, False, True
    return None


def _check_network(network: FBNetwork, resolve, out: _Collector, loc: str, owner=None) -> None:
    for inst, type_name in network.instances.items():
        if resolve(type_name) is None:
            out.error("unknown-type", f"instance {inst} has unknown type {type_name!r}", loc)
    for category, conns in (("event", network.event_conns), ("data", network.data_conns)):
        for conn in conns:
            src = _port_info(conn.source, network, resolve, owner)
            dst = _port_info(conn.target, network, resolve, owner)
            where = f"{loc}: {conn}"
            if src is None or dst is None:
                bad = conn.source if src is None else conn.target
                out.error("dangling-endpoint", f"connection endpoint {bad} does not exist", where, conn.span)
                continue
            if src[0] != category or dst[0] != category:
                out.error("category-mismatch", f"{category} connection joins non-{category} ports", where, conn.span)
                continue
            if not src[2] or not dst[3]:
                out.error("direction", "connection must run from an output to an input", where, conn.span)
                continue
            if category == "data" and src[1] is not dst[1]:
                out.error(
                    "kind-mismatch",
                    f"data kind mismatch {src[1].value} -> {dst[1].value}",
                    where,
                    conn.span,
                )
    targets = [c.target for c in network.data_conns]
    for dup in _duplicates(str(t) for t in targets):
        out.error("multiple-writers", f"data input {dup} has more than one incoming connection", loc)
    connected = {str(t) for t in targets}
    for (inst, port), value in network.params.items():
        ep = Endpoint(inst, port)
        info = _port_info(ep, network, resolve, owner)
        if info is None or info[0] != "data" or not info[3]:
            out.error("bad-param", f"parameter bound to unknown data input {ep}", loc)
            continue
        if str(ep) in connected:
            out.error("bad-param", f"parameter bound to connected data input {ep}", loc)
        try:
            info[1].coerce(value)
        except ValueError as exc:
            out.error("kind-mismatch", f"parameter {ep}: {exc}", loc)


def _check_secure_links(app: Application, out: _Collector) -> None:
    seen: list[Connection] = []
    for link in app.secure_links:
        where = f"app: {link.d_con}"
        if link.d_con not in app.root.data_conns:
            out.error("unknown-connection", "secure link does not annotate an existing data connection", where, link.span)
        if link.d_con in seen:
            out.error("duplicate-annotation", "data connection carries more than one secure link", where, link.span)
        seen.append(link.d_con)
        if not link.alg:
            out.error("invalid-param", "secure link names no algorithm", where, link.span)
        if link.sec_goal is SecGoal.CONFIDENTIALITY and link.alg == "AES":
            ks = link.params.get("keysize", DEFAULT_KEYSIZE)
            if ks not in AES_KEY_SIZES:
                out.error("invalid-param", f"keysize={ks} not in {{128, 192, 256}}", where, link.span)
            rekey = link.params.get("rekey", DEFAULT_REKEY_MS)
            if not isinstance(rekey, int) or isinstance(rekey, bool) or rekey <= 0:
                out.error("invalid-param", f"rekey must be a positive duration, got {rekey!r}", where, link.span)
            mode = link.params.get("mode", "ECB")
            if mode != "ECB":
                out.error("invalid-param", f"cipher mode {mode} is not available (only ECB)", where, link.span)
            for key in sorted(set(link.params) - AES_PARAMS):
                out.error("invalid-param", f"unknown AES parameter {key!r}", where, link.span)


def validate_types(types: Iterable[FBType], resolve) -> list[Diagnostic]:
    out = _Collector()
    for fbt in types:
        _check_type(fbt, resolve, out)
    return out.items


def validate_application(app: Application) -> list[Diagnostic]:
    """Check every structural invariant; an empty list means the app is well formed."""
    out = _Collector()
    resolve = app.type_of
    for fbt in app.fb_types.values():
        _check_type(fbt, resolve, out)
    _check_network(app.root, resolve, out, "app")
    for dup in _duplicates(app.devices):
        out.error("duplicate-device", f"device {dup} declared twice", "devices")
    declared = set(app.devices)
    for inst in app.root.instances:
        dev = app.mapping.get(inst)
        if dev is None:
            out.error("unmapped-instance", f"instance {inst} is not mapped to a device", "map")
        elif dev not in declared:
            out.error("unknown-device", f"instance {inst} is mapped to undeclared device {dev}", "map")
    for inst in app.mapping:
        if inst not in app.root.instances:
            out.error("unknown-instance", f"mapping names unknown instance {inst}", "map")
    _check_secure_links(app, out)
    return out.items


def cross_device_connections(app: Application) -> list[Connection]:
    """Data connections whose endpoints live on different devices, in declaration order."""
    result = []
    for conn in app.root.data_conns:
        devices = []
        for inst in (conn.source.instance, conn.target.instance):
            dev = app.mapping.get(inst)
            if dev is None:
                raise UnmappedInstanceError(inst)
            devices.append(dev)
        if devices[0] != devices[1]:
            result.append(conn)
    return result


def iter_instances(network: FBNetwork, resolve, prefix: str = "") -> Iterator[tuple[str, FBType]]:
    """Yield (path, type) for every instance, descending into composites."""
    for inst, type_name in network.instances.items():
        fbt = resolve(type_name)
        path = f"{prefix}{inst}"
        yield path, fbt
        if fbt is not None and fbt.kind is FBKind.COMPOSITE:
            yield from iter_instances(fbt.network, resolve, path + ".")
