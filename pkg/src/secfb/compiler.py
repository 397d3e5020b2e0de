"""Lowering pass from annotated applications to per-device deployment plans.

Every Confidentiality/AES link between two devices is replaced by a
``CLSender`` on the source device and a ``CLRecv`` on the target device.
Links that share a data channel share one ``CLRecv``; a ``LinkFilter`` per
link then routes the receiver output to the right consumer.  Unannotated
cross-device links are carried by plain ``PUBLISH_<KIND>`` /
``SUBSCRIBE_<KIND>`` blocks.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from secfb.core import (
    Application,
    Connection,
    DataKind,
    Diagnostic,
    Endpoint,
    FBNetwork,
    SecGoal,
    SecureLink,
    UnmappedInstanceError,
    validate_application,
)
from secfb.parser import serialize_application
from secfb.transport.channels import ChannelId

__all__ = [
    "CompileError",
    "ChannelAllocationError",
    "ChannelTriple",
    "LinkKind",
    "LinkPlan",
    "DeploymentPlan",
    "DEFAULT_BASE",
    "allocate_channels",
    "compile_secure_links",
    "emit_plan",
    "format_manifest",
    "parse_manifest",
]

log = logging.getLogger(__name__)

DEFAULT_BASE = ChannelId("239.0.0.1", 61000)
RESTART_NAME = "CL_RESTART"


class CompileError(ValueError):
    def __init__(self, diagnostics: Sequence[Diagnostic]):
        self.diagnostics = list(diagnostics)
        head = str(self.diagnostics[0]) if self.diagnostics else "compilation failed"
        more = f" (and {len(self.diagnostics) - 1} more)" if len(self.diagnostics) > 1 else ""
        super().__init__(head + more)


class ChannelAllocationError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelTriple:
    data: ChannelId
    ke: ChannelId
    ts: ChannelId


class LinkKind(enum.Enum):
    SECURE = "secure"
    BASELINE = "baseline"  # instrumented, unencrypted stand-in for a secure link
    PLAIN = "plain"


@dataclass(frozen=True)
class LinkPlan:
    link_id: int
    kind: LinkKind
    connection: Connection
    carrier: Connection
    source_device: str
    target_device: str
    sender: str
    receiver: str
    channels: ChannelTriple
    keysize: int = 0
    rekey_ms: int = 0
    alg: str = ""


@dataclass(frozen=True)
class DeploymentPlan:
    """Per-device networks after lowering, plus channel and role tables."""

    app: Application
    networks: Mapping[str, FBNetwork]
    links: tuple[LinkPlan, ...] = ()
    warnings: tuple[Diagnostic, ...] = ()

    @property
    def roles(self) -> dict[str, tuple[tuple[int, str], ...]]:
        table: dict[str, list] = {d: [] for d in self.networks}
        for lp in self.links:
            if lp.kind is LinkKind.SECURE:
                table[lp.source_device].append((lp.link_id, "Initiator"))
                table[lp.target_device].append((lp.link_id, "Responder"))
        return {d: tuple(v) for d, v in table.items()}

    def channel_table(self) -> dict[Connection, ChannelTriple]:
        return {lp.connection: lp.channels for lp in self.links}

    def instances_of_type(self, type_name: str) -> list[tuple[str, str]]:
        return [
            (dev, inst)
            for dev, net in self.networks.items()
            for inst, t in net.instances.items()
            if t == type_name
        ]


def _share_key(link: SecureLink, target: Optional[str]):
    if link.channel is None:
        return None
    return (link.alg, link.keysize, link.rekey_ms, target, link.channel)


def allocate_channels(
    links: Sequence[SecureLink],
    base: ChannelId = DEFAULT_BASE,
    targets: Optional[Sequence[Optional[str]]] = None,
) -> list[ChannelTriple]:
    """Link ``i`` gets ports ``base+3i`` (data), ``+1`` (key exchange), ``+2`` (timestamps).

    Two links share the data channel of the first of them iff they agree on
    algorithm, keysize and rekey, go to the same target device and both set
    the same explicit ``channel`` parameter.

    Raises:
        ChannelAllocationError: a port would exceed 65535.
    """
    if targets is None:
        targets = [None] * len(links)
    out: list[ChannelTriple] = []
    shared: dict[Any, ChannelId] = {}
    for i, (link, target) in enumerate(zip(links, targets)):
        port = base.port + 3 * i
        if port + 2 > 65535:
            raise ChannelAllocationError(f"link {i} needs ports {port}-{port + 2}, beyond 65535")
        data = ChannelId(base.group, port)
        key = _share_key(link, target)
        if key is not None:
            data = shared.setdefault(key, data)
        out.append(ChannelTriple(data, ChannelId(base.group, port + 1), ChannelId(base.group, port + 2)))
    return out


class _Namer:
    """4DIAC-style names: ``X``, ``X_0``, ``X_1``..., skipping taken names."""

    def __init__(self, taken):
        self.taken = set(taken)
        self.counters: dict[str, int] = {}

    def __call__(self, base: str) -> str:
        if base not in self.taken and base not in self.counters:
            self.counters[base] = 0
            self.taken.add(base)
            return base
        while True:
            n = self.counters.get(base, 0)
            self.counters[base] = n + 1
            name = f"{base}_{n}"
            if name not in self.taken:
                self.taken.add(name)
                return name


def _find_carrier(app: Application, conn: Connection) -> list[Connection]:
    """Event connections between the same instances whose WITH clauses cover both ports."""
    src_itf = app.instance_type(conn.source.instance).interface
    dst_itf = app.instance_type(conn.target.instance).interface
    found = []
    for ev in app.root.event_conns:
        if ev.source.instance != conn.source.instance or ev.target.instance != conn.target.instance:
            continue
        if conn.source.port in src_itf.with_assoc.get(ev.source.port, ()) and conn.target.port in dst_itf.with_assoc.get(
            ev.target.port, ()
        ):
            found.append(ev)
    return found


@dataclass
class _Pending:
    conn: Connection
    link: Optional[SecureLink]
    kind: LinkKind
    carrier: Connection
    src_dev: str
    dst_dev: str
    data_kind: DataKind
    plan: Optional[LinkPlan] = None
    index: int = 0


@dataclass
class _DeviceBuild:
    instances: dict = field(default_factory=dict)
    event_conns: list = field(default_factory=list)
    data_conns: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    init_chain: list = field(default_factory=list)


def compile_secure_links(
    app: Application,
    library=None,
    *,
    base: ChannelId = DEFAULT_BASE,
    encrypt: bool = True,
    lower_local: bool = False,
    group: Optional[str] = None,
    ke_timeout_ms: Optional[int] = None,
) -> DeploymentPlan:
    """Lower annotated links into CLSender/CLRecv networks, one per device.

    Args:
        app: The application; it is validated first.
        library: Unused beyond type resolution through ``app``; accepted so
            callers can pass an explicit library.
        base: First channel; see :func:`allocate_channels`.
        encrypt: False swaps in the instrumented PlainSender/PlainRecv pair
            (the no-encryption baseline).
        lower_local: Also lower secure links whose endpoints share a device
            (normally a warning and left alone).
        group: DH group name bound to every KE block (default: MODP 2048).
        ke_timeout_ms: Key-exchange timeout bound to every KE block.

    Raises:
        CompileError: validation errors, unsupported goals or algorithms,
            missing or ambiguous carrier events.
    """
    errors = [d for d in validate_application(app) if d.severity == "error"]
    if errors:
        raise CompileError(errors)
    warnings: list[Diagnostic] = []
    try:
        dev = {inst: app.mapping[inst] for inst in app.root.instances}
    except KeyError as exc:
        raise UnmappedInstanceError(exc.args[0]) from None

    pending: list[_Pending] = []
    lowered_events: set[Connection] = set()
    carriers_used: dict[Connection, Connection] = {}
    # events next to an already rejected link are not reported again
    rejected_events: set[Connection] = set()
    for conn in app.root.data_conns:
        link = app.secure_link_for(conn)
        src_dev, dst_dev = dev[conn.source.instance], dev[conn.target.instance]
        where = f"app: {conn}"
        if link is not None:
            if link.sec_goal is not SecGoal.CONFIDENTIALITY:
                errors.append(
                    Diagnostic("unsupported-goal", f"security goal {link.sec_goal.name.capitalize()} is not supported yet", where, span=link.span)
                )
                rejected_events.update(_find_carrier(app, conn))
                continue
            if link.alg != "AES":
                errors.append(Diagnostic("unsupported-alg", f"algorithm {link.alg} is not available for Confidentiality", where, span=link.span))
                rejected_events.update(_find_carrier(app, conn))
                continue
            if src_dev == dst_dev and not lower_local:
                warnings.append(
                    Diagnostic("local-link", "secure link between instances on one device is left untransformed", where, "warning", link.span)
                )
                continue
        elif src_dev == dst_dev:
            continue
        kind = app.instance_type(conn.source.instance).interface.output_kind(conn.source.port)
        if link is not None and kind is not DataKind.BOOL:
            errors.append(Diagnostic("unsupported-kind", f"secure links carry BOOL only, got {kind.value}", where, span=link.span))
            rejected_events.update(_find_carrier(app, conn))
            continue
        carriers = _find_carrier(app, conn)
        if len(carriers) != 1:
            what = "no" if not carriers else "more than one"
            errors.append(Diagnostic("carrier", f"{what} event connection carries this data connection across devices", where, span=conn.span))
            continue
        carrier = carriers[0]
        if carrier in carriers_used:
            errors.append(
                Diagnostic("carrier", f"event connection {carrier} already carries {carriers_used[carrier]}", where, span=conn.span)
            )
            continue
        carriers_used[carrier] = conn
        lowered_events.add(carrier)
        if link is None:
            lk = LinkKind.PLAIN
        else:
            lk = LinkKind.SECURE if encrypt else LinkKind.BASELINE
        pending.append(_Pending(conn, link, lk, carrier, src_dev, dst_dev, kind))
    for ev in app.root.event_conns:
        if dev[ev.source.instance] != dev[ev.target.instance] and ev not in lowered_events and ev not in rejected_events:
            errors.append(Diagnostic("carrier", "cross-device event connection carries no data connection", f"app: {ev}", span=ev.span))
    if errors:
        raise CompileError(errors)

    # secure links first, plain links after, each in declaration order
    ordered = [p for p in pending if p.kind is not LinkKind.PLAIN] + [p for p in pending if p.kind is LinkKind.PLAIN]
    fake = SecureLink(Connection.of("x.y", "x.z"), SecGoal.CONFIDENTIALITY, "")
    triples = allocate_channels([p.link or fake for p in ordered], base, [p.dst_dev for p in ordered])

    namer = _Namer(app.root.instances)
    restart_names: dict[str, str] = {}
    builds: dict[str, _DeviceBuild] = {}
    for d in app.devices:
        b = _DeviceBuild()
        for inst, t in app.root.instances.items():
            if dev[inst] == d:
                b.instances[inst] = t
        builds[d] = b
    lowered_data = {p.conn for p in pending}
    for conn in app.root.event_conns:
        if conn not in lowered_events and dev[conn.source.instance] == dev[conn.target.instance]:
            builds[dev[conn.source.instance]].event_conns.append(conn)
    for conn in app.root.data_conns:
        if conn not in lowered_data and dev[conn.source.instance] == dev[conn.target.instance]:
            builds[dev[conn.source.instance]].data_conns.append(conn)
    for (inst, port), value in app.root.params.items():
        builds[dev[inst]].params[(inst, port)] = value

    sender_type = {LinkKind.SECURE: "CLSender", LinkKind.BASELINE: "PlainSender"}
    receiver_type = {LinkKind.SECURE: "CLRecv", LinkKind.BASELINE: "PlainRecv"}
    sender_ids = {d: i + 1 for i, d in enumerate(app.devices)}

    def ke_params(b: _DeviceBuild, inst: str) -> None:
        if group is not None:
            b.params[(inst, "GROUP")] = group
        if ke_timeout_ms is not None:
            b.params[(inst, "TIMEOUT")] = ke_timeout_ms

    # senders
    for i, p in enumerate(ordered):
        p.index = i
        link_id = i + 1
        b = builds[p.src_dev]
        ch = triples[i]
        if p.kind is LinkKind.PLAIN:
            name = namer("Pub")
            b.instances[name] = f"PUBLISH_{p.data_kind.value}"
        else:
            name = namer(sender_type[p.kind])
            b.instances[name] = sender_type[p.kind]
        b.params[(name, "ID")] = str(ch.data)
        b.params[(name, "LINK")] = link_id
        b.params[(name, "SENDER")] = sender_ids[p.src_dev]
        if p.kind is not LinkKind.PLAIN:
            b.params[(name, "TSID")] = str(ch.ts)
        if p.kind is LinkKind.SECURE:
            b.params[(name, "KEID")] = str(ch.ke)
            b.params[(name, "keysize")] = p.link.keysize
            b.params[(name, "rekey")] = p.link.rekey_ms
            ke_params(b, name)
        b.data_conns.append(Connection(p.conn.source, Endpoint(name, "SD_1")))
        b.event_conns.append(Connection(p.carrier.source, Endpoint(name, "REQ")))
        b.init_chain.append(name)
        p.plan = name  # sender name, completed below

    # receivers: one per (target device, data channel, kind)
    groups: dict[tuple, list[_Pending]] = {}
    for p in ordered:
        key = (p.dst_dev, triples[p.index].data, p.kind, p.data_kind) if p.kind is not LinkKind.PLAIN else ("plain", p.index)
        groups.setdefault(key, []).append(p)
    receiver_of: dict[int, str] = {}
    for members in groups.values():
        first = members[0]
        b = builds[first.dst_dev]
        if first.kind is LinkKind.PLAIN:
            name = namer("Sub")
            b.instances[name] = f"SUBSCRIBE_{first.data_kind.value}"
        else:
            name = namer(receiver_type[first.kind])
            b.instances[name] = receiver_type[first.kind]
        b.params[(name, "ID")] = str(triples[first.index].data)
        b.params[(name, "LINKS")] = ",".join(str(m.index + 1) for m in members)
        if first.kind is not LinkKind.PLAIN:
            b.params[(name, "TSID")] = ",".join(str(triples[m.index].ts) for m in members)
        if first.kind is LinkKind.SECURE:
            b.params[(name, "KEID")] = ",".join(str(triples[m.index].ke) for m in members)
            b.params[(name, "keysize")] = first.link.keysize
            ke_params(b, name)
        b.init_chain.append(name)
        for m in members:
            receiver_of[m.index] = name
            if len(members) == 1:
                b.data_conns.append(Connection(Endpoint(name, "RD_1"), m.conn.target))
                b.event_conns.append(Connection(Endpoint(name, "IND"), m.carrier.target))
                continue
            filt = namer(f"{name}_LF")
            b.instances[filt] = "LinkFilter"
            b.params[(filt, "MATCH")] = m.index + 1
            b.event_conns.append(Connection(Endpoint(name, "IND"), Endpoint(filt, "REQ")))
            b.data_conns.append(Connection(Endpoint(name, "RD_1"), Endpoint(filt, "IN")))
            b.data_conns.append(Connection(Endpoint(name, "LINK"), Endpoint(filt, "LINK")))
            b.data_conns.append(Connection(Endpoint(filt, "OUT"), m.conn.target))
            b.event_conns.append(Connection(Endpoint(filt, "CNF"), m.carrier.target))

    receiver_names = set(receiver_of.values())
    # one restart block per device chains the INITs of the added blocks
    for d, b in builds.items():
        if not b.init_chain:
            continue
        rst = namer(RESTART_NAME)
        restart_names[d] = rst
        b.instances[rst] = "E_RESTART"
        prev = Endpoint(rst, "COLD")
        # receivers subscribe before any local sender starts a key exchange
        receivers = [i for i in b.init_chain if i in receiver_names]
        for inst in receivers + [i for i in b.init_chain if i not in receiver_names]:
            b.event_conns.append(Connection(prev, Endpoint(inst, "INIT")))
            prev = Endpoint(inst, "INITO")

    plans = []
    for p in ordered:
        link = p.link
        plans.append(
            LinkPlan(
                p.index + 1,
                p.kind,
                p.conn,
                p.carrier,
                p.src_dev,
                p.dst_dev,
                p.plan,
                receiver_of[p.index],
                triples[p.index],
                link.keysize if link else 0,
                link.rekey_ms if link else 0,
                link.alg if link else "",
            )
        )
    networks = {
        d: FBNetwork(dict(b.instances), tuple(b.event_conns), tuple(b.data_conns), dict(b.params))
        for d, b in builds.items()
    }
    for w in warnings:
        log.warning("%s", w)
    return DeploymentPlan(app, networks, tuple(plans), tuple(warnings))


def plan_application(plan: DeploymentPlan, device: str) -> Application:
    """A single-device application holding ``device``'s lowered network."""
    net = plan.networks[device]
    local_links = tuple(
        link
        for link in plan.app.secure_links
        if link.d_con in net.data_conns
    )
    return Application(
        dict(plan.app.fb_types),
        net,
        (device,),
        {inst: device for inst in net.instances},
        local_links,
    )


def emit_plan(plan: DeploymentPlan) -> dict[str, str]:
    """One canonical ``.fbs`` document per device, keyed by device name."""
    return {d: serialize_application(plan_application(plan, d)) for d in plan.networks}


_MANIFEST_HEADER = "# secfb channel manifest v1"


def format_manifest(plan: DeploymentPlan) -> str:
    """Line-oriented channel and role table: ``link`` and ``role`` records of key=value fields."""
    lines = [_MANIFEST_HEADER]
    for d in plan.networks:
        lines.append(f"device name={d} file={d}.fbs")
    for lp in plan.links:
        fields = [
            f"id={lp.link_id}",
            f"kind={lp.kind.value}",
            f"conn={lp.connection.source}->{lp.connection.target}",
            f"source={lp.source_device}",
            f"sender={lp.sender}",
            f"target={lp.target_device}",
            f"receiver={lp.receiver}",
            f"data={lp.channels.data}",
            f"ke={lp.channels.ke}",
            f"ts={lp.channels.ts}",
        ]
        if lp.kind is not LinkKind.PLAIN:
            fields += [f"alg={lp.alg}", f"keysize={lp.keysize}", f"rekey_ms={lp.rekey_ms}"]
        lines.append("link " + " ".join(fields))
    for d, roles in plan.roles.items():
        for link_id, role in roles:
            lines.append(f"role device={d} link={link_id} role={role}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> list[tuple[str, dict[str, str]]]:
    """Records as ``(record_type, fields)``; comments and blank lines are skipped."""
    records = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        kind, *parts = line.split()
        fields = {}
        for part in parts:
            key, sep, value = part.partition("=")
            if not sep:
                raise ValueError(f"manifest line {lineno}: expected key=value, got {part!r}")
            fields[key] = value
        records.append((kind, fields))
    return records
