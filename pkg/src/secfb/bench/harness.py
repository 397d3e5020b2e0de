"""Latency harness: t1 before encryption, t2 after decryption, L = t2 - t1.

A scenario is compiled, run on the virtual clock over a loopback fabric
until every instrumented link has delivered ``cycles`` frames, and reduced
to a :class:`BenchReport`.
"""

from __future__ import annotations

import enum
import logging
import statistics
from dataclasses import dataclass, field
from typing import Optional, Sequence

from secfb.bench.casestudy import co_located, set_params, with_keysize
from secfb.bench.protection import DEFAULT_CONFIGS, ProtectionConfig, ProtectionFunction
from secfb.compiler import DeploymentPlan, LinkKind, LinkPlan, compile_secure_links
from secfb.core import Application
from secfb.runtime.costs import DH_COST, CostModel
from secfb.runtime.engine import LatencySample
from secfb.runtime.simulation import Simulation
from secfb.transport.loopback import LatencyModel

__all__ = [
    "BenchError",
    "Topology",
    "Verdict",
    "BenchReport",
    "MIN_CYCLES",
    "prepare_scenario",
    "run_plan",
    "run_latency_bench",
    "run_matrix",
]

log = logging.getLogger(__name__)

MIN_CYCLES = 100
WARMUP_TYPE = "E_DELAY"
TICK_TYPE = "E_CYCLE"


class BenchError(ValueError):
    pass


class Topology(enum.Enum):
    SINGLE = "single"
    DISTRIBUTED = "distributed"


@dataclass(frozen=True)
class Verdict:
    function: ProtectionFunction
    deadline: float
    passed: int
    failed: int

    @property
    def total(self) -> int:
        return self.passed + self.failed


@dataclass(frozen=True)
class BenchReport:
    """Aggregated latencies of one configuration.

    Attributes:
        label: ``"AES128"`` etc., or ``"Latency without encryption"``.
        keysize: 0 for the unencrypted baseline.
        topology: Device layout the plan was run on.
        cycles: Frames measured per link.
        samples: The measured samples, ordered by (link, seq).
        verdicts: Deadline pass/fail counts per protection function.
        trip_mismatches: Links whose received values are not a prefix of the
            sent values, or that delivered fewer than ``cycles`` values.
    """

    label: str
    keysize: int
    topology: Topology
    cycles: int
    latency_ms: float
    samples: tuple[LatencySample, ...]
    verdicts: tuple[Verdict, ...] = ()
    missing: int = 0
    trip_mismatches: tuple[int, ...] = ()
    link_functions: dict = field(default_factory=dict, compare=False)

    @property
    def encrypted(self) -> bool:
        return self.keysize > 0

    def _latencies(self) -> list[float]:
        return [s.latency for s in self.samples]

    @property
    def min(self) -> float:
        return min(self._latencies())

    @property
    def max(self) -> float:
        return max(self._latencies())

    @property
    def mean(self) -> float:
        return statistics.fmean(self._latencies())

    def rows(self):
        """``(cycle, link, t1, t2, L, epoch)`` per sample."""
        for s in self.samples:
            yield (s.seq, s.link, s.t1, s.t2, s.latency, s.epoch)


def prepare_scenario(
    app: Application,
    *,
    keysize: Optional[int] = None,
    topology: Topology = Topology.DISTRIBUTED,
    encrypt: bool = True,
    group: Optional[str] = None,
    warmup_ms: Optional[int] = None,
    period_ms: Optional[int] = None,
) -> DeploymentPlan:
    """Apply the scenario knobs to ``app`` and compile it."""
    app = with_keysize(app, keysize)
    overrides = {}
    for inst, type_name in app.root.instances.items():
        if warmup_ms is not None and type_name == WARMUP_TYPE:
            overrides[(inst, "DT")] = int(warmup_ms)
        if period_ms is not None and type_name == TICK_TYPE:
            overrides[(inst, "DT")] = int(period_ms)
    if overrides:
        app = set_params(app, overrides)
    if topology is Topology.SINGLE:
        app = co_located(app)
    return compile_secure_links(app, encrypt=encrypt, lower_local=topology is Topology.SINGLE, group=group)


def _function_of(plan: DeploymentPlan, lp: LinkPlan) -> Optional[ProtectionFunction]:
    return ProtectionFunction.for_type(plan.app.instance_type(lp.connection.source.instance).name)


def _sent_and_received(sim: Simulation, lp: LinkPlan) -> tuple[list, list]:
    sent_path = f"{lp.sender}.ConvertToArray"
    target = lp.connection.target
    sent, received = [], []
    for e in sim.trace:
        if e.instance == sent_path and e.event == "REQ":
            sent.append(dict(e.inputs)["IN"])
        elif e.instance == target.instance and e.event == lp.carrier.target.port:
            received.append(dict(e.inputs)[target.port])
    return sent, received


def _label(links: Sequence[LinkPlan]) -> str:
    if links[0].kind is not LinkKind.SECURE:
        return "Latency without encryption"
    return "AES" + "/".join(str(k) for k in sorted({lp.keysize for lp in links}))


def run_plan(
    plan: DeploymentPlan,
    cycles: int = MIN_CYCLES,
    latency: LatencyModel | float = 0.0,
    *,
    seed: int = 0,
    configs: Optional[dict[ProtectionFunction, ProtectionConfig]] = None,
    label: Optional[str] = None,
    topology: Optional[Topology] = None,
    time_limit_ms: Optional[float] = None,
    check_trips: bool = True,
    cost: Optional[CostModel] = None,
) -> BenchReport:
    """Run a compiled plan until each instrumented link delivered ``cycles`` frames.

    Raises:
        BenchError: fewer than 100 cycles, or no instrumented link in the plan.
    """
    if cycles < MIN_CYCLES:
        raise BenchError(f"at least {MIN_CYCLES} cycles are required, got {cycles}")
    links = [lp for lp in plan.links if lp.kind is not LinkKind.PLAIN]
    if not links:
        raise BenchError("the plan has no instrumented links (no CLSender or PlainSender)")
    configs = configs or DEFAULT_CONFIGS
    if not isinstance(latency, LatencyModel):
        latency = LatencyModel(float(latency), seed=seed)
    sim = Simulation.from_plan(plan, latency=latency, seed=seed, trace=check_trips, cost=cost)
    sim.start()

    limit = time_limit_ms if time_limit_ms is not None else 60_000.0 + cycles * 100.0
    wanted = {lp.link_id for lp in links}

    def done() -> bool:
        seen: dict[int, int] = {}
        for s in sim.samples:
            if s.seq < cycles:
                seen[s.link] = seen.get(s.link, 0) + 1
        return all(seen.get(link, 0) >= cycles for link in wanted)

    step = 50.0
    while not done() and sim.clock.now() < limit:
        sim.run_for(step)
    # let frames in flight land so the sent and received sequences line up
    sim.run_for(2 * latency.default_ms + latency.jitter_ms + max(latency.per_pair.values(), default=0.0) + 1.0)

    by_key = {(s.link, s.seq): s for s in sim.samples if s.link in wanted and s.seq < cycles}
    samples = tuple(by_key[k] for k in sorted(by_key))
    missing = len(wanted) * cycles - len(samples)
    if not samples:
        raise BenchError("no latency samples were recorded")

    verdict_counts: dict[ProtectionFunction, list[int]] = {}
    link_functions = {}
    for lp in links:
        fn = _function_of(plan, lp)
        link_functions[lp.link_id] = fn
        if fn is None:
            continue
        counts = verdict_counts.setdefault(fn, [0, 0])
        deadline = configs[fn].deadline
        for seq in range(cycles):
            s = by_key.get((lp.link_id, seq))
            counts[0 if s is not None and s.latency <= deadline else 1] += 1
    verdicts = tuple(
        Verdict(fn, configs[fn].deadline, p, f) for fn, (p, f) in sorted(verdict_counts.items(), key=lambda kv: kv[0].value)
    )

    mismatches = []
    if check_trips:
        for lp in links:
            sent, received = _sent_and_received(sim, lp)
            # frames still in flight at the cut-off are not losses
            if len(received) < cycles or received != sent[: len(received)]:
                mismatches.append(lp.link_id)
    first = links[0]
    if label is None:
        label = _label(links)
    if topology is None:
        topology = Topology.DISTRIBUTED if len(plan.networks) > 1 else Topology.SINGLE
    for d in sim.diagnostics:
        log.warning("%s", d)
    return BenchReport(
        label,
        first.keysize if first.kind is LinkKind.SECURE else 0,
        topology,
        cycles,
        latency.default_ms,
        samples,
        verdicts,
        missing,
        tuple(mismatches),
        link_functions,
    )


def run_latency_bench(
    scenario: Application | DeploymentPlan,
    cycles: int = MIN_CYCLES,
    keysize: Optional[int] = None,
    topology: Topology = Topology.DISTRIBUTED,
    latency: LatencyModel | float = 0.0,
    *,
    encrypt: bool = True,
    seed: int = 0,
    group: Optional[str] = None,
    period_ms: Optional[int] = None,
    configs: Optional[dict[ProtectionFunction, ProtectionConfig]] = None,
    cost: Optional[CostModel] = None,
) -> BenchReport:
    """Measure one configuration.

    An :class:`Application` is compiled for the requested key size and
    topology first; a :class:`DeploymentPlan` is run as is.

    Args:
        scenario: Annotated application or compiled plan.
        cycles: Frames measured per link, at least 100.
        keysize: Overrides every annotation's key size.
        topology: SINGLE co-locates all instances on one device.
        latency: One-way delay between distinct devices in ms, or a model.
        encrypt: False runs the unencrypted instrumented baseline.
        seed: Seeds padding, key pairs and jitter.
        group: DH group name for the key exchange blocks.
        period_ms: Overrides the stub sampling period.
        cost: Processing time charged per algorithm; None charges nothing.
    """
    if cycles < MIN_CYCLES:
        raise BenchError(f"at least {MIN_CYCLES} cycles are required, got {cycles}")
    if isinstance(scenario, DeploymentPlan):
        return run_plan(scenario, cycles, latency, seed=seed, configs=configs, cost=cost)
    if not isinstance(latency, LatencyModel):
        latency = LatencyModel(float(latency), seed=seed)
    one_way = latency.default_ms + latency.jitter_ms + max(latency.per_pair.values(), default=0.0)
    dh_ms = cost.cost(DH_COST, {}) if cost is not None else 0.0
    # key exchange (request, reply and the modular exponentiations) must finish before the first sample
    warmup = max(50, int(4 * one_way + 16 * dh_ms) + 20)
    plan = prepare_scenario(
        scenario,
        keysize=keysize,
        topology=topology,
        encrypt=encrypt,
        group=group,
        warmup_ms=warmup,
        period_ms=period_ms,
    )
    return run_plan(plan, cycles, latency, seed=seed, configs=configs, topology=topology, cost=cost)


def run_matrix(
    app: Application,
    cycles: int = MIN_CYCLES,
    keysizes: Sequence[int] = (128, 192, 256),
    topologies: Sequence[Topology] = (Topology.SINGLE, Topology.DISTRIBUTED),
    latency: LatencyModel | float = 0.0,
    *,
    seed: int = 0,
    group: Optional[str] = None,
    period_ms: Optional[int] = None,
    cost: Optional[CostModel] = None,
) -> list[BenchReport]:
    """The unencrypted baseline plus every (keysize, topology) pair, baseline first."""
    common = dict(seed=seed, group=group, period_ms=period_ms, cost=cost)
    reports = [run_latency_bench(app, cycles, None, t, latency, encrypt=False, **common) for t in topologies]
    for keysize in keysizes:
        for topology in topologies:
            reports.append(run_latency_bench(app, cycles, keysize, topology, latency, **common))
    return reports
