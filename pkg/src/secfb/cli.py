"""Command line entry point: compile, run, bench and inspect FB applications."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from secfb.compiler import (
    ChannelAllocationError,
    CompileError,
    DEFAULT_BASE,
    compile_secure_links,
    emit_plan,
    format_manifest,
    parse_manifest,
)
from secfb.core import AES_KEY_SIZES, Application, UnmappedInstanceError, cross_device_connections, validate_application
from secfb.parser import ParseError, parse_application
from secfb.transport.channels import ChannelId

log = logging.getLogger("secfb")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

MANIFEST_NAME = "manifest.txt"
CASE_STUDY = "@casestudy"

EPILOG = """\
exit status:
  0  success
  1  usage error (unknown flag, bad value)
  2  parse or validation diagnostics
  3  runtime fault
  4  file cannot be read or written

Pass @casestudy instead of a file to use the packaged protection case study.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None


class _IOFailure(Exception):
    pass


def load_app(path: str) -> Application:
    if path == CASE_STUDY:
        from secfb.bench.casestudy import build_case_study

        return build_case_study()
    # case-study types rely on the stub service and protection algorithms
    import secfb.bench.protection  # noqa: F401

    return parse_application(_read_text(path), path)


def _base_channel(args) -> ChannelId:
    try:
        return ChannelId(args.base_group, args.base_port)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_compile(args) -> int:
    app = load_app(args.app)
    plan = compile_secure_links(
        app,
        base=_base_channel(args),
        encrypt=not args.no_encrypt,
        group=args.group,
        ke_timeout_ms=args.ke_timeout_ms,
    )
    for w in plan.warnings:
        print(f"warning: {w}", file=sys.stderr)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for device, text in emit_plan(plan).items():
            (out / f"{device}.fbs").write_text(text, encoding="utf-8")
        (out / MANIFEST_NAME).write_text(format_manifest(plan), encoding="utf-8")
    except OSError as exc:
        raise _IOFailure(f"cannot write to {out}: {exc.strerror or exc}") from None
    print(f"wrote {len(plan.networks)} device files and {MANIFEST_NAME} to {out}")
    return EXIT_OK


def _load_plan_dir(path: str):
    plan_dir = Path(path)
    manifest = parse_manifest(_read_text(str(plan_dir / MANIFEST_NAME)))
    docs = {}
    for kind, fields in manifest:
        if kind == "device":
            name = fields["name"]
            docs[name] = parse_application(_read_text(str(plan_dir / fields["file"])), fields["file"])
    return manifest, docs


def cmd_run(args) -> int:
    import secfb.bench.protection  # noqa: F401
    from secfb.runtime.engine import RuntimeFault

    manifest, docs = _load_plan_dir(args.plan_dir)
    selected = args.device or list(docs)
    unknown = [d for d in selected if d not in docs]
    if unknown:
        raise UsageError(f"unknown device {unknown[0]}; the plan has {', '.join(docs)}")
    try:
        if args.mode == "virtual":
            runtimes = _run_virtual(args, docs)
        else:
            runtimes = _run_real(args, docs, selected)
    except RuntimeFault as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    faulted = False
    for name in selected:
        rt = runtimes.get(name)
        if rt is None:
            continue
        print(f"device {name}: {rt.counters['events_processed']} events processed")
        for link in sorted({s.link for s in rt.samples}):
            lat = [s.latency for s in rt.samples if s.link == link]
            print(f"  link {link}: {len(lat)} samples, L min {min(lat):g} ms, max {max(lat):g} ms")
        for key, n in sorted(rt.counters.items()):
            if ":" in key:
                print(f"  {key} = {n}")
        for d in rt.diagnostics:
            print(f"  {d}")
        faulted = faulted or any(inst.faulted for inst in rt.instances.values())
    return EXIT_RUNTIME if faulted else EXIT_OK


def _run_virtual(args, docs):
    from secfb.runtime.simulation import Simulation
    from secfb.transport.loopback import LatencyModel

    sim = Simulation(LatencyModel(args.latency_ms, seed=args.seed), seed=args.seed)
    for name, app in docs.items():
        sim.add_device(name, app.root, app.type_of)
    sim.start()
    sim.run_until(args.duration * 1000.0)
    return sim.devices


def _run_real(args, docs, selected):
    from secfb.clock import RealClock
    from secfb.runtime.engine import DeviceRuntime
    from secfb.runtime.simulation import run_real
    from secfb.transport.multicast import MulticastTransport

    clock = RealClock()
    runtimes = {}
    for name in selected:
        app = docs[name]
        transport = MulticastTransport(name, args.interface)
        runtimes[name] = DeviceRuntime(name, app.root, app.type_of, None, clock, transport, trace=False)
    try:
        for rt in runtimes.values():
            rt.start()
        run_real(list(runtimes.values()), args.duration)
    finally:
        for rt in runtimes.values():
            rt.transport.close()
    return runtimes


def cmd_bench(args) -> int:
    from secfb.bench.harness import MIN_CYCLES, BenchError, Topology, run_latency_bench
    from secfb.bench.report import render_figure, render_table, render_verdicts, write_csv
    from secfb.transport.loopback import LatencyModel

    if args.cycles < MIN_CYCLES:
        raise UsageError(f"--cycles must be at least {MIN_CYCLES}")
    app = load_app(args.app)
    latency = LatencyModel(args.latency_ms, jitter_ms=args.jitter_ms, seed=args.seed)
    topologies = [Topology(args.topology)] if args.topology else list(Topology)
    keysizes = [args.keysize] if args.keysize else sorted(AES_KEY_SIZES)
    cost = None
    if args.cost == "host":
        from secfb.runtime.costs import CostModel

        cost = CostModel.calibrate().scaled(args.cost_scale)
    common = dict(latency=latency, seed=args.seed, group=args.group, period_ms=args.period_ms, cost=cost)
    try:
        reports = [run_latency_bench(app, args.cycles, None, t, encrypt=False, **common) for t in topologies]
        if not args.no_encrypt:
            reports += [run_latency_bench(app, args.cycles, k, t, **common) for k in keysizes for t in topologies]
    except BenchError as exc:
        print(f"secfb: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.format == "csv":
        sys.stdout.write(write_csv(reports))
    else:
        sys.stdout.write(render_table(reports))
        sys.stdout.write("\n" + render_verdicts(reports))
    if args.figure:
        render_figure(reports, args.figure)
        print(f"figure written to {args.figure}", file=sys.stderr)
    broken = [r for r in reports if r.missing or r.trip_mismatches]
    return EXIT_RUNTIME if broken else EXIT_OK


def cmd_inspect(args) -> int:
    app = load_app(args.app)
    errors = [d for d in validate_application(app) if d.severity == "error"]
    for d in errors:
        print(d, file=sys.stderr)
    if errors:
        return EXIT_INVALID
    for device in app.devices:
        print(f"device {device}")
        for inst, t in app.root.instances.items():
            if app.mapping.get(inst) == device:
                print(f"  {inst} : {t}")
    remote = cross_device_connections(app)
    print(f"{len(app.root.data_conns)} data connections, {len(remote)} across devices")
    n = len(app.secure_links)
    print(f"{n} secure link{'' if n == 1 else 's'}")
    for link in app.secure_links:
        params = ", ".join(f"{k}={v}" for k, v in sorted(link.params.items()))
        print(f"  {link.d_con.source} -> {link.d_con.target}: {link.sec_goal.name.capitalize()} {link.alg} {params}".rstrip())
    if n or remote:
        plan = compile_secure_links(app, base=_base_channel(args))
        print("channel table")
        for lp in plan.links:
            print(
                f"  link {lp.link_id} {lp.kind.value:<8} {lp.connection.source}->{lp.connection.target} "
                f"data {lp.channels.data} ke {lp.channels.ke} ts {lp.channels.ts}"
            )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="secfb",
        description="Annotate, compile and benchmark confidential IEC 61499 function-block links.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def channel_args(p):
        p.add_argument("--base-port", type=int, default=DEFAULT_BASE.port, help="first port (default %(default)s)")
        p.add_argument("--base-group", default=DEFAULT_BASE.group, help="multicast group (default %(default)s)")

    p = sub.add_parser("compile", help="lower secure links and write one document per device", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("app", help="application .fbs file")
    p.add_argument("--out", required=True, help="output directory")
    channel_args(p)
    p.add_argument("--group", choices=("modp2048", "toy23"), help="Diffie-Hellman group (default modp2048)")
    p.add_argument("--ke-timeout-ms", type=int, help="key exchange timeout")
    p.add_argument("--no-encrypt", action="store_true", help="emit the unencrypted instrumented baseline")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="run a compiled plan directory", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("plan_dir", help="directory written by compile")
    p.add_argument("--device", action="append", help="device to run or report (repeatable; default all)")
    p.add_argument("--mode", choices=("virtual", "real"), default="virtual")
    p.add_argument("--duration", type=float, default=1.0, help="seconds of (virtual or wall-clock) time")
    p.add_argument("--latency-ms", type=float, default=0.0, help="one-way delay between devices (virtual mode)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--interface", default="0.0.0.0", help="multicast interface address (real mode)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="measure trip-signal latency", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("app", help="application .fbs file")
    p.add_argument("--cycles", type=int, default=100)
    p.add_argument("--keysize", type=int, choices=sorted(AES_KEY_SIZES), help="default: all three")
    p.add_argument("--topology", choices=("single", "distributed"), help="default: both")
    p.add_argument("--latency-ms", type=float, default=1.0, help="one-way delay between devices (default %(default)s)")
    p.add_argument("--jitter-ms", type=float, default=0.0, help="uniform extra delay bound")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group", choices=("modp2048", "toy23"), help="Diffie-Hellman group (default modp2048)")
    p.add_argument("--period-ms", type=int, help="override the sampling period of the stub sources")
    p.add_argument("--no-encrypt", action="store_true", help="only the unencrypted baseline")
    p.add_argument("--cost", choices=("none", "host"), default="none",
                   help="processing time model: none (transport delay only) or measured on this host")
    p.add_argument("--cost-scale", type=float, default=1.0, help="multiply host costs, e.g. to mimic slower devices")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.add_argument("--figure", metavar="PATH", help="also write a latency box plot (needs matplotlib)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print network, secure links and channel table", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("app", help="application .fbs file")
    channel_args(p)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"secfb: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _IOFailure as exc:
        print(f"secfb: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParseError, CompileError) as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_INVALID
    except (UnmappedInstanceError, ChannelAllocationError) as exc:
        print(f"secfb: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
