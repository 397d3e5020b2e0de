"""Acceptance criteria 1 to 10.

Each test measures its criterion, records one PASS or FAIL line (printed in
the terminal summary and on stdout) and then asserts the same condition.
"""

import random
import time

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

import secfb.bench  # noqa: F401  registers the protection algorithms
from apps import CORPUS, RELAY, load, random_link_app
from conftest import ACCEPTANCE
from secfb.bench import Topology, build_case_study, run_latency_bench, run_matrix
from secfb.bench.casestudy import casestudy_source, co_located
from secfb.compiler import compile_secure_links, emit_plan, format_manifest
from secfb.core import SecGoal, validate_application
from secfb.crypto.aes import aes_decrypt_block, aes_encrypt_block, aes_key_expansion
from secfb.crypto.dh import MODP_2048, TOY_GROUP, dh_keypair, dh_shared_secret
from secfb.crypto.entropy import SeededEntropy
from secfb.parser import parse_application, serialize_application
from secfb.runtime.simulation import Simulation
from secfb.transport.frame import MsgType, WireFrame, decode_frame, encode_frame


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    assert ok, line


# FIPS-197 Appendix C
KAT_PT = bytes.fromhex("00112233445566778899aabbccddeeff")
KAT = {
    128: ("000102030405060708090a0b0c0d0e0f", "69c4e0d86a7b0430d8cdb78070b4c55a"),
    192: ("000102030405060708090a0b0c0d0e0f1011121314151617", "dda97ca4864cdfe06eaf70a0ec0d7191"),
    256: (
        "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f",
        "8ea2b7ca516745bfeafc49904b496089",
    ),
}


def oracle(key: bytes, block: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def test_criterion_01_aes_conformance():
    start = time.perf_counter()
    matches = 0
    for key_hex, ct_hex in KAT.values():
        key, ct = bytes.fromhex(key_hex), bytes.fromhex(ct_hex)
        sched = aes_key_expansion(key)
        got = aes_encrypt_block(KAT_PT, sched)
        matches += got == ct == oracle(key, KAT_PT) and aes_decrypt_block(ct, sched) == KAT_PT
    elapsed = time.perf_counter() - start
    verdict(1, "AES known answers", matches == 3 and elapsed < 1.0, f"{matches}/3 vectors in {elapsed:.3f} s")


def test_criterion_02_round_trip():
    rng = random.Random(2)
    failures = 0
    start = time.perf_counter()
    for size in (16, 24, 32):
        for _ in range(10_000):
            sched = aes_key_expansion(rng.randbytes(size))
            pt = rng.randbytes(16)
            failures += aes_decrypt_block(aes_encrypt_block(pt, sched), sched) != pt
    elapsed = time.perf_counter() - start
    verdict(2, "AES round trip", failures == 0 and elapsed < 5.0, f"30000 pairs, {failures} failures in {elapsed:.2f} s")


def test_criterion_03_dh():
    toy = dh_shared_secret(6, pow(5, 15, 23), TOY_GROUP), dh_shared_secret(15, pow(5, 6, 23), TOY_GROUP)
    rng = SeededEntropy(3)
    agree = 0
    start = time.perf_counter()
    for _ in range(100):
        a, pa = dh_keypair(MODP_2048, rng)
        b, pb = dh_keypair(MODP_2048, rng)
        agree += dh_shared_secret(a, pb, MODP_2048) == dh_shared_secret(b, pa, MODP_2048)
    elapsed = time.perf_counter() - start
    ok = toy == (2, 2) and agree == 100 and elapsed < 10.0
    verdict(3, "Diffie-Hellman", ok, f"toy secret {toy[0]}, {agree}/100 MODP exchanges agree in {elapsed:.2f} s")


def test_criterion_04_compiler_golden():
    app = build_case_study()
    plan = compile_secure_links(app)
    senders = plan.instances_of_type("CLSender")
    receivers = plan.instances_of_type("CLRecv")
    by_size = {}
    for lp in plan.links:
        by_size.setdefault(lp.keysize, []).append(lp)
    shared = len(by_size[128]) == 2 and by_size[128][0].receiver == by_size[128][1].receiver
    shared = shared and by_size[128][0].channels.data == by_size[128][1].channels.data
    # the sender owns the rekey timer; both ends carry the key size
    bound = all(plan.networks[dev].params.get((inst, "rekey")) == 60_000 for dev, inst in senders)
    bound = bound and [plan.networks[dev].params[(inst, "keysize")] for dev, inst in senders + receivers] == [
        128, 256, 128, 128, 256
    ]
    first = (emit_plan(plan), format_manifest(plan))
    stable = all((emit_plan(p), format_manifest(p)) == first for p in (compile_secure_links(build_case_study()) for _ in range(3)))
    ok = len(senders) == 3 and len(receivers) == 2 and shared and bound and stable
    verdict(
        4,
        "compiler golden",
        ok,
        f"{len(senders)} CLSender, {len(receivers)} CLRecv, 128-bit links share a channel: {shared}, "
        f"params bound: {bound}, byte-identical: {stable}",
    )


def sink_inputs(sim: Simulation) -> list:
    return [dict(e.inputs)["IN"] for e in sim.trace if e.instance == "sink" and e.event == "REQ"]


def test_criterion_05_semantic_preservation():
    start = time.perf_counter()
    equal = 0
    for seed in range(50):
        app = load(random_link_app(seed))
        ref = Simulation.from_application(co_located(app), latency=0.0, seed=seed)
        ref.start()
        ref.run_until(600)
        low = Simulation.from_plan(compile_secure_links(app), latency=0.0, seed=seed)
        low.start()
        low.run_until(600)
        expected, got = sink_inputs(ref), sink_inputs(low)
        equal += bool(expected) and got == expected and low.counter("undecryptable") == 0
    elapsed = time.perf_counter() - start
    verdict(5, "semantic preservation", equal == 50 and elapsed < 60.0, f"{equal}/50 apps equal in {elapsed:.1f} s")


def rekey_run() -> tuple:
    app = load(random_link_app(1, rekey="50ms"))  # 50 ms warm-up, then a tick every 10 ms
    sim = Simulation.from_plan(compile_secure_links(app), latency=1.0, seed=6)
    sim.start()
    sim.run_until(50 + 500 + 1)
    samples = tuple((s.seq, s.epoch, s.t1, s.t2) for s in sim.samples)
    return samples, sim.counter("undecryptable"), sim.counter("dropped_no_key")


def test_criterion_06_rekey_continuity():
    first, undecryptable, no_key = rekey_run()
    epochs = {epoch for _, epoch, _, _ in first}
    deterministic = rekey_run() == (first, undecryptable, no_key)
    ok = len(epochs) >= 9 and undecryptable == 0 and no_key == 0 and deterministic and len(first) >= 49
    verdict(
        6,
        "rekey continuity",
        ok,
        f"{len(first)} frames over {len(epochs)} epochs, {undecryptable} undecryptable, deterministic: {deterministic}",
    )


LABELS = ["Latency without encryption", "AES128", "AES192", "AES256"]


def test_criterion_07_measurement():
    reports = run_matrix(build_case_study(), cycles=100, latency=1.0)
    labels = list(dict.fromkeys(r.label for r in reports))
    ordered = all(r.min <= r.mean <= r.max for r in reports)
    complete = all(r.cycles == 100 and r.missing == 0 and len(r.samples) == 300 for r in reports)
    base = {r.topology: r.mean for r in reports if not r.encrypted}
    slower = all(r.mean >= base[r.topology] for r in reports if r.encrypted)
    topologies = {(r.label, r.topology) for r in reports}
    grid = topologies == {(label, t) for label in LABELS for t in Topology}
    ok = labels == LABELS and ordered and complete and slower and grid
    verdict(7, "measurement", ok, f"rows {labels}, min<=mean<=max: {ordered}, encrypted >= baseline: {slower}")


def test_criterion_08_deadline_verdicts():
    app = build_case_study()
    delayed = run_latency_bench(app, 100, 128, Topology.DISTRIBUTED, 3.0)
    ideal = run_latency_bench(app, 100, 128, Topology.DISTRIBUTED, 0.0)
    wanted = {"differential": 5.0, "overcurrent": 600.0}
    sums = all(v.total == 100 for v in delayed.verdicts + ideal.verdicts)
    deadlines = {v.function.value: v.deadline for v in delayed.verdicts}
    budgets = all(deadlines.get(name) == ms for name, ms in wanted.items())
    all_pass = all(v.failed == 0 and v.passed == 100 for v in ideal.verdicts)
    counts = ", ".join(f"{v.function.value} {v.passed}/{v.failed}" for v in delayed.verdicts)
    verdict(8, "deadline verdicts", sums and budgets and all_pass, f"3 ms pass/fail: {counts}; 0 ms all pass: {all_pass}")


GOLDEN = bytes.fromhex("fb5e" "01" "01" "00000001" "0002" "03" "00000004" "0010" "000102030405060708090a0b0c0d0e0f")


def test_criterion_09_wire_format():
    rng = random.Random(9)
    failures = 0
    for _ in range(10_000):
        kind = rng.choice(list(MsgType))
        if kind is MsgType.DATA:
            payload = rng.randbytes(16 * rng.randint(0, 4))
        elif kind is MsgType.TS:
            payload = rng.randbytes(8)
        else:
            payload = rng.randbytes(rng.randint(0, 300))
        frame = WireFrame(kind, rng.getrandbits(32), rng.getrandbits(16), rng.getrandbits(8), rng.getrandbits(32), payload)
        failures += decode_frame(encode_frame(frame)) != frame
    golden = WireFrame(MsgType.DATA, 1, 2, 3, 4, bytes(range(16)))
    golden_ok = len(GOLDEN) == 33 and encode_frame(golden) == GOLDEN and decode_frame(GOLDEN) == golden
    verdict(9, "wire format", failures == 0 and golden_ok, f"10000 frames, {failures} failures, golden 33-byte frame: {golden_ok}")


SECURE_CASES = {
    "@secure(C, AES)": (SecGoal.CONFIDENTIALITY, "AES", 128, 60_000),
    "@secure(Confidentiality, AES, keysize=192, rekey=250ms)": (SecGoal.CONFIDENTIALITY, "AES", 192, 250),
    "@secure(I, HMAC, keysize=256, rekey=2s)": (SecGoal.INTEGRITY, "HMAC", 256, 2000),
}


def test_criterion_10_parser():
    sources = [("casestudy.fbs", casestudy_source())] + [(p.name, p.read_text()) for p in sorted((CORPUS / "valid").glob("*.fbs"))]
    round_trips = 0
    for name, text in sources:
        app = parse_application(text, name)
        canonical = serialize_application(app)
        again = parse_application(canonical, name)
        round_trips += again == app and serialize_application(again) == canonical and validate_application(app) == []
    invalid = sorted((CORPUS / "invalid").glob("*.fbs"))
    secure_ok = 0
    for note, (goal, alg, keysize, rekey) in SECURE_CASES.items():
        text = (
            RELAY
            + "devices { A B }\napp {\n  instance a : Relay\n  instance b : Relay\n  a.CNF -> b.REQ\n"
            + f"  a.OUT -> b.IN {note}\n}}\nmap {{\n  a -> A\n  b -> B\n}}\n"
        )
        (link,) = parse_application(text).secure_links
        secure_ok += (link.sec_goal, link.alg, link.keysize, link.rekey_ms) == (goal, alg, keysize, rekey)
    ok = round_trips == len(sources) and len(sources) >= 11 and len(invalid) >= 10 and secure_ok == len(SECURE_CASES)
    verdict(
        10,
        "parser",
        ok,
        f"{round_trips}/{len(sources)} files round-trip, {len(invalid)} diagnostic files, "
        f"@secure cases {secure_ok}/{len(SECURE_CASES)}",
    )
