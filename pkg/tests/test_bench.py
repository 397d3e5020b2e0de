import csv
import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secfb.bench import (
    DEFAULT_CONFIGS,
    BenchError,
    ProtectionConfig,
    ProtectionFunction,
    Topology,
    build_case_study,
    differential_fb,
    earth_fault_fb,
    overcurrent_fb,
    prepare_scenario,
    run_latency_bench,
    run_plan,
)
from secfb.bench.casestudy import SINGLE_DEVICE, co_located, set_params, with_keysize
from secfb.bench.report import CSV_HEADER, render_figure, render_table, render_verdicts, write_csv
from secfb.compiler import compile_secure_links
from secfb.core import FBNetwork
from secfb.runtime.costs import CostModel
from secfb.runtime.engine import instantiate_device

CASE = build_case_study()
currents = st.floats(-1000, 1000, allow_nan=False)


def trip(type_name, **inputs):
    rt = instantiate_device(FBNetwork({"f": type_name}), CASE.type_of)
    rt.inject("f", "REQ", inputs)
    rt.run_until_idle()
    return rt.value("f", "TRIP")


def test_thresholds_are_strict():
    assert not overcurrent_fb(100.0) and overcurrent_fb(100.0001)
    assert not differential_fb(10.0, 9.0) and differential_fb(10.0, 8.9)
    assert not earth_fault_fb(20.0) and earth_fault_fb(20.5)


def test_default_configs():
    assert {fn: (c.threshold, c.deadline) for fn, c in DEFAULT_CONFIGS.items()} == {
        ProtectionFunction.OVERCURRENT: (100.0, 600.0),
        ProtectionFunction.DIFFERENTIAL: (1.0, 5.0),
        ProtectionFunction.EARTH_FAULT: (20.0, 5.0),
    }
    for bad in [(0, 5), (1, 0), (-1, 5)]:
        with pytest.raises(ValueError):
            ProtectionConfig(ProtectionFunction.OVERCURRENT, *bad)
    assert ProtectionFunction.for_type("Differential") is ProtectionFunction.DIFFERENTIAL
    assert ProtectionFunction.for_type("Breaker") is None


@settings(max_examples=60, deadline=None)
@given(i=st.one_of(currents, st.sampled_from([100.0, 20.0])), th=st.sampled_from([100.0, 20.0]))
def test_overcurrent_and_earth_fault_blocks_match_reference(i, th):
    assert trip("Overcurrent", I=i, THRESHOLD=th) is overcurrent_fb(i, th)
    assert trip("EarthFault", I=i, THRESHOLD=th) is earth_fault_fb(i, th)


@settings(max_examples=60, deadline=None)
@given(i1=currents, i2=st.one_of(currents, st.just(9.0)))
def test_differential_block_matches_reference(i1, i2):
    assert trip("Differential", I1=i1, I2=i2, THRESHOLD=1.0) is differential_fb(i1, i2, 1.0)


def test_breaker_opens_on_any_trip():
    rt = instantiate_device(FBNetwork({"b": "Breaker"}), CASE.type_of)
    rt.inject("b", "OC", {"OC_TRIP": True})
    rt.run_until_idle()
    assert rt.value("b", "OPEN") is True
    rt.inject("b", "OC", {"OC_TRIP": False})
    rt.run_until_idle()
    assert rt.value("b", "OPEN") is False


def test_scenario_helpers():
    assert {lk.keysize for lk in with_keysize(CASE, 192).secure_links} == {192}
    assert with_keysize(CASE, None) is CASE
    single = co_located(CASE)
    assert single.devices == (SINGLE_DEVICE,) and set(single.mapping.values()) == {SINGLE_DEVICE}
    tweaked = set_params(CASE, {("oc_tick", "DT"): 20})
    assert tweaked.root.params[("oc_tick", "DT")] == 20 and CASE.root.params[("oc_tick", "DT")] == 10


def test_prepare_scenario_overrides_timers():
    plan = prepare_scenario(CASE, keysize=256, topology=Topology.SINGLE, warmup_ms=70, period_ms=5)
    (net,) = plan.networks.values()
    assert net.params[("diff_warm", "DT")] == 70 and net.params[("diff_tick", "DT")] == 5
    assert {lp.keysize for lp in plan.links} == {256}


def test_harness_rejects_bad_requests():
    with pytest.raises(BenchError):
        run_latency_bench(CASE, cycles=99)
    plain = compile_secure_links(co_located(CASE))  # local links stay unlowered
    with pytest.raises(BenchError, match="no instrumented links"):
        run_plan(plain, 100)


@pytest.fixture(scope="module")
def reports():
    return [
        run_latency_bench(CASE, 100, None, Topology.DISTRIBUTED, 2.0, encrypt=False, group="toy23"),
        run_latency_bench(CASE, 100, 128, Topology.SINGLE, 2.0, group="toy23"),
        run_latency_bench(CASE, 100, 128, Topology.DISTRIBUTED, 2.0, group="toy23"),
    ]


def test_report_contents(reports):
    base, single, dist = reports
    assert base.label == "Latency without encryption" and base.keysize == 0
    assert single.label == dist.label == "AES128"
    for r in reports:
        assert r.missing == 0 and r.trip_mismatches == ()
        assert len(r.samples) == 300 and r.cycles == 100
        assert sum(v.total for v in r.verdicts) == 300
    assert (single.min, single.max) == (0, 0)
    assert (dist.min, dist.max) == (2, 2)
    assert dist.link_functions == {
        1: ProtectionFunction.DIFFERENTIAL,
        2: ProtectionFunction.OVERCURRENT,
        3: ProtectionFunction.EARTH_FAULT,
    }


def test_same_seed_same_samples(reports):
    again = run_latency_bench(CASE, 100, 128, Topology.DISTRIBUTED, 2.0, group="toy23")
    assert again.samples == reports[2].samples


def test_table_layout(reports):
    lines = render_table(reports).splitlines()
    assert lines[0] == "Latency of FBs over 100 cycles"
    assert lines[1].split("  ")[0] == "Configuration"
    assert "Single device" in lines[1] and "Distributed" in lines[1]
    assert lines[3].startswith("Latency without encryption")
    assert "-  " in lines[3] or lines[3].split()[-1] != ""
    assert lines[4].startswith("AES128") and "0-0 ms (mean 0.00)" in lines[4] and "2-2 ms (mean 2.00)" in lines[4]


def test_verdict_lines(reports):
    text = render_verdicts(reports)
    assert "differential" in text and "deadline 5 ms: 100 pass, 0 fail" in text


def test_csv(reports):
    rows = list(csv.reader(io.StringIO(write_csv(reports))))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 900
    first = dict(zip(CSV_HEADER, rows[1]))
    assert first["config"] == "Latency without encryption" and first["topology"] == "distributed"
    assert int(first["L"]) == int(first["t2"]) - int(first["t1"])
    buf = io.StringIO()
    assert write_csv(reports[:1], buf) == "" and buf.getvalue().count("\n") == 301


def test_figure(reports, tmp_path):
    pytest.importorskip("matplotlib")
    out = tmp_path / "lat.png"
    render_figure(reports, str(out))
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_cost_model_orders_key_sizes():
    cost = CostModel({"dh_modexp": 1.0}, {"aes_encrypt": 0.2, "aes_decrypt": 0.2})
    means = [run_latency_bench(CASE, 100, k, Topology.SINGLE, 0.0, group="toy23", cost=cost).mean for k in (128, 192, 256)]
    base = run_latency_bench(CASE, 100, None, Topology.SINGLE, 0.0, encrypt=False, cost=cost).mean
    assert base < means[0] < means[1] < means[2]
