import pytest

from apps import CORPUS, RELAY, load
from secfb.core import FBNetwork
from secfb.runtime.algorithms import algorithm
from secfb.runtime.costs import CostModel
from secfb.runtime.engine import ECC_STEP_LIMIT, InstantiationError, instantiate_device
from secfb.runtime.simulation import Simulation


@algorithm("test_boom")
def _boom(v, ctx):
    raise ZeroDivisionError("boom")


EXTRA = """
fbtype Spin basic {
  input event REQ
  ecc {
    initial A
    state A
    state B
    A -> B on REQ
    B -> A always
    A -> B always
  }
}
fbtype Boom basic {
  input event REQ
  output event CNF
  ecc {
    initial S
    state S
    state T do test_boom -> CNF
    S -> T on REQ
    T -> S always
  }
}
"""


def runtime(body: str, instances: dict[str, str], trace=True, **kw):
    app = load(RELAY + EXTRA + "app {\n" + "".join(f"  instance {i} : {t}\n" for i, t in instances.items()) + body + "}\n")
    return instantiate_device(app.root, app.type_of, trace=trace, **kw)


def test_chain_propagates_value():
    rt = runtime("  a.CNF -> b.REQ\n  a.OUT -> b.IN\n  b.CNF -> c.REQ\n  b.OUT -> c.IN\n", {"a": "Relay", "b": "Relay", "c": "Relay"})
    rt.inject("a", "REQ", {"IN": True})
    rt.run_until_idle()
    assert rt.value("c", "OUT") is True
    assert rt.state_of("c") == "START"
    assert [(e.instance, e.inputs) for e in rt.trace] == [("a", (("IN", True),)), ("b", (("IN", True),)), ("c", (("IN", True),))]


def test_data_is_sampled_only_with_its_event():
    rt = runtime("  a.OUT -> b.IN\n", {"a": "Relay", "b": "Relay"})
    rt.inject("a", "REQ", {"IN": True})
    rt.run_until_idle()
    # b saw no event, so its internal copy is still the default
    assert rt.value("b", "IN") is False
    rt.inject("b", "REQ")
    rt.run_until_idle()
    assert rt.value("b", "OUT") is True


def test_internal_queue_is_fifo():
    body = "  a.CNF -> b.REQ\n  a.CNF -> c.REQ\n  b.CNF -> d.REQ\n  c.CNF -> e.REQ\n"
    rt = runtime(body, {k: "Relay" for k in "abcde"})
    rt.inject("a", "REQ")
    rt.run_until_idle()
    assert [e.instance for e in rt.trace] == ["a", "b", "c", "d", "e"]


def test_ecc_livelock_faults_the_instance():
    rt = runtime("", {"s": "Spin"})
    rt.inject("s", "REQ")
    rt.run_until_idle()
    assert rt.is_faulted("s")
    assert str(ECC_STEP_LIMIT) in rt.diagnostics[0].message
    rt.inject("s", "REQ")
    rt.run_until_idle()
    assert rt.counters["dropped_faulted"] == 1


def test_algorithm_error_faults_only_that_instance():
    rt = runtime("  b.CNF -> r.REQ\n", {"b": "Boom", "r": "Relay"})
    rt.inject("b", "REQ")
    rt.run_until_idle()
    assert rt.is_faulted("b") and not rt.is_faulted("r")
    assert rt.diagnostics[0].code == "fault" and "ZeroDivisionError" in rt.diagnostics[0].message
    rt.inject("r", "REQ", {"IN": True})
    rt.run_until_idle()
    assert rt.value("r", "OUT") is True


def test_event_cycle_reports_non_termination():
    rt = runtime("  a.CNF -> b.REQ\n  b.CNF -> a.REQ\n", {"a": "Relay", "b": "Relay"}, trace=False)
    rt.inject("a", "REQ")
    assert rt.run_until_idle(max_steps=500) == 500
    assert rt.diagnostics[-1].code == "non-termination"
    with pytest.raises(ValueError):
        rt.run_until_idle(0)


def test_composite_routes_through_interface():
    app = load((CORPUS / "valid" / "composite.fbs").read_text())
    rt = instantiate_device(app.root, app.type_of)
    rt.inject("c", "REQ", {"IN": True})
    rt.run_until_idle()
    assert rt.value("c.second", "OUT") is True
    assert [e.instance for e in rt.trace] == ["c.first", "c.second"]


@pytest.mark.parametrize(
    "instances, match",
    [
        ({"x": "Nope"}, "unknown FB type"),
    ],
)
def test_instantiation_errors(instances, match):
    with pytest.raises(InstantiationError, match=match):
        instantiate_device(FBNetwork(instances), {})


def test_unbound_service_and_algorithm():
    app = load(RELAY + 'fbtype S sifb service "nothing" {\n  input event REQ\n}\n')
    with pytest.raises(InstantiationError, match="no service binding"):
        instantiate_device(FBNetwork({"s": "S"}), app.type_of)
    app = load(RELAY.replace("copy_in_out", "not_registered"))
    with pytest.raises(InstantiationError):
        instantiate_device(FBNetwork({"r": "Relay"}), app.type_of)


def test_cost_model_delays_local_time():
    app = load(RELAY + "devices { D }\napp {\n  instance a : Relay\n  instance b : Relay\n  a.CNF -> b.REQ\n}\nmap {\n  a -> D\n  b -> D\n}\n")
    sim = Simulation.from_application(app, cost=CostModel({"copy_in_out": 2.5}))
    sim.start()
    sim.inject("D", "a", "REQ")
    sim.settle()
    assert [e.time for e in sim.trace] == [0.0, 2.5]
    assert sim.devices["D"].local_now() == 5.0


def test_cost_model_validation():
    with pytest.raises(ValueError):
        CostModel({"x": -1})
    with pytest.raises(ValueError):
        CostModel().scaled(-2)
    model = CostModel({"a": 1.0}, {"aes_encrypt": 0.5})
    assert model.cost("aes_encrypt", {"expkey": bytes(176)}) == 5.0
    assert model.cost("aes_encrypt", {"Key": bytes(32)}) == 7.0
    assert model.scaled(2).cost("a", {}) == 2.0
    assert model.cost("other", {}) == 0.0
