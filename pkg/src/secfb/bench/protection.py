"""Protection functions of the substation case study.

The pure functions here are the reference semantics; the ``Overcurrent``,
``Differential`` and ``EarthFault`` basic FB types in ``casestudy.fbs``
implement the same comparisons through their ECC guards.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from secfb.runtime.algorithms import algorithm
from secfb.runtime.services import Service, service

__all__ = [
    "ProtectionFunction",
    "ProtectionConfig",
    "DEFAULT_CONFIGS",
    "overcurrent_fb",
    "differential_fb",
    "earth_fault_fb",
    "CurrentStubService",
]


class ProtectionFunction(enum.Enum):
    OVERCURRENT = "overcurrent"
    DIFFERENTIAL = "differential"
    EARTH_FAULT = "earth_fault"

    @property
    def fb_type(self) -> str:
        return {"overcurrent": "Overcurrent", "differential": "Differential", "earth_fault": "EarthFault"}[self.value]

    @classmethod
    def for_type(cls, type_name: str) -> "ProtectionFunction | None":
        for fn in cls:
            if fn.fb_type == type_name:
                return fn
        return None


@dataclass(frozen=True)
class ProtectionConfig:
    """Trip threshold in amperes and delivery deadline in milliseconds."""

    function: ProtectionFunction
    threshold: float
    deadline: float

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.deadline <= 0:
            raise ValueError(f"deadline must be positive, got {self.deadline}")


DEFAULT_CONFIGS: dict[ProtectionFunction, ProtectionConfig] = {
    ProtectionFunction.OVERCURRENT: ProtectionConfig(ProtectionFunction.OVERCURRENT, 100.0, 600.0),
    ProtectionFunction.DIFFERENTIAL: ProtectionConfig(ProtectionFunction.DIFFERENTIAL, 1.0, 5.0),
    # no published figure; the differential timing class is reused
    ProtectionFunction.EARTH_FAULT: ProtectionConfig(ProtectionFunction.EARTH_FAULT, 20.0, 5.0),
}


def overcurrent_fb(current: float, threshold: float = 100.0) -> bool:
    """Trip when the line current strictly exceeds the threshold."""
    return current > threshold


def differential_fb(i1: float, i2: float, threshold: float = 1.0) -> bool:
    """Trip when the two winding currents differ by strictly more than the threshold."""
    return abs(i1 - i2) > threshold


def earth_fault_fb(residual: float, threshold: float = 20.0) -> bool:
    """Trip when the residual current strictly exceeds the threshold."""
    return residual > threshold


@algorithm("trip_set")
def _trip_set(v, ctx):
    v["TRIP"] = True


@algorithm("trip_clear")
def _trip_clear(v, ctx):
    v["TRIP"] = False


@algorithm("differential_delta")
def _differential_delta(v, ctx):
    v["DELTA"] = abs(v["I1"] - v["I2"])


@algorithm("breaker_eval")
def _breaker_eval(v, ctx):
    v["OPEN"] = bool(v["OC_TRIP"] or v["DIFF_TRIP"] or v["EF_TRIP"])


@service("current_stub")
class CurrentStubService(Service):
    """Plain-text source: one current sample per REQ.

    With probability PFAULT a sample is a fault (I1_FAULT, I2_FAULT),
    otherwise (I1_NORMAL, I2_NORMAL).  The draw uses its own stream seeded by
    SEED so the fault schedule does not depend on other randomness.
    """

    def __init__(self, ctx):
        super().__init__(ctx)
        self.rng = None

    def handle(self, event, payload):
        if event != "REQ":
            return
        v = self.ctx.vars
        if self.rng is None:
            self.rng = random.Random(v["SEED"])
        fault = self.rng.random() < v["PFAULT"]
        self.ctx.write("FAULT", fault)
        self.ctx.write("I1", v["I1_FAULT"] if fault else v["I1_NORMAL"])
        self.ctx.write("I2", v["I2_FAULT"] if fault else v["I2_NORMAL"])
        self.ctx.emit("CNF")
