"""The packaged protection case study and scenario variants built from it."""

from __future__ import annotations

import dataclasses
from importlib import resources
from typing import Optional

from secfb.core import Application, FBNetwork
from secfb.parser import parse_application

# registers the stub service and the protection algorithms
from secfb.bench import protection  # noqa: F401

__all__ = [
    "CASE_STUDY_FILE",
    "casestudy_source",
    "build_case_study",
    "set_params",
    "with_keysize",
    "co_located",
    "SINGLE_DEVICE",
]

CASE_STUDY_FILE = "casestudy.fbs"
SINGLE_DEVICE = "IED"


def casestudy_source() -> str:
    return resources.files("secfb.bench").joinpath(CASE_STUDY_FILE).read_text(encoding="utf-8")


def build_case_study() -> Application:
    """Three protection IEDs and a breaker IED joined by three annotated trip links."""
    return parse_application(casestudy_source(), CASE_STUDY_FILE)


def set_params(app: Application, values: dict[tuple[str, str], object]) -> Application:
    """Copy of ``app`` with parameter bindings replaced or added."""
    root = app.root
    params = {**root.params, **values}
    return dataclasses.replace(app, root=FBNetwork(root.instances, root.event_conns, root.data_conns, params))


def with_keysize(app: Application, keysize: Optional[int]) -> Application:
    """Copy of ``app`` with every secure link set to ``keysize`` (None keeps the annotations)."""
    if keysize is None:
        return app
    return dataclasses.replace(app, secure_links=tuple(link.with_params(keysize=keysize) for link in app.secure_links))


def co_located(app: Application, device: str = SINGLE_DEVICE) -> Application:
    """Copy of ``app`` with every instance mapped to one device."""
    return dataclasses.replace(app, devices=(device,), mapping={inst: device for inst in app.root.instances})
