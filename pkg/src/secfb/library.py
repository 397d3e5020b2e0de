"""The standard FB type library shipped with the package.

Most types live in ``library.fbs``.  The plain typed publish/subscribe pairs
used for unannotated cross-device links are generated here, one pair per
data kind.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from types import MappingProxyType
from typing import Mapping

from secfb.core import DataKind, FBInterface, FBKind, FBType

__all__ = ["standard_library", "plain_publisher_type", "plain_subscriber_type", "library_source"]


def library_source() -> str:
    return resources.files("secfb").joinpath("library.fbs").read_text(encoding="utf-8")


def plain_publisher_type(kind: DataKind) -> FBType:
    itf = FBInterface(
        event_inputs=("INIT", "REQ"),
        event_outputs=("INITO", "CNF"),
        data_inputs=(("ID", DataKind.STRING), ("LINK", DataKind.UINT), ("SENDER", DataKind.UINT), ("SD_1", kind)),
        with_assoc={"INIT": ("ID", "LINK", "SENDER"), "REQ": ("SD_1",)},
    )
    return FBType(f"PUBLISH_{kind.value}", FBKind.SIFB, itf, service="plain_publisher")


def plain_subscriber_type(kind: DataKind) -> FBType:
    itf = FBInterface(
        event_inputs=("INIT",),
        event_outputs=("INITO", "IND"),
        data_inputs=(("ID", DataKind.STRING), ("LINKS", DataKind.STRING)),
        data_outputs=(("RD_1", kind), ("LINK", DataKind.UINT)),
        with_assoc={"INIT": ("ID", "LINKS"), "IND": ("RD_1", "LINK")},
    )
    return FBType(f"SUBSCRIBE_{kind.value}", FBKind.SIFB, itf, service="plain_subscriber")


@lru_cache(maxsize=1)
def standard_library() -> Mapping[str, FBType]:
    """All packaged types by name (read-only, built once)."""
    from secfb.parser import parse_types

    types = parse_types(library_source(), "library.fbs", library={})
    for kind in DataKind:
        for fbt in (plain_publisher_type(kind), plain_subscriber_type(kind)):
            types[fbt.name] = fbt
    return MappingProxyType(types)
