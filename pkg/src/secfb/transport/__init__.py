"""Framed datagram transport: wire format, loopback fabric, UDP multicast."""

from secfb.transport.channels import (
    ChannelFault,
    ChannelId,
    ChannelMode,
    ChannelStats,
    SubscriptionError,
    Transport,
)
from secfb.transport.frame import (
    HEADER_SIZE,
    DecodeError,
    DecodeReason,
    FrameError,
    MsgType,
    WireFrame,
    decode_frame,
    encode_frame,
)
from secfb.transport.loopback import LatencyModel, LoopbackFabric, LoopbackTransport, loopback_network
from secfb.transport.multicast import MulticastTransport

__all__ = [
    "ChannelFault",
    "ChannelId",
    "ChannelMode",
    "ChannelStats",
    "SubscriptionError",
    "Transport",
    "HEADER_SIZE",
    "DecodeError",
    "DecodeReason",
    "FrameError",
    "MsgType",
    "WireFrame",
    "decode_frame",
    "encode_frame",
    "LatencyModel",
    "LoopbackFabric",
    "LoopbackTransport",
    "loopback_network",
    "MulticastTransport",
]
