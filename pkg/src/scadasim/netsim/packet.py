from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Protocol(str, enum.Enum):
    MINITCP = "minitcp"
    ICMP = "icmp"
    ARP = "arp"


# ethernet + ip + transport header octets
HEADER_BYTES = {Protocol.MINITCP: 54, Protocol.ICMP: 42, Protocol.ARP: 42}

SYN = 0x02
ACK = 0x10
FIN = 0x01

ECHO_REQUEST = 8
ECHO_REPLY = 0

BROADCAST_MAC = "ff:ff:ff:ff:ff:ff"


@dataclass(slots=True)
class Packet:
    src: tuple[str, int]
    dst: tuple[str, int]
    protocol: Protocol
    payload: bytes = b""
    seq: int | None = None
    ack: int | None = None
    flags: int = 0
    is_retransmission: bool = False
    created_at: int = 0
    pid: int = 0
    icmp_type: int | None = None
    arp: tuple | None = None
    """``(op, sender_ip, sender_mac, target_ip)`` for ARP packets."""

    def __post_init__(self):
        if self.protocol == Protocol.MINITCP and self.seq is None:
            raise ValueError("MiniTcp packets carry a sequence number")
        if self.protocol != Protocol.MINITCP and (self.seq is not None or self.ack is not None):
            raise ValueError("only MiniTcp packets carry seq/ack")

    @property
    def size(self) -> int:
        return HEADER_BYTES[self.protocol] + len(self.payload)

    def flag_text(self) -> str:
        parts = []
        if self.flags & SYN:
            parts.append("S")
        if self.flags & ACK:
            parts.append("A")
        if self.flags & FIN:
            parts.append("F")
        if self.is_retransmission:
            parts.append("R")
        return "".join(parts)


@dataclass(slots=True)
class Frame:
    src_mac: str
    dst_mac: str
    packet: Packet
    meta: dict = field(default_factory=dict)
