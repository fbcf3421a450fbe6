"""Links: a FIFO tail-drop transmitter per direction (or per shared segment)."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .core import NS_PER_S, to_ns
from .packet import BROADCAST_MAC, Frame


@dataclass(frozen=True)
class LinkSpec:
    bandwidth: float
    """bits per second"""
    propagation_delay: float
    """seconds"""
    queue_capacity: int = 64

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be at least 1")
        if self.propagation_delay < 0:
            raise ValueError("propagation_delay must be non-negative")

    def serialization_ns(self, size_bytes: int) -> int:
        bits_ns = size_bytes * 8 * NS_PER_S
        bw = int(self.bandwidth)
        return -(-bits_ns // bw) if bw == self.bandwidth else to_ns(size_bytes * 8 / self.bandwidth)


class Transmitter:
    """One FIFO queue feeding one serialising output.

    ``queue_capacity`` counts frames waiting behind the one on the wire.
    """

    def __init__(self, net, name: str, spec: LinkSpec, segment):
        self.net = net
        self.name = name
        self.spec = spec
        self.segment = segment
        self.queue: deque = deque()
        self.busy = False
        self.prop_ns = to_ns(spec.propagation_delay)
        self.in_transit = 0
        self.drops = 0
        self.sent = 0

    def enqueue(self, frame: Frame, sender) -> bool:
        if not self.busy:
            self._start(frame, sender)
            return True
        if len(self.queue) >= self.spec.queue_capacity:
            self.drops += 1
            self.net.record_drop(frame.packet, f"queue_full:{self.name}", sender.node.name)
            return False
        self.queue.append((frame, sender))
        return True

    def _start(self, frame: Frame, sender) -> None:
        self.busy = True
        self.in_transit += 1
        self.net.loop.schedule(self.spec.serialization_ns(frame.packet.size), self._done, frame, sender)

    def _done(self, frame: Frame, sender) -> None:
        self.sent += 1
        self.net.loop.schedule(self.prop_ns, self._arrive, frame, sender)
        if self.queue:
            nxt, nxt_sender = self.queue.popleft()
            self.in_transit += 1
            self.net.loop.schedule(self.spec.serialization_ns(nxt.packet.size), self._done, nxt, nxt_sender)
        else:
            self.busy = False

    def _arrive(self, frame: Frame, sender) -> None:
        self.in_transit -= 1
        self.segment.arrive(frame, sender, self)

    def backlog(self) -> int:
        return len(self.queue) + self.in_transit


class Segment:
    """A broadcast LAN (one shared transmitter) or a point-to-point link (one per direction)."""

    def __init__(self, net, name: str, spec: LinkSpec, kind: str = "bus"):
        if kind not in ("bus", "p2p"):
            raise ValueError("segment kind must be 'bus' or 'p2p'")
        self.net = net
        self.name = name
        self.spec = spec
        self.kind = kind
        self.interfaces: list = []
        self.observers: list = []
        self._shared = Transmitter(net, name, spec, self) if kind == "bus" else None
        self._directed: dict = {}

    def attach(self, iface) -> None:
        if self.kind == "p2p" and len(self.interfaces) >= 2:
            raise ValueError(f"point-to-point link {self.name} already has two ends")
        self.interfaces.append(iface)
        iface.segment = self
        if self.kind == "p2p":
            self._directed[iface.name] = Transmitter(self.net, f"{self.name}:{iface.name}", self.spec, self)

    def transmitter_for(self, iface) -> Transmitter:
        return self._shared if self._shared is not None else self._directed[iface.name]

    def transmitters(self) -> list[Transmitter]:
        return [self._shared] if self._shared is not None else list(self._directed.values())

    def transmit(self, frame: Frame, iface) -> bool:
        return self.transmitter_for(iface).enqueue(frame, iface)

    def arrive(self, frame: Frame, sender, tx) -> None:
        for obs in self.observers:
            obs(frame, self)
        dst = frame.dst_mac
        delivered = False
        for iface in self.interfaces:
            if iface is sender:
                continue
            if iface.mac == dst or dst == BROADCAST_MAC:
                iface.node.receive(frame, iface)
                delivered = True
        if not delivered:
            self.net.record_drop(frame.packet, f"no_station:{dst}", self.name)
