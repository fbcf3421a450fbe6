"""Background and attack traffic generators."""
from __future__ import annotations

from .core import to_ns
from .packet import ECHO_REQUEST, Protocol


class IcmpFlood:
    """Echo requests of a fixed payload size at a fixed interval until cancelled.

    With ``jitter`` > 0 each gap is drawn uniformly from
    ``interval * (1 +/- jitter)``, so the mean rate is unchanged but the
    flood does not phase-lock with periodic traffic.
    """

    def __init__(self, node, dst_ip: str, payload_size: int, interval: float,
                 start: float | None = None, duration: float | None = None, jitter: float = 0.0):
        if payload_size < 1:
            raise ValueError("payload_size must be at least 1 byte")
        if not interval > 0:
            raise ValueError("interval must be positive")
        if not 0.0 <= jitter < 1.0:
            raise ValueError("jitter must lie in [0, 1)")
        self.node = node
        self.net = node.net
        self.dst_ip = dst_ip
        self.payload = bytes(payload_size)
        self.interval_ns = to_ns(interval)
        self.jitter = jitter
        self.rng = node.net.rng(f"flood:{node.name}") if jitter else None
        if self.interval_ns < 1:
            raise ValueError("interval is below the clock resolution")
        loop = self.net.loop
        self.start_ns = loop.now if start is None else to_ns(start)
        self.stop_ns = None if duration is None else self.start_ns + to_ns(duration)
        self.sent = 0
        self.active = True
        self._entry = None
        if self.stop_ns is None or self.stop_ns > self.start_ns:
            self._entry = loop.schedule_at(self.start_ns, self._tick)

    def _tick(self) -> None:
        now = self.net.loop.now
        if not self.active or (self.stop_ns is not None and now >= self.stop_ns):
            self.active = False
            return
        pkt = self.net.make_packet((self.node.ip, 0), (self.dst_ip, 0), Protocol.ICMP,
                                   payload=self.payload, icmp_type=ECHO_REQUEST)
        self.node.send(pkt)
        self.sent += 1
        gap = self.interval_ns
        if self.rng is not None:
            gap = max(1, round(gap * (1.0 + self.jitter * self.rng.uniform(-1.0, 1.0))))
        self._entry = self.net.loop.schedule(gap, self._tick)

    def cancel(self) -> None:
        self.active = False
        if self._entry is not None:
            self.net.loop.cancel(self._entry)


def icmp_flood(src, dst_ip: str, payload_size: int, interval: float, **kw) -> IcmpFlood:
    return IcmpFlood(src, dst_ip, payload_size, interval, **kw)
