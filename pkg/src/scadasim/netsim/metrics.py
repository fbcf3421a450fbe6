"""Throughput, goodput, RTT and flow-count telemetry."""
from __future__ import annotations

from dataclasses import dataclass

from ..dnp3 import DNP3_PORT
from .core import to_ns, to_s


@dataclass(frozen=True)
class ThroughputSample:
    total_payload_bytes: int
    total_transmission_time: float
    throughput: float
    """bytes per second, retransmitted copies included"""
    goodput: float
    """bytes per second, retransmitted copies excluded"""
    retransmitted_bytes: int = 0


def throughput_sample(total_bytes: int, retransmitted_bytes: int, duration: float) -> ThroughputSample:
    """Total payload bytes over the transmission time; goodput drops the retransmitted share."""
    if not duration > 0:
        raise ValueError("window duration must be positive")
    if not 0 <= retransmitted_bytes <= total_bytes:
        raise ValueError("retransmitted bytes must lie within the total")
    return ThroughputSample(total_bytes, duration, total_bytes / duration,
                            (total_bytes - retransmitted_bytes) / duration, retransmitted_bytes)


class FlowRegistry:
    """State of every client-initiated MiniTcp connection and the active-count series."""

    def __init__(self, loop):
        self.loop = loop
        self.states: dict[tuple, str] = {}
        self.history: list[tuple[int, tuple, str]] = []
        self.series: list[tuple[int, int]] = []
        self._active = 0

    def update(self, conn, state) -> None:
        key = conn.key
        old = self.states.get(key)
        state = getattr(state, "value", state)
        if old == state:
            return
        self.states[key] = state
        self.history.append((self.loop.now, key, state))
        if old == "established":
            self._active -= 1
        if state == "established":
            self._active += 1
        self.series.append((self.loop.now, self._active))

    @property
    def active(self) -> int:
        return self._active

    def active_flows(self) -> list[tuple]:
        return [k for k, s in self.states.items() if s == "established"]

    def source_ports(self, remote: tuple[str, int] | None = None) -> list[int]:
        """Source ports in the order their flows were opened."""
        seen = []
        for _t, (local, rem), state in self.history:
            if state == "connecting" and (remote is None or rem == remote):
                seen.append(local[1])
        return seen


@dataclass
class MeasureResult:
    sample: ThroughputSample | None
    rtt_series: list[tuple[float, float]]
    """``(time, rtt)``; exchanges the sender abandoned count with the time it waited"""
    retransmission_count: int
    flow_count: int


class Metrics:
    """Raw MiniTcp records kept by the network; ``measure`` summarises a window."""

    def __init__(self, loop, port: int = DNP3_PORT):
        self.loop = loop
        self.port = port
        self.data: list[tuple[int, int, bool]] = []
        """``(time_ns, payload_bytes, is_retransmission)`` for DNP3-port data segments."""
        self.rtts: list[tuple[int, int, tuple, bool]] = []
        """``(time_ns, rtt_ns, connection key, abandoned)`` per data segment or handshake."""
        self.retransmissions = 0

    def _on_port(self, conn) -> bool:
        return conn.local[1] == self.port or conn.remote[1] == self.port

    def record_data(self, conn, pkt) -> None:
        if self._on_port(conn):
            self.data.append((self.loop.now, len(pkt.payload), pkt.is_retransmission))

    def record_rtt(self, conn, now_ns: int, rtt_ns: int, abandoned: bool = False) -> None:
        if self._on_port(conn):
            self.rtts.append((now_ns, rtt_ns, conn.key, abandoned))

    def measure(self, start: float, end: float, flows: FlowRegistry | None = None) -> MeasureResult:
        lo, hi = to_ns(start), to_ns(end)
        if hi <= lo:
            raise ValueError("empty measurement window")
        total = retx = count = 0
        for t, size, is_retx in self.data:
            if lo <= t < hi:
                total += size
                if is_retx:
                    retx += size
                    count += 1
        rtts = [(to_s(t), to_s(r)) for t, r, _k, _a in self.rtts if lo <= t < hi]
        return MeasureResult(
            sample=throughput_sample(total, retx, end - start),
            rtt_series=rtts,
            retransmission_count=count,
            flow_count=flows.active if flows is not None else 0,
        )
