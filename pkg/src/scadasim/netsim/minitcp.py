"""A miniature reliable transport.

Two-way handshake, stop-and-wait data transfer with cumulative ACKs and a
fixed retransmission timeout.  When a segment is retransmitted more than
``max_retries`` times the connection is closed and the owner is told, so it
can reconnect from a fresh source port.
"""
from __future__ import annotations

import enum
from collections import deque

from .core import to_ns
from .packet import ACK, SYN, Packet, Protocol

SEQ_MOD = 1 << 32
DEFAULT_RTO = 0.2
DEFAULT_MAX_RETRIES = 5
EPHEMERAL_BASE = 40000


class ConnectionFailed(Exception):
    pass


class ConnState(str, enum.Enum):
    CONNECTING = "connecting"
    ESTABLISHED = "established"
    CLOSED = "closed"


class Connection:
    def __init__(self, stack: "TcpStack", local_port: int, remote: tuple[str, int], isn: int,
                 initiator: bool):
        self.stack = stack
        self.local = (stack.node.ip, local_port)
        self.remote = remote
        self.initiator = initiator
        self.state = ConnState.CONNECTING
        self.snd_nxt = isn
        self.rcv_nxt = 0
        self.pending: deque = deque()
        self.inflight = None
        """``[seq, payload, first_sent_ns, retries, timer]`` for the unacked segment."""
        self.on_data = None
        self.on_established = None
        self.on_failed = None
        self.retransmissions = 0
        self.last_rx_seq: int | None = None
        self.syn_sent_ns: int | None = None

    @property
    def key(self) -> tuple:
        return (self.local, self.remote)

    # -- sending ---------------------------------------------------------
    def send(self, payload: bytes) -> None:
        if self.state != ConnState.ESTABLISHED:
            raise ConnectionFailed(f"connection {self.local}->{self.remote} is {self.state.value}")
        self.pending.append(bytes(payload))
        if self.inflight is None:
            self._next_segment()

    def _next_segment(self) -> None:
        if not self.pending or self.state != ConnState.ESTABLISHED:
            return
        payload = self.pending.popleft()
        seq = self.snd_nxt
        self.snd_nxt = (seq + len(payload)) % SEQ_MOD
        self.inflight = [seq, payload, self.stack.net.loop.now, 0, None]
        self._transmit(retransmission=False)

    def _transmit(self, retransmission: bool) -> None:
        seq, payload, _first, _retries, _timer = self.inflight
        pkt = self.stack.net.make_packet(self.local, self.remote, Protocol.MINITCP, payload=payload,
                                         seq=seq, ack=self.rcv_nxt, flags=ACK,
                                         is_retransmission=retransmission)
        self.stack.net.metrics.record_data(self, pkt)
        self.stack.node.send(pkt)
        self.inflight[4] = self.stack.net.loop.schedule(self.stack.rto_ns, self._timeout)

    def _timeout(self) -> None:
        if self.inflight is None or self.state == ConnState.CLOSED:
            return
        self.inflight[3] += 1
        if self.inflight[3] > self.stack.max_retries:
            self.stack.net.log("tcp_give_up", conn=_fmt(self.key), seq=self.inflight[0])
            now = self.stack.net.loop.now
            self.stack.net.metrics.record_rtt(self, now, now - self.inflight[2], abandoned=True)
            self.close(failed=True)
            return
        self.retransmissions += 1
        self.stack.net.metrics.retransmissions += 1
        self._transmit(retransmission=True)

    def _acked(self, ack: int) -> None:
        if self.inflight is None:
            return
        seq, payload, first, _retries, timer = self.inflight
        if ack != (seq + len(payload)) % SEQ_MOD:
            return
        self.stack.net.loop.cancel(timer)
        now = self.stack.net.loop.now
        self.stack.net.metrics.record_rtt(self, now, now - first)
        self.inflight = None
        self._next_segment()

    # -- handshake -------------------------------------------------------
    def _send_syn(self) -> None:
        flags = SYN | (0 if self.initiator else ACK)
        pkt = self.stack.net.make_packet(self.local, self.remote, Protocol.MINITCP,
                                         seq=(self.snd_nxt - 1) % SEQ_MOD,
                                         ack=self.rcv_nxt if not self.initiator else None,
                                         flags=flags)
        self.stack.node.send(pkt)

    def _syn_timeout(self, attempt: int) -> None:
        if self.state != ConnState.CONNECTING:
            return
        if attempt >= self.stack.max_retries:
            now = self.stack.net.loop.now
            self.stack.net.metrics.record_rtt(self, now, now - self.syn_sent_ns, abandoned=True)
            self.close(failed=True)
            return
        self._send_syn()
        self.stack.net.loop.schedule(self.stack.rto_ns, self._syn_timeout, attempt + 1)

    def _establish(self) -> None:
        self.state = ConnState.ESTABLISHED
        if self.initiator:
            self.stack.net.flows.update(self, ConnState.ESTABLISHED)
        if self.on_established:
            self.on_established(self)

    # -- receiving -------------------------------------------------------
    def receive(self, pkt: Packet) -> None:
        if self.state == ConnState.CLOSED:
            return
        if pkt.flags & SYN:
            if self.initiator and pkt.flags & ACK and self.state == ConnState.CONNECTING:
                self.rcv_nxt = (pkt.seq + 1) % SEQ_MOD
                now = self.stack.net.loop.now
                self.stack.net.metrics.record_rtt(self, now, now - self.syn_sent_ns)
                self._establish()
            elif not self.initiator:
                # our SYN-ACK was lost and the peer is retrying
                self._send_syn()
            return
        if pkt.flags & ACK and pkt.ack is not None:
            self._acked(pkt.ack)
        if pkt.payload:
            if pkt.seq == self.rcv_nxt:
                self.last_rx_seq = pkt.seq
                self.rcv_nxt = (pkt.seq + len(pkt.payload)) % SEQ_MOD
                self._send_ack()
                if self.on_data:
                    self.on_data(self, pkt.payload)
            else:
                # duplicate of something already delivered: re-acknowledge only
                self._send_ack()

    def _send_ack(self) -> None:
        pkt = self.stack.net.make_packet(self.local, self.remote, Protocol.MINITCP,
                                         seq=self.snd_nxt, ack=self.rcv_nxt, flags=ACK)
        self.stack.node.send(pkt)

    def close(self, failed: bool = False) -> None:
        if self.state == ConnState.CLOSED:
            return
        self.state = ConnState.CLOSED
        if self.inflight is not None and self.inflight[4] is not None:
            self.stack.net.loop.cancel(self.inflight[4])
        self.inflight = None
        self.pending.clear()
        if self.initiator:
            self.stack.net.flows.update(self, ConnState.CLOSED)
        self.stack.forget(self)
        self.stack.net.log("tcp_close", conn=_fmt(self.key), failed=failed)
        if failed and self.on_failed:
            self.on_failed(self)


def _fmt(key) -> str:
    (lip, lport), (rip, rport) = key
    return f"{lip}:{lport}->{rip}:{rport}"


class TcpStack:
    def __init__(self, node, rng, rto: float = DEFAULT_RTO, max_retries: int = DEFAULT_MAX_RETRIES):
        self.node = node
        self.net = node.net
        self.rng = rng
        self.rto_ns = to_ns(rto)
        self.max_retries = max_retries
        self.connections: dict[tuple, Connection] = {}
        self.listeners: dict[int, object] = {}
        self._next_port = EPHEMERAL_BASE + rng.randrange(0, 10000)
        node.tcp = self

    def listen(self, port: int, on_accept) -> None:
        self.listeners[port] = on_accept

    def connect(self, remote: tuple[str, int], on_established=None, on_data=None,
                on_failed=None) -> Connection:
        port = self._next_port
        self._next_port += 1
        conn = Connection(self, port, remote, self._isn(), initiator=True)
        conn.on_established = on_established
        conn.on_data = on_data
        conn.on_failed = on_failed
        self.connections[conn.key] = conn
        self.net.flows.update(conn, ConnState.CONNECTING)
        conn.syn_sent_ns = self.net.loop.now
        conn._send_syn()
        self.net.loop.schedule(self.rto_ns, conn._syn_timeout, 1)
        return conn

    def _isn(self) -> int:
        return self.rng.randrange(1, SEQ_MOD)

    def forget(self, conn: Connection) -> None:
        if self.connections.get(conn.key) is conn:
            del self.connections[conn.key]

    def receive(self, pkt: Packet) -> None:
        key = (pkt.dst, pkt.src)
        conn = self.connections.get(key)
        if conn is not None:
            conn.receive(pkt)
            return
        if pkt.flags & SYN and not pkt.flags & ACK and pkt.dst[1] in self.listeners:
            conn = Connection(self, pkt.dst[1], pkt.src, self._isn(), initiator=False)
            conn.rcv_nxt = (pkt.seq + 1) % SEQ_MOD
            self.connections[conn.key] = conn
            conn._send_syn()
            conn._establish()
            self.listeners[pkt.dst[1]](conn)
            return
        self.net.log("tcp_stray", node=self.node.name, src=f"{pkt.src[0]}:{pkt.src[1]}",
                     dst=f"{pkt.dst[0]}:{pkt.dst[1]}")
