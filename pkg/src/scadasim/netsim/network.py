"""The network container: nodes, segments, topology files and the event log."""
from __future__ import annotations

import ipaddress

from ..dnp3 import DNP3_PORT
from .core import EventLoop, derive_rng, to_ns, to_s
from .link import LinkSpec, Segment
from .metrics import FlowRegistry, Metrics
from .minitcp import TcpStack
from .node import Host, Node, Router
from .packet import Packet, Protocol

LOG_LEVELS = ("all", "dnp3", "none")

DEFAULT_LINK = {"bandwidth": 10e6, "propagation_delay": 160e-6, "queue_capacity": 64}


class TopologyError(ValueError):
    pass


class Network:
    """One simulation instance.  Everything hangs off a single event loop.

    ``log_packets`` controls per-packet records: ``all`` logs every packet,
    ``dnp3`` only MiniTcp traffic on the DNP3 port, ``none`` nothing.
    Non-packet events (ARP changes, connection state, application records)
    are always logged.
    """

    def __init__(self, seed: int = 0, log_packets: str = "all", rto: float = 0.2,
                 max_retries: int = 5, echo_delay: float = 0.0):
        if log_packets not in LOG_LEVELS:
            raise ValueError(f"log_packets must be one of {LOG_LEVELS}")
        self.seed = seed
        self.log_packets = log_packets
        self.rto = rto
        self.max_retries = max_retries
        if echo_delay < 0:
            raise ValueError("echo_delay must be non-negative")
        self.echo_delay = echo_delay
        """upper bound of the random control-plane delay before a router answers an echo request"""
        self.loop = EventLoop()
        self.nodes: dict[str, Node] = {}
        self.segments: dict[str, Segment] = {}
        self.events: list[dict] = []
        self.metrics = Metrics(self.loop)
        self.flows = FlowRegistry(self.loop)
        self.roles: dict[str, list[str]] = {}
        self._pid = 0
        self._open: dict[int, Packet] = {}
        self.delivered = 0
        self.dropped = 0
        self.drop_reasons: dict[str, int] = {}

    # -- clock -------------------------------------------------------------
    @property
    def now(self) -> float:
        return to_s(self.loop.now)

    def advance(self, until: float) -> list[dict]:
        """Run the event loop up to ``until`` virtual seconds; return the records logged meanwhile."""
        mark = len(self.events)
        self.loop.run_until(to_ns(until))
        return self.events[mark:]

    def at(self, when: float, fn, *args):
        return self.loop.schedule_at(to_ns(when), fn, *args)

    def after(self, delay: float, fn, *args):
        return self.loop.schedule(to_ns(delay), fn, *args)

    def rng(self, stream: str):
        return derive_rng(self.seed, stream)

    # -- construction --------------------------------------------------------
    def add_segment(self, name: str, spec: LinkSpec, kind: str = "bus") -> Segment:
        if name in self.segments:
            raise TopologyError(f"duplicate segment {name}")
        seg = Segment(self, name, spec, kind)
        self.segments[name] = seg
        return seg

    def add_node(self, name: str, kind: str = "host", role: str | None = None) -> Node:
        if name in self.nodes:
            raise TopologyError(f"duplicate node {name}")
        cls = {"host": Host, "router": Router}.get(kind)
        if cls is None:
            raise TopologyError(f"unknown node kind {kind!r}")
        node = cls(self, name)
        if node.forwarding:
            node.echo_delay = self.echo_delay
        self.nodes[name] = node
        if role:
            self.roles.setdefault(role, []).append(name)
        return node

    def connect(self, node: Node, segment: str, address: str, mac: str | None = None):
        if segment not in self.segments:
            raise TopologyError(f"{node.name} refers to unknown segment {segment}")
        if mac is None:
            mac = "02:00:%02x:%02x:%02x:%02x" % tuple(ipaddress.IPv4Interface(address).ip.packed)
        iface = node.add_interface(f"{node.name}/{segment}", address, mac)
        self.segments[segment].attach(iface)
        return iface

    def tcp(self, node: Node) -> TcpStack:
        if node.tcp is None:
            TcpStack(node, self.rng(f"tcp:{node.name}"), self.rto, self.max_retries)
        return node.tcp

    def seed_arp(self) -> None:
        """Pre-load every node with the bindings of its on-link neighbours."""
        for node in self.nodes.values():
            for iface in node.interfaces:
                for other in iface.segment.interfaces:
                    if other is not iface:
                        node.arp_table.setdefault(other.ip, other.mac)

    def node(self, name: str) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise TopologyError(f"unknown node {name}") from None

    def node_by_ip(self, ip: str) -> Node:
        for node in self.nodes.values():
            if node.owns(ip):
                return node
        raise TopologyError(f"no node owns {ip}")

    def role(self, role: str) -> list[Node]:
        return [self.nodes[n] for n in self.roles.get(role, [])]

    # -- packets and telemetry ---------------------------------------------------
    def make_packet(self, src, dst, protocol: Protocol, **fields) -> Packet:
        self._pid += 1
        return Packet(src, dst, protocol, created_at=self.loop.now, pid=self._pid, **fields)

    def _loggable(self, packet: Packet) -> bool:
        if self.log_packets == "all":
            return True
        if self.log_packets == "dnp3":
            return packet.protocol == Protocol.MINITCP and DNP3_PORT in (packet.src[1], packet.dst[1])
        return False

    def record_send(self, node: Node, packet: Packet) -> None:
        self._open[packet.pid] = packet
        if self._loggable(packet):
            rec = {
                "type": "send", "node": node.name, "pid": packet.pid,
                "proto": packet.protocol.value,
                "src": f"{packet.src[0]}:{packet.src[1]}", "dst": f"{packet.dst[0]}:{packet.dst[1]}",
                "size": packet.size, "flags": packet.flag_text(),
            }
            if packet.seq is not None:
                rec["seq"] = packet.seq
            if packet.ack is not None:
                rec["ack"] = packet.ack
            if packet.payload and DNP3_PORT in (packet.src[1], packet.dst[1]):
                rec["payload"] = packet.payload.hex()
            self.log(**rec)

    def record_deliver(self, node: Node, packet: Packet) -> None:
        if self._open.pop(packet.pid, None) is None:
            raise RuntimeError(f"packet {packet.pid} delivered twice or never sent")
        self.delivered += 1
        if self._loggable(packet):
            self.log("deliver", node=node.name, pid=packet.pid)

    def record_drop(self, packet: Packet, reason: str, where: str) -> None:
        if self._open.pop(packet.pid, None) is None:
            raise RuntimeError(f"packet {packet.pid} dropped after it was already accounted for")
        self.dropped += 1
        key = reason.split(":", 1)[0]
        self.drop_reasons[key] = self.drop_reasons.get(key, 0) + 1
        if self._loggable(packet):
            self.log("drop", node=where, pid=packet.pid, reason=reason)

    def in_flight(self) -> int:
        return len(self._open)

    def log(self, type: str, **fields) -> None:
        rec = {"t": to_s(self.loop.now), "type": type}
        rec.update(fields)
        self.events.append(rec)


def _spec(doc: dict, defaults: dict) -> LinkSpec:
    merged = {**defaults, **{k: doc[k] for k in DEFAULT_LINK if k in doc}}
    return LinkSpec(float(merged["bandwidth"]), float(merged["propagation_delay"]),
                    int(merged["queue_capacity"]))


def build_network(topology: dict, seed: int = 0, **net_kw) -> Network:
    """Build a network from a topology document.

    Keys: ``link`` (default LinkSpec fields), ``segments`` (name, kind, optional
    LinkSpec overrides), ``nodes`` (name, kind, role, interfaces with segment
    and address, routes with prefix and via, arp seeds) and ``arp_seed``
    (``auto`` pre-loads all on-link bindings).
    """
    net = Network(seed=seed, **net_kw)
    defaults = {**DEFAULT_LINK, **topology.get("link", {})}
    try:
        for seg in topology["segments"]:
            net.add_segment(seg["name"], _spec(seg, defaults), seg.get("kind", "bus"))
        for nd in topology["nodes"]:
            node = net.add_node(nd["name"], nd.get("kind", "host"), nd.get("role"))
            for iface in nd.get("interfaces", []):
                net.connect(node, iface["segment"], iface["address"], iface.get("mac"))
            if not node.interfaces:
                raise TopologyError(f"node {node.name} has no interfaces")
            for route in nd.get("routes", []):
                node.add_route(route["prefix"], route["via"])
            for seed_entry in nd.get("arp", []):
                node.arp_table[seed_entry["ip"]] = seed_entry["mac"]
    except KeyError as exc:
        raise TopologyError(f"topology entry missing {exc.args[0]!r}") from None
    if topology.get("arp_seed", "auto") == "auto":
        net.seed_arp()
    return net


def default_topology(n_masters: int = 1, n_outstations: int = 1, attacker: bool = True,
                     link: dict | None = None) -> dict:
    """Control-centre LAN -- WAN -- substation LAN, one broadcast domain per LAN."""
    if n_masters < 1 or n_outstations < 1:
        raise ValueError("need at least one master and one outstation")
    if n_masters > 200 or n_outstations > 50:
        raise ValueError("too many hosts for the default address plan")
    nodes = [
        {"name": "ucc_router", "kind": "router", "role": "ucc_router",
         "interfaces": [{"segment": "ucc_lan", "address": "172.16.0.4/24"},
                        {"segment": "wan", "address": "10.0.0.1/30"}],
         "routes": [{"prefix": "10.0.1.0/24", "via": "10.0.0.2"}]},
        {"name": "sub_router", "kind": "router", "role": "sub_router",
         "interfaces": [{"segment": "sub_lan", "address": "10.0.1.1/24"},
                        {"segment": "wan", "address": "10.0.0.2/30"}],
         "routes": [{"prefix": "172.16.0.0/24", "via": "10.0.0.1"}]},
    ]
    for i in range(n_masters):
        host = 2 + i if i < 2 else 3 + i  # skip the router's .4
        nodes.append({"name": f"master{i + 1}", "role": "master",
                      "interfaces": [{"segment": "ucc_lan", "address": f"172.16.0.{host}/24"}],
                      "routes": [{"prefix": "0.0.0.0/0", "via": "172.16.0.4"}]})
    for i in range(n_outstations):
        nodes.append({"name": f"outstation{i + 1}", "role": "outstation",
                      "interfaces": [{"segment": "sub_lan", "address": f"10.0.1.{10 + i}/24"}],
                      "routes": [{"prefix": "0.0.0.0/0", "via": "10.0.1.1"}]})
    if attacker:
        nodes.append({"name": "attacker", "role": "attacker",
                      "interfaces": [{"segment": "sub_lan", "address": "10.0.1.66/24"}],
                      "routes": [{"prefix": "0.0.0.0/0", "via": "10.0.1.1"}]})
    return {
        "link": dict(link or DEFAULT_LINK),
        "segments": [{"name": "ucc_lan", "kind": "bus"}, {"name": "wan", "kind": "p2p"},
                     {"name": "sub_lan", "kind": "bus"}],
        "nodes": nodes,
        "arp_seed": "auto",
    }
