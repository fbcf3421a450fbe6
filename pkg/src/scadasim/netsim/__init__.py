"""Deterministic discrete-event IP network emulator."""
from .core import NS_PER_S, EventLoop, derive_rng, to_ns, to_s
from .link import LinkSpec, Segment, Transmitter
from .metrics import FlowRegistry, MeasureResult, Metrics, ThroughputSample, throughput_sample
from .minitcp import ConnState, Connection, ConnectionFailed, TcpStack
from .network import Network, TopologyError, build_network, default_topology
from .node import Host, Interface, NetError, NoRoute, Node, Router, Unresolvable
from .packet import ACK, ECHO_REPLY, ECHO_REQUEST, SYN, Frame, Packet, Protocol
from .traffic import IcmpFlood, icmp_flood

__all__ = [
    "NS_PER_S", "EventLoop", "derive_rng", "to_ns", "to_s",
    "LinkSpec", "Segment", "Transmitter",
    "FlowRegistry", "MeasureResult", "Metrics", "ThroughputSample", "throughput_sample",
    "ConnState", "Connection", "ConnectionFailed", "TcpStack",
    "Network", "TopologyError", "build_network", "default_topology",
    "Host", "Interface", "NetError", "NoRoute", "Node", "Router", "Unresolvable",
    "ACK", "ECHO_REPLY", "ECHO_REQUEST", "SYN", "Frame", "Packet", "Protocol",
    "IcmpFlood", "icmp_flood",
]
