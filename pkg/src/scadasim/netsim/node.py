"""Hosts, routers and the IP/ARP plumbing they share."""
from __future__ import annotations

import ipaddress

from .packet import ECHO_REPLY, ECHO_REQUEST, Frame, Packet, Protocol


class NetError(Exception):
    pass


class Unresolvable(NetError):
    pass


class NoRoute(NetError):
    pass


class Interface:
    def __init__(self, node, name: str, address: str, mac: str):
        self.node = node
        self.name = name
        self.address = ipaddress.IPv4Interface(address)
        self.ip = str(self.address.ip)
        self.network = self.address.network
        self.mac = mac
        self.segment = None


class Node:
    """An IP node with static routes and a permissive ARP cache.

    Any ARP reply, solicited or not, overwrites the cached binding.  That is
    the weakness ARP cache poisoning relies on.
    """

    forwarding = False

    def __init__(self, net, name: str):
        self.net = net
        self.name = name
        self.interfaces: list[Interface] = []
        self.arp_table: dict[str, str] = {}
        self.routes: list[tuple[ipaddress.IPv4Network, str]] = []
        """``(prefix, next_hop_ip)`` static routes."""
        self.tcp = None
        self.icmp_handlers: list = []
        self.interceptor = None
        """When set, transit packets are handed to ``interceptor(packet, iface)`` instead of being routed."""
        self.echo_delay = 0.0
        """Echo replies leave after a uniform random delay up to this many seconds."""
        self._echo_rng = None

    def add_interface(self, name: str, address: str, mac: str) -> Interface:
        iface = Interface(self, name, address, mac)
        self.interfaces.append(iface)
        return iface

    @property
    def ip(self) -> str:
        return self.interfaces[0].ip

    @property
    def mac(self) -> str:
        return self.interfaces[0].mac

    def owns(self, ip: str) -> bool:
        return any(iface.ip == ip for iface in self.interfaces)

    def add_route(self, prefix: str, next_hop: str) -> None:
        self.routes.append((ipaddress.IPv4Network(prefix), next_hop))
        self.routes.sort(key=lambda r: -r[0].prefixlen)

    # -- ARP -------------------------------------------------------------
    def arp_update(self, ip: str, mac: str) -> None:
        old = self.arp_table.get(ip)
        self.arp_table[ip] = mac
        if old != mac:
            self.net.log("arp_update", node=self.name, ip=ip, mac=mac, previous=old)

    def arp_resolve(self, ip: str) -> str:
        mac = self.arp_table.get(ip)
        if mac is not None:
            return mac
        for iface in self.interfaces:
            seg = iface.segment
            if seg is None:
                continue
            for other in seg.interfaces:
                if other is not iface and other.ip == ip:
                    self.arp_update(ip, other.mac)
                    return other.mac
        raise Unresolvable(f"{self.name} cannot resolve {ip}")

    # -- IP output -------------------------------------------------------
    def route(self, dst_ip: str) -> tuple[Interface, str]:
        addr = ipaddress.IPv4Address(dst_ip)
        for iface in self.interfaces:
            if addr in iface.network:
                return iface, dst_ip
        for prefix, hop in self.routes:
            if addr in prefix:
                hop_addr = ipaddress.IPv4Address(hop)
                for iface in self.interfaces:
                    if hop_addr in iface.network:
                        return iface, hop
        raise NoRoute(f"{self.name} has no route to {dst_ip}")

    def send(self, packet: Packet) -> bool:
        """Originate a packet from this node."""
        self.net.record_send(self, packet)
        return self.output(packet)

    def output(self, packet: Packet) -> bool:
        try:
            iface, hop = self.route(packet.dst[0])
            mac = self.arp_resolve(hop)
        except NetError as exc:
            self.net.record_drop(packet, type(exc).__name__, self.name)
            return False
        return iface.segment.transmit(Frame(iface.mac, mac, packet), iface)

    def send_frame(self, iface: Interface, dst_mac: str, packet: Packet) -> bool:
        self.net.record_send(self, packet)
        return iface.segment.transmit(Frame(iface.mac, dst_mac, packet), iface)

    # -- input -----------------------------------------------------------
    def receive(self, frame: Frame, iface: Interface) -> None:
        packet = frame.packet
        if packet.protocol == Protocol.ARP:
            op, sender_ip, sender_mac, _target = packet.arp
            self.net.record_deliver(self, packet)
            if op == "reply":
                self.arp_update(sender_ip, sender_mac)
            return
        if self.owns(packet.dst[0]):
            self.net.record_deliver(self, packet)
            self.local_input(packet)
        elif self.forwarding or self.interceptor is not None:
            self.forward(packet, iface)
        else:
            self.net.record_drop(packet, "not_for_us", self.name)

    def forward(self, packet: Packet, in_iface: Interface) -> None:
        if self.interceptor is not None:
            self.interceptor(packet, in_iface)
        else:
            self.output(packet)

    def local_input(self, packet: Packet) -> None:
        if packet.protocol == Protocol.ICMP:
            for handler in self.icmp_handlers:
                handler(packet)
            if packet.icmp_type == ECHO_REQUEST:
                reply = self.net.make_packet((packet.dst[0], 0), (packet.src[0], 0), Protocol.ICMP,
                                             payload=packet.payload, icmp_type=ECHO_REPLY)
                if self.echo_delay > 0:
                    if self._echo_rng is None:
                        self._echo_rng = self.net.rng(f"echo:{self.name}")
                    self.net.after(self._echo_rng.uniform(0.0, self.echo_delay), self.send, reply)
                else:
                    self.send(reply)
        elif packet.protocol == Protocol.MINITCP and self.tcp is not None:
            self.tcp.receive(packet)


class Host(Node):
    def __init__(self, net, name: str, gateway: str | None = None):
        super().__init__(net, name)
        if gateway:
            self.add_route("0.0.0.0/0", gateway)


class Router(Node):
    forwarding = True
