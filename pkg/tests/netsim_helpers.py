"""Small topologies and fault injection for network tests."""
from scadasim.netsim import LinkSpec, Network, Protocol

LINK = LinkSpec(10e6, 160e-6, 64)


def pair(kind="p2p", spec=LINK, **net_kw):
    """Two hosts on one segment."""
    net = Network(seed=1, **net_kw)
    net.add_segment("s", spec, kind)
    a, b = net.add_node("a"), net.add_node("b")
    net.connect(a, "s", "10.0.0.1/24")
    net.connect(b, "s", "10.0.0.2/24")
    return net, a, b


def icmp(net, src, dst, size):
    """An echo request whose on-wire size is ``size`` octets."""
    return net.make_packet((src.ip, 0), (dst.ip, 0), Protocol.ICMP, payload=bytes(size - 42), icmp_type=8)


def drop_where(net, segment, predicate):
    """Make ``segment`` lose every frame for which ``predicate(packet)`` is true."""
    seg = net.segments[segment]
    original = seg.arrive
    lost = []

    def arrive(frame, sender, tx):
        if predicate(frame.packet):
            lost.append(frame.packet)
            net.record_drop(frame.packet, "injected", segment)
            return
        original(frame, sender, tx)

    seg.arrive = arrive
    return lost
