"""Rule-based intrusion detection on router taps."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from types import SimpleNamespace

from . import dnp3
from .dnp3 import DNP3_PORT
from .netsim.core import to_s
from .netsim.packet import ECHO_REQUEST, Protocol


class RuleKind(str, enum.Enum):
    ICMP_RATE = "IcmpRate"
    ARP_BINDING_CHANGE = "ArpBindingChange"
    DNP3_FUNCTION = "Dnp3Function"
    DNP3_CRC_MISMATCH = "Dnp3CrcMismatch"


@dataclass(frozen=True)
class Rule:
    id: str
    kind: RuleKind
    window: float = 1.0
    threshold: int = 50
    functions: frozenset = field(default_factory=lambda: frozenset({0x04, 0x05}))

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        object.__setattr__(self, "functions", frozenset(int(f) for f in self.functions))
        if self.kind == RuleKind.ICMP_RATE:
            if not self.window > 0:
                raise ValueError(f"rule {self.id}: window must be positive")
            if self.threshold < 1:
                raise ValueError(f"rule {self.id}: threshold must be at least 1")


def default_rules(icmp_threshold: int = 50, icmp_window: float = 1.0) -> list[Rule]:
    return [
        Rule("icmp-flood", RuleKind.ICMP_RATE, window=icmp_window, threshold=icmp_threshold),
        Rule("arp-spoof", RuleKind.ARP_BINDING_CHANGE),
        Rule("dnp3-operate", RuleKind.DNP3_FUNCTION),
        Rule("dnp3-crc", RuleKind.DNP3_CRC_MISMATCH),
    ]


def rules_from_list(items: list[dict]) -> list[Rule]:
    rules = []
    for item in items:
        params = dict(item.get("params", {}))
        if "functions" in params:
            params["functions"] = frozenset(params["functions"])
        rules.append(Rule(str(item["id"]), RuleKind(item["kind"]), **params))
    ids = [r.id for r in rules]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate rule id")
    return rules


@dataclass(frozen=True)
class AlertRecord:
    time: float
    rule_id: str
    kind: str
    src: str
    dst: str
    detail: str


ALERT_FIELDS = ["time", "rule_id", "kind", "src", "dst", "detail"]


class Ids:
    """A passive sensor on the segments of one router.

    A packet is inspected once per distinct payload it is seen with, so a
    frame rewritten in flight is inspected again after the rewrite.
    """

    def __init__(self, net, name: str, rules: list[Rule], known_bindings: dict[str, str] | None = None,
                 sink: list | None = None):
        self.net = net
        self.name = name
        self.rules = list(rules)
        self.bindings: dict[str, str] = dict(known_bindings or {})
        self.alerts: list[AlertRecord] = sink if sink is not None else []
        self._seen: set = set()
        self._icmp: dict[str, list] = {}
        """rule id -> [window index, count, alerted]"""

    @classmethod
    def on_router(cls, net, router, rules: list[Rule], sink: list | None = None) -> "Ids":
        known = dict(router.arp_table)
        known.update({iface.ip: iface.mac for iface in router.interfaces})
        ids = cls(net, f"ids@{router.name}", rules, known, sink)
        for iface in router.interfaces:
            iface.segment.observers.append(ids.observe)
        return ids

    def observe(self, frame, segment) -> None:
        pkt = frame.packet
        key = (pkt.pid, hash(pkt.payload))
        if key in self._seen:
            return
        self._seen.add(key)
        self.inspect(pkt)

    def inspect(self, pkt) -> None:
        now = self.net.loop.now
        if pkt.protocol == Protocol.ICMP and pkt.icmp_type == ECHO_REQUEST:
            for rule in self.rules:
                if rule.kind == RuleKind.ICMP_RATE:
                    self._icmp_rate(rule, pkt, now)
        elif pkt.protocol == Protocol.ARP:
            op, ip, mac, _target = pkt.arp
            if op == "reply":
                old = self.bindings.get(ip)
                self.bindings[ip] = mac
                if old is not None and old != mac:
                    for rule in self.rules:
                        if rule.kind == RuleKind.ARP_BINDING_CHANGE:
                            self._alert(rule, pkt, f"{ip} moved from {old} to {mac}")
        elif pkt.protocol == Protocol.MINITCP and pkt.payload and DNP3_PORT in (pkt.src[1], pkt.dst[1]):
            self._dnp3(pkt)

    def _icmp_rate(self, rule: Rule, pkt, now_ns: int) -> None:
        window = math.floor(to_s(now_ns) / rule.window)
        state = self._icmp.get(rule.id)
        if state is None or state[0] != window:
            state = [window, 0, False]
            self._icmp[rule.id] = state
        state[1] += 1
        if state[1] >= rule.threshold and not state[2]:
            state[2] = True
            self._alert(rule, pkt, f"{state[1]} echo requests within {rule.window:g} s")

    def _dnp3(self, pkt) -> None:
        try:
            msg = dnp3.decode_message(pkt.payload)
        except (dnp3.BadBlockCrc, dnp3.BadHeaderCrc) as exc:
            for rule in self.rules:
                if rule.kind == RuleKind.DNP3_CRC_MISMATCH:
                    self._alert(rule, pkt, f"{type(exc).__name__}: {exc}")
            return
        except dnp3.Dnp3Error:
            return
        fn = int(msg.fragment.function)
        for rule in self.rules:
            if rule.kind == RuleKind.DNP3_FUNCTION and fn in rule.functions:
                self._alert(rule, pkt, f"function 0x{fn:02X} {msg.fragment.function.name}")

    def _alert(self, rule: Rule, pkt, detail: str) -> None:
        rec = AlertRecord(self.net.now, rule.id, rule.kind.value, f"{pkt.src[0]}:{pkt.src[1]}",
                          f"{pkt.dst[0]}:{pkt.dst[1]}", f"[{self.name}] {detail}")
        self.alerts.append(rec)


class _OfflineClock:
    def __init__(self):
        self.loop = SimpleNamespace(now=0)

    @property
    def now(self) -> float:
        return to_s(self.loop.now)


def inspect_stream(packets, rules: list[Rule], known_bindings: dict[str, str] | None = None) -> list[AlertRecord]:
    """Run a ruleset over ``(time_ns, packet)`` pairs outside a live simulation."""
    clock = _OfflineClock()
    ids = Ids(clock, "offline", rules, known_bindings)
    for t_ns, pkt in packets:
        clock.loop.now = t_ns
        ids.inspect(pkt)
    return ids.alerts


def alert_histogram(alerts, bucket: float) -> dict[tuple[str, int], int]:
    """Counts per ``(kind, floor(time / bucket))``."""
    if not bucket > 0:
        raise ValueError("bucket must be positive")
    out: dict[tuple[str, int], int] = {}
    for a in alerts:
        key = (a.kind, math.floor(a.time / bucket))
        out[key] = out.get(key, 0) + 1
    return dict(sorted(out.items()))


def write_alerts_csv(alerts, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ALERT_FIELDS)
        for a in alerts:
            writer.writerow([repr(a.time), a.rule_id, a.kind, a.src, a.dst, a.detail])


def read_alerts_csv(path) -> list[AlertRecord]:
    with open(path, newline="") as fh:
        return [AlertRecord(float(row["time"]), row["rule_id"], row["kind"], row["src"], row["dst"], row["detail"])
                for row in csv.DictReader(fh)]
