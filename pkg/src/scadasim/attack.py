"""In-path adversary: ARP poisoning, DNP3 mutation with limited success, ICMP flooding, analytics."""
from __future__ import annotations

import enum
import random
from dataclasses import asdict, dataclass, field

from . import dnp3
from .dnp3 import DNP3_PORT, ControlCode, FunctionCode, PointKind
from .netsim.core import to_ns
from .netsim.packet import Packet, Protocol
from .netsim.traffic import IcmpFlood
from .scada import PointMap


class AttackError(Exception):
    pass


class ZeroProbability(AttackError):
    pass


class NoObservedSetpoint(AttackError):
    pass


class UseCase(str, enum.Enum):
    UC1 = "UC1"
    UC2 = "UC2"
    UC3 = "UC3"
    UC4 = "UC4"


class PacketClass(str, enum.Enum):
    BO = "BO"
    AO = "AO"
    RR = "RR"
    OTHER = "Other"


@dataclass(frozen=True)
class AttackPolicy:
    """What the adversary mutates and how reliably it manages to.

    ``breakers`` are the branches whose CLOSE commands become TRIP (UC1) or
    the branch to open once the generators are low (UC2, UC4).
    ``generators`` are the units whose setpoints and readings are attacked;
    ``flow_branches`` the branches whose flow readings are inflated (UC3).
    """

    use_case: UseCase
    breakers: tuple[str, ...] = ()
    generators: tuple[str, ...] = ()
    flow_branches: tuple[str, ...] = ()
    p: float | None = 0.8
    q: float | None = 0.8
    r: float | None = 0.6
    fci_processing_delay: float = 0.120
    fdi_processing_delay: float = 0.170
    service_rate: float = 50.0
    """packets per second the single sniffing buffer can process (mu)"""
    recompute_crc: bool = True
    setpoint_value: float | None = None
    """value forced into setpoint commands; defaults 0 (UC2, UC4) and 20 (UC3)"""
    false_output: float = 20.0
    false_flow: float = 3000.0
    trip_below: float = 50.0
    """UC4: open the breaker only once every targeted unit truly produces less than this"""
    reaction_tolerance: float = 1.0
    """UC3/UC4: a setpoint further than this from a unit's true output counts as an operator reaction"""

    def __post_init__(self):
        object.__setattr__(self, "use_case", UseCase(self.use_case))
        for name in ("p", "q", "r"):
            val = getattr(self, name)
            if val is not None and not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.fci_processing_delay < 0 or self.fdi_processing_delay < 0:
            raise ValueError("processing delays must be non-negative")
        if self.fdi_processing_delay < self.fci_processing_delay:
            raise ValueError("FDI processing delay must not be shorter than the FCI delay")
        if not self.service_rate > 0:
            raise ValueError("service_rate must be positive")
        for name in required_probabilities(self.use_case):
            if getattr(self, name) is None:
                raise ValueError(f"{self.use_case.value} requires {name}")

    @property
    def forced_setpoint(self) -> float:
        if self.setpoint_value is not None:
            return self.setpoint_value
        return self.false_output if self.use_case == UseCase.UC3 else 0.0


def required_probabilities(use_case) -> tuple[str, ...]:
    """Probabilities a use case depends on (in simulation)."""
    return {
        UseCase.UC1: ("p",),
        UseCase.UC2: ("p", "q"),
        UseCase.UC3: ("q", "r"),
        UseCase.UC4: ("p", "q", "r"),
    }[UseCase(use_case)]


@dataclass
class MutationRecord:
    time: float
    cls: PacketClass
    attempted: bool
    succeeded: bool
    missed: bool = False
    original: list = field(default_factory=list)
    mutated: list = field(default_factory=list)
    crc_recomputed: bool = False
    seq_preserved: bool = False
    seq: int | None = None
    pid: int = 0
    src: str = ""
    dst: str = ""
    detail: str = ""

    def as_dict(self) -> dict:
        out = asdict(self)
        out["cls"] = self.cls.value
        return out


class MitmProxy:
    """ARP-poisoning man in the middle with one sniffing buffer.

    DNP3 segments carrying data pass through a single-server buffer with
    service time ``1/service_rate``; a segment that arrives while the
    buffer is busy is missed and lost.  Targeted segments are mutated with
    the class probability; a failed attempt drops the segment, so the
    sender retransmits it.  Everything else is forwarded unchanged.
    """

    def __init__(self, net, node, policy: AttackPolicy, gateway_ip: str,
                 point_maps: dict[str, PointMap], rng: random.Random | None = None):
        self.net = net
        self.node = node
        self.policy = policy
        self.gateway_ip = gateway_ip
        self.point_maps = dict(point_maps)
        self.victims = list(self.point_maps)
        self.rng = rng or net.rng(f"mitm:{node.name}")
        self.service_ns = to_ns(1.0 / policy.service_rate)
        self.busy_until = 0
        self.engaged = False
        self.engaged_at: float | None = None
        self.records: list[MutationRecord] = []
        self.arrivals = 0
        self.misses = 0
        self.observed_setpoints: dict[str, float] = {}
        self.true_outputs: dict[str, float] = {}
        self.fdi_done = False
        self.reacting = False
        """UC3/UC4 only go after setpoints once a falsified reading has reached the operator and
        the operator has answered it with a setpoint change."""

    # -- poisoning -----------------------------------------------------------------
    def engage(self) -> None:
        """Tell the gateway that every victim lives here, and every victim that the gateway does."""
        iface = self.node.interfaces[0]
        gw_mac = self.node.arp_resolve(self.gateway_ip)
        for victim in self.victims:
            self._claim(iface, victim, self.gateway_ip, gw_mac)
            self._claim(iface, self.gateway_ip, victim, self.node.arp_resolve(victim))
        self.node.interceptor = self.intercept
        self.engaged = True
        self.engaged_at = self.net.now
        self.net.log("mitm_engage", node=self.node.name, victims=self.victims, gateway=self.gateway_ip)

    def _claim(self, iface, claimed_ip: str, target_ip: str, target_mac: str) -> None:
        pkt = self.net.make_packet((claimed_ip, 0), (target_ip, 0), Protocol.ARP,
                                   arp=("reply", claimed_ip, iface.mac, target_ip))
        self.node.send_frame(iface, target_mac, pkt)

    def restore(self) -> None:
        """Send the true bindings back and stop intercepting."""
        iface = self.node.interfaces[0]
        gw_mac = self.node.arp_resolve(self.gateway_ip)
        for victim in self.victims:
            v_mac = self.node.arp_resolve(victim)
            for claimed, claimed_mac, target, target_mac in ((self.gateway_ip, gw_mac, victim, v_mac),
                                                             (victim, v_mac, self.gateway_ip, gw_mac)):
                pkt = self.net.make_packet((claimed, 0), (target, 0), Protocol.ARP,
                                           arp=("reply", claimed, claimed_mac, target))
                self.node.send_frame(iface, target_mac, pkt)
        self.engaged = False
        self.net.log("mitm_restore", node=self.node.name)

    # -- interception --------------------------------------------------------------------
    def intercept(self, packet: Packet, iface) -> None:
        if not _carries_dnp3(packet):
            self.node.output(packet)
            return
        self.arrivals += 1
        now = self.net.loop.now
        if now < self.busy_until:
            self.misses += 1
            cls, _ = self._classify_quiet(packet)
            self._record(MutationRecord(self.net.now, cls, False, False, missed=True, seq=packet.seq,
                                        pid=packet.pid, src=_addr(packet.src), dst=_addr(packet.dst),
                                        detail="buffer busy"))
            self.net.record_drop(packet, "mitm_miss", self.node.name)
            return
        self.busy_until = now + self.service_ns
        record, delay = self.process(packet)
        if record is not None and record.attempted and not record.succeeded:
            self.net.loop.schedule(self.service_ns, self.net.record_drop, packet, "mitm_fail", self.node.name)
            return
        self.net.loop.schedule(self.service_ns + to_ns(delay), self.node.output, packet)

    def _classify_quiet(self, packet: Packet):
        try:
            msg = dnp3.decode_message(packet.payload)
        except dnp3.Dnp3Error:
            return PacketClass.OTHER, None
        return self.classify(packet, msg), msg

    def classify(self, packet: Packet, msg) -> PacketClass:
        pm = self.point_maps.get(packet.dst[0]) or self.point_maps.get(packet.src[0])
        if pm is None:
            return PacketClass.OTHER
        frag = msg.fragment
        uc = self.policy.use_case
        if frag.function in (FunctionCode.DIRECT_OPERATE, FunctionCode.SELECT, FunctionCode.OPERATE):
            bo = frag.group(PointKind.BINARY_OUTPUT_COMMAND)
            if bo is not None and self._bo_targets(pm, bo):
                return PacketClass.BO
            ao = frag.group(PointKind.ANALOG_OUTPUT_COMMAND)
            if ao is not None and uc != UseCase.UC1 and self._ao_targets(pm, ao):
                return PacketClass.AO
            return PacketClass.OTHER
        if frag.function == FunctionCode.SOLICITED_RESPONSE and uc in (UseCase.UC3, UseCase.UC4):
            ai = frag.group(PointKind.ANALOG_INPUT)
            if ai is not None and self._rr_targets(pm, ai):
                return PacketClass.RR
        return PacketClass.OTHER

    def _bo_targets(self, pm: PointMap, grp) -> list[int]:
        uc = self.policy.use_case
        if uc == UseCase.UC3:
            return []
        if uc == UseCase.UC4 and not self._outputs_low():
            return []
        wanted = {pm.bo_index(b) for b in self.policy.breakers}
        return [idx for idx, (code, _st) in grp.points if idx in wanted and code == ControlCode.CLOSE]

    def _ao_targets(self, pm: PointMap, grp) -> list[int]:
        if self.policy.use_case in (UseCase.UC3, UseCase.UC4) and not self.reacting:
            return []
        wanted = {pm.ao_index(g) for g in self.policy.generators}
        return [idx for idx, _v in grp.points if idx in wanted]

    def _rr_targets(self, pm: PointMap, grp) -> list[int]:
        wanted = {pm.ai_index("output", g) for g in self.policy.generators}
        if self.policy.use_case == UseCase.UC3:
            wanted |= {pm.ai_index("flow", b) for b in self.policy.flow_branches}
        wanted.discard(None)
        return [idx for idx, _v in grp.points if idx in wanted]

    def _outputs_low(self) -> bool:
        gens = self.policy.generators
        if not gens or any(g not in self.true_outputs for g in gens):
            return False
        return all(self.true_outputs[g] < self.policy.trip_below for g in gens)

    def process(self, packet: Packet):
        """Classify, roll and (maybe) mutate one intercepted segment in place.

        Returns ``(record, forwarding_delay)``; a failed attempt must be
        dropped by the caller.
        """
        try:
            msg = dnp3.decode_message(packet.payload)
        except dnp3.Dnp3Error as exc:
            rec = MutationRecord(self.net.now, PacketClass.OTHER, False, False, seq=packet.seq,
                                 pid=packet.pid, src=_addr(packet.src), dst=_addr(packet.dst),
                                 detail=f"undecodable: {type(exc).__name__}")
            self._record(rec)
            return rec, 0.0
        pm = self.point_maps.get(packet.dst[0]) or self.point_maps.get(packet.src[0])
        self._observe(pm, msg)
        cls = self.classify(packet, msg)
        if cls == PacketClass.OTHER:
            return None, 0.0
        prob = {PacketClass.BO: self.policy.p, PacketClass.AO: self.policy.q,
                PacketClass.RR: self.policy.r}[cls]
        rec = MutationRecord(self.net.now, cls, True, False, seq=packet.seq, pid=packet.pid,
                             src=_addr(packet.src), dst=_addr(packet.dst))
        if prob is None or self.rng.random() >= prob:
            rec.detail = "attempt failed"
            self._record(rec)
            return rec, 0.0
        rec.original = _points(msg.fragment)
        self._mutate(pm, cls, msg)
        rec.mutated = _points(msg.fragment)
        seq_before = packet.seq
        packet.payload = dnp3.reencode_message(msg, recompute_crc=self.policy.recompute_crc)
        rec.succeeded = True
        if cls == PacketClass.RR:
            self.fdi_done = True
        rec.crc_recomputed = self.policy.recompute_crc
        rec.seq_preserved = packet.seq == seq_before
        self._record(rec)
        delay = self.policy.fdi_processing_delay if cls == PacketClass.RR else self.policy.fci_processing_delay
        return rec, delay

    def mask(self, packet: Packet):
        """UC4 masking of one read response, forwarding it unmodified until a setpoint was observed.

        Returns ``(record, forwarding_delay)`` like ``process``.
        """
        if self.policy.use_case != UseCase.UC4:
            raise AttackError("masking is a UC4 operation")
        cls, msg = self._classify_quiet(packet)
        if cls == PacketClass.RR:
            pm = self.point_maps.get(packet.dst[0]) or self.point_maps.get(packet.src[0])
            ai = msg.fragment.group(PointKind.ANALOG_INPUT)
            gens = {pm.analog_inputs[i][1] for i in self._rr_targets(pm, ai)}
            if gens - set(self.observed_setpoints):
                rec = MutationRecord(self.net.now, cls, False, False, seq=packet.seq, pid=packet.pid,
                                     src=_addr(packet.src), dst=_addr(packet.dst),
                                     detail=NoObservedSetpoint.__name__)
                self._record(rec)
                return rec, 0.0
        return self.process(packet)

    def _observe(self, pm: PointMap | None, msg) -> None:
        """Track true generator outputs (from responses) and operator setpoints (from commands)."""
        if pm is None:
            return
        frag = msg.fragment
        if frag.function == FunctionCode.SOLICITED_RESPONSE:
            ai = frag.group(PointKind.ANALOG_INPUT)
            if ai is not None:
                for idx, val in ai.points:
                    src = pm.analog_inputs.get(idx)
                    if src and src[0] == "output":
                        self.true_outputs[src[1]] = val
        elif frag.function in (FunctionCode.DIRECT_OPERATE, FunctionCode.SELECT, FunctionCode.OPERATE):
            ao = frag.group(PointKind.ANALOG_OUTPUT_COMMAND)
            if ao is not None and self.fdi_done and not self.reacting and self._is_reaction(pm, ao):
                self.reacting = True
                self.net.log("mitm_reaction", node=self.node.name, points=_points(frag))
            if ao is not None and self._ao_targets(pm, ao):
                for idx, (val, _st) in ao.points:
                    gen = pm.analog_outputs.get(idx)
                    if gen in self.policy.generators:
                        self.observed_setpoints[gen] = val

    def _is_reaction(self, pm: PointMap, grp) -> bool:
        """A setpoint away from what the unit produces: the operator is acting, not re-affirming."""
        for idx, (val, _st) in grp.points:
            gen = pm.analog_outputs.get(idx)
            if gen in self.policy.generators and gen in self.true_outputs:
                if abs(val - self.true_outputs[gen]) > self.policy.reaction_tolerance:
                    return True
        return False

    def _mutate(self, pm: PointMap, cls: PacketClass, msg) -> None:
        frag = msg.fragment
        pol = self.policy
        if cls == PacketClass.BO:
            grp = frag.group(PointKind.BINARY_OUTPUT_COMMAND)
            targets = set(self._bo_targets(pm, grp))
            grp.points = [(i, (ControlCode.TRIP, st) if i in targets else (c, st)) for i, (c, st) in grp.points]
        elif cls == PacketClass.AO:
            grp = frag.group(PointKind.ANALOG_OUTPUT_COMMAND)
            targets = set(self._ao_targets(pm, grp))
            grp.points = [(i, (pol.forced_setpoint, st) if i in targets else (v, st)) for i, (v, st) in grp.points]
        else:
            grp = frag.group(PointKind.ANALOG_INPUT)
            out = []
            for idx, val in grp.points:
                qty, dev = pm.analog_inputs.get(idx, ("", ""))
                if qty == "output" and dev in pol.generators:
                    val = self._false_reading(dev)
                elif qty == "flow" and dev in pol.flow_branches and pol.use_case == UseCase.UC3:
                    val = pol.false_flow
                out.append((idx, val))
            grp.points = out

    def _false_reading(self, gen: str) -> float:
        if self.policy.use_case == UseCase.UC4 and gen in self.observed_setpoints:
            return self.mask_value(gen)
        return self.policy.false_output

    def mask_value(self, gen: str) -> float:
        """UC4: the reading to show for ``gen``, i.e. the operator's last commanded setpoint."""
        if gen not in self.observed_setpoints:
            raise NoObservedSetpoint(gen)
        return self.observed_setpoints[gen]

    def _record(self, rec: MutationRecord) -> None:
        self.records.append(rec)
        self.net.log("mutation", **rec.as_dict())

    # -- telemetry -------------------------------------------------------------------
    def arrival_rate(self, until: float | None = None) -> float:
        if self.engaged_at is None:
            return 0.0
        span = (self.net.now if until is None else until) - self.engaged_at
        return self.arrivals / span if span > 0 else 0.0

    def miss_rate(self) -> float:
        return self.misses / self.arrivals if self.arrivals else 0.0

    def counts(self) -> dict:
        out = {}
        for cls in (PacketClass.BO, PacketClass.AO, PacketClass.RR):
            recs = [r for r in self.records if r.cls == cls]
            out[cls.value] = {
                "attempts": sum(r.attempted for r in recs),
                "successes": sum(r.succeeded for r in recs),
                "misses": sum(r.missed for r in recs),
            }
        fci = out["BO"]["attempts"] + out["AO"]["attempts"]
        out["FCI"] = {"attempts": fci, "successes": out["BO"]["successes"] + out["AO"]["successes"]}
        out["FDI"] = {"attempts": out["RR"]["attempts"], "successes": out["RR"]["successes"]}
        return out


def _carries_dnp3(packet: Packet) -> bool:
    return (packet.protocol == Protocol.MINITCP and bool(packet.payload)
            and DNP3_PORT in (packet.src[1], packet.dst[1]))


def _addr(a) -> str:
    return f"{a[0]}:{a[1]}"


def _points(frag) -> list:
    out = []
    for grp in frag.objects:
        for idx, val in grp.points:
            if isinstance(val, tuple):
                val = val[0]
            out.append([grp.kind.name, idx, val.name if isinstance(val, enum.Enum) else val])
    return out


# -- analytics ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackAnalyticsInput:
    m: int = 0
    n: int = 0
    o: int = 0
    lam: float = 0.0
    mu: float = 1.0

    def __post_init__(self):
        if min(self.m, self.n, self.o) < 0 or self.lam < 0:
            raise ValueError("counts and rates must be non-negative")
        if not self.mu > 0:
            raise ValueError("mu must be positive")


def _exponents(use_case, m: int, n: int, o: int) -> dict[str, int]:
    uc = UseCase(use_case)
    if uc == UseCase.UC1:
        return {"p": m}
    if uc == UseCase.UC2:
        return {"p": m, "q": n}
    if uc == UseCase.UC3:
        return {"r": o, "p": m}
    return {"p": m, "r": 2 * o}


def expected_steps(inp: AttackAnalyticsInput, use_case, p: float = 1.0, q: float = 1.0,
                   r: float = 1.0) -> float:
    """Expected campaign attempts: the inverse of the probability that every operation succeeds.

    UC2 uses p^m q^n, UC3 r^o p^m, UC4 p^m r^(2o) (UC1 p^m).
    """
    probs = {"p": p, "q": q, "r": r}
    total = 1.0
    for name, exp in _exponents(use_case, inp.m, inp.n, inp.o).items():
        if exp == 0:
            continue
        if probs[name] <= 0:
            raise ZeroProbability(f"{name} is zero for {UseCase(use_case).value}")
        total *= probs[name] ** exp
    return 1.0 / total


def operation_sequence(use_case, m: int, n: int, o: int) -> list[str]:
    """Ordered operations of one campaign; UC4 falsifies readings before and after its commands."""
    uc = UseCase(use_case)
    if uc == UseCase.UC1:
        return ["p"] * m
    if uc == UseCase.UC2:
        return ["p"] * m + ["q"] * n
    if uc == UseCase.UC3:
        return ["r"] * o + ["p"] * m
    return ["r"] * o + ["p"] * m + ["r"] * o


@dataclass(frozen=True)
class CampaignResult:
    attempts: int
    """campaign tries until one run of operations all succeeded"""
    fci_attempts: int
    fdi_attempts: int


def simulate_campaign(use_case, m: int, n: int, o: int, p: float, q: float, r: float,
                      rng: random.Random, max_attempts: int = 10_000_000) -> CampaignResult:
    """Replay a campaign until every operation succeeds in one pass; any failure restarts it."""
    ops = operation_sequence(use_case, m, n, o)
    probs = {"p": p, "q": q, "r": r}
    if any(probs[op] <= 0 for op in ops):
        raise ZeroProbability("a required operation can never succeed")
    attempts = fci = fdi = 0
    while attempts < max_attempts:
        attempts += 1
        for op in ops:
            if op == "r":
                fdi += 1
            else:
                fci += 1
            if rng.random() >= probs[op]:
                break
        else:
            return CampaignResult(attempts, fci, fdi)
    raise AttackError("campaign did not finish")


def campaign_statistics(use_case, m: int, n: int, o: int, p: float, q: float, r: float,
                        trials: int, seed: int) -> dict:
    rng = random.Random(seed)
    results = [simulate_campaign(use_case, m, n, o, p, q, r, rng) for _ in range(trials)]
    return {
        "trials": trials,
        "mean_attempts": sum(c.attempts for c in results) / trials,
        "mean_fci_attempts": sum(c.fci_attempts for c in results) / trials,
        "mean_fdi_attempts": sum(c.fdi_attempts for c in results) / trials,
        "expected_attempts": expected_steps(AttackAnalyticsInput(m, n, o), use_case, p, q, r),
    }


def traffic_intensity(lam: float, mu: float) -> float:
    if not mu > 0:
        raise ValueError("mu must be positive")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return lam / mu


# -- denial of service -----------------------------------------------------------------------

def dos_run(net, attacker, target_ip: str, payload_size: int, interval: float, duration: float,
            start: float | None = None, jitter: float = 0.0) -> IcmpFlood | None:
    """Flood ``target_ip`` from ``attacker``; ``duration`` 0 is a no-op."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if duration == 0:
        return None
    return IcmpFlood(attacker, target_ip, payload_size, interval, start=start, duration=duration, jitter=jitter)


__all__ = [
    "AttackError", "ZeroProbability", "NoObservedSetpoint", "UseCase", "PacketClass",
    "AttackPolicy", "required_probabilities", "MutationRecord", "MitmProxy",
    "AttackAnalyticsInput", "expected_steps", "operation_sequence", "CampaignResult",
    "simulate_campaign", "campaign_statistics", "traffic_intensity", "dos_run",
]
