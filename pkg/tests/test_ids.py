import pytest

from scadasim import dnp3
from scadasim.dnp3 import AppFragment, ControlCode, FunctionCode, PointGroup, PointKind
from scadasim.ids import (AlertRecord, Rule, RuleKind, alert_histogram, default_rules, inspect_stream,
                          read_alerts_csv, rules_from_list, write_alerts_csv)
from scadasim.netsim import Packet, Protocol

RULES = default_rules(icmp_threshold=50, icmp_window=1.0)


def echo(i):
    return Packet(("10.0.1.66", 0), ("10.0.1.1", 0), Protocol.ICMP, payload=bytes(8), icmp_type=8, pid=i)


def arp_reply(ip, mac, pid):
    return Packet((ip, 0), ("10.0.1.10", 0), Protocol.ARP, arp=("reply", ip, mac, "10.0.1.10"), pid=pid)


def dnp3_packet(fn, pid=1, tamper=False):
    frag = AppFragment(fn, [PointGroup(PointKind.BINARY_OUTPUT_COMMAND, [(0, (ControlCode.TRIP, 0))])])
    payload = bytearray(dnp3.encode_message(frag, dnp3.CTRL_FROM_MASTER, 10, 1))
    if tamper:
        payload[12] ^= 0xFF
    return Packet(("172.16.0.2", 40000), ("10.0.1.10", 20000), Protocol.MINITCP, payload=bytes(payload),
                  seq=1, pid=pid)


def test_icmp_rate_alerts_once_per_window():
    stream = [(k * 10_000_000, echo(k)) for k in range(200)]  # 100 per second for two seconds
    alerts = inspect_stream(stream, RULES)
    assert [a.kind for a in alerts] == ["IcmpRate", "IcmpRate"]
    assert [int(a.time) for a in alerts] == [0, 1]


def test_icmp_below_threshold_is_quiet():
    stream = [(k * 25_000_000, echo(k)) for k in range(40)]
    assert inspect_stream(stream, RULES) == []


def test_arp_binding_change_alerts():
    known = {"10.0.1.1": "02:00:0a:00:01:01"}
    stream = [(0, arp_reply("10.0.1.1", "02:00:0a:00:01:01", 1)), (5, arp_reply("10.0.1.1", "02:00:0a:00:01:42", 2))]
    alerts = inspect_stream(stream, RULES, known)
    assert [a.kind for a in alerts] == ["ArpBindingChange"]
    assert "10.0.1.1" in alerts[0].detail


@pytest.mark.parametrize("fn,expected", [(FunctionCode.DIRECT_OPERATE, ["Dnp3Function"]),
                                         (FunctionCode.OPERATE, ["Dnp3Function"]),
                                         (FunctionCode.SELECT, [])])
def test_dnp3_function_rule(fn, expected):
    assert [a.kind for a in inspect_stream([(0, dnp3_packet(fn))], RULES)] == expected


def test_crc_mismatch_rule():
    alerts = inspect_stream([(0, dnp3_packet(FunctionCode.DIRECT_OPERATE, tamper=True))], RULES)
    assert [a.kind for a in alerts] == ["Dnp3CrcMismatch"]


def test_rules_from_config():
    rules = rules_from_list([{"id": "flood", "kind": "IcmpRate", "params": {"window": 2, "threshold": 5}},
                             {"id": "op", "kind": "Dnp3Function", "params": {"functions": [5]}}])
    assert rules[0] == Rule("flood", RuleKind.ICMP_RATE, window=2, threshold=5)
    assert rules[1].functions == frozenset({5})
    with pytest.raises(ValueError):
        rules_from_list([{"id": "a", "kind": "IcmpRate"}, {"id": "a", "kind": "IcmpRate"}])
    with pytest.raises(ValueError):
        Rule("bad", RuleKind.ICMP_RATE, window=0)


def test_histogram_buckets():
    assert alert_histogram([], 60) == {}
    alerts = [AlertRecord(t, "op", "Dnp3Function", "", "", "") for t in (1.0, 2.0, 61.0)]
    assert alert_histogram(alerts, 60) == {("Dnp3Function", 0): 2, ("Dnp3Function", 1): 1}


def test_alert_csv_round_trip(tmp_path):
    alerts = [AlertRecord(0.1 + 0.2, "op", "Dnp3Function", "a:1", "b:2", "x, y")]
    write_alerts_csv(alerts, tmp_path / "alerts.csv")
    assert read_alerts_csv(tmp_path / "alerts.csv") == alerts
