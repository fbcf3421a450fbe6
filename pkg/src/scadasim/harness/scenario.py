"""Build and run scenarios: grid, network, DNP3 endpoints, adversary and IDS."""
from __future__ import annotations

import copy
import csv
import json
import logging
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .. import attack as atk
from ..grid import model_from_dict
from ..ids import Ids, alert_histogram, rules_from_list, write_alerts_csv
from ..netsim import build_network, default_topology
from ..scada import (AutomationPolicy, GridProcess, Master, MasterConfig, Outstation, PointMap,
                     auto_point_maps, grid_limits, grid_setpoints)
from .config import Scenario, resolve

log = logging.getLogger(__name__)

METRIC_FIELDS = [
    "window_start", "window_end", "window_start_unscaled", "total_payload_bytes", "retransmitted_bytes",
    "throughput", "goodput", "retransmissions", "rtt_samples", "mean_rtt", "active_flows",
]


class ScenarioError(RuntimeError):
    """A module error raised while running a scenario, tagged with the scenario id and seed."""


@dataclass
class RunReport:
    scenario: str
    seed: int
    duration: float
    """virtual seconds simulated"""
    time_compression: float
    time_to_overload: float | None
    """unscaled seconds from attack start (run start without an attack) to the first overload"""
    time_to_overload_virtual: float | None
    overloaded_branches: list
    windows: list
    retransmission_count: int
    flow_count_series: list
    attempts: dict
    alert_histogram: dict
    alert_counts: dict
    mitm: dict = field(default_factory=dict)
    campaign: dict = field(default_factory=dict)
    dos: dict = field(default_factory=dict)
    drops: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    report: RunReport
    sim: "Simulation"
    out_dir: Path | None = None


class Simulation:
    """All live objects of one scenario run."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        cfg = scenario.config
        self.cfg = cfg
        self.c = cfg["time_compression"]
        self.model = model_from_dict(cfg["grid"])
        mcfg = cfg["masters"]
        n = mcfg["count"]
        net_cfg = cfg["network"]
        topology = cfg["topology"] or default_topology(n, n, attacker=True, link=net_cfg["link"])
        self.net = build_network(topology, seed=scenario.seed, log_packets=net_cfg["log_packets"],
                                 rto=net_cfg["rto"], max_retries=net_cfg["max_retries"],
                                 echo_delay=net_cfg["echo_delay"])
        net = self.net
        self.grid = GridProcess(net, self.model, step_dt=cfg["grid_step"] / self.c, time_scale=self.c)

        out_nodes = net.role("outstation")
        if not out_nodes:
            raise ScenarioError("topology has no outstation")
        if cfg["point_maps"] is None:
            maps = auto_point_maps(self.model, len(out_nodes))
            cfg["point_maps"] = [pm.to_rows() for pm in maps]
        else:
            maps = [PointMap.from_rows(rows) for rows in cfg["point_maps"]]
        if len(maps) != len(out_nodes):
            raise ScenarioError(f"{len(maps)} point maps for {len(out_nodes)} outstations")
        self.point_maps = maps
        self.outstations = [
            Outstation(net, node, self.grid, pm, address=10 + i,
                       select_timeout=mcfg["select_timeout"], unsolicited=mcfg["unsolicited"])
            for i, (node, pm) in enumerate(zip(out_nodes, maps))
        ]

        auto = cfg["automation"]
        policy = None
        if auto["enabled"]:
            policy = AutomationPolicy(auto["gen_low_threshold"], auto["gen_restore_setpoint"],
                                      auto["trip_on_overload"], auto["reaction_delay"] / self.c)
        poll = mcfg["poll_interval"] / self.c
        cmd = mcfg["command_interval"] / self.c if mcfg["command_interval"] else None
        self.masters = []
        for i, node in enumerate(net.role("master")):
            target = i % len(self.outstations)
            phase_rng = net.rng(f"phase:{node.name}")
            poll_phase = self._phase(mcfg["poll_phase"], poll, phase_rng)
            cmd_phase = self._phase(mcfg["command_phase"], cmd or poll, phase_rng)
            mc = MasterConfig(poll, mcfg["command_mode"], self.outstations[target].node.ip,
                              self.outstations[target].address, master_address=1 + i,
                              poll_phase=poll_phase, command_interval=cmd, command_phase=cmd_phase,
                              app_timeout=mcfg["app_timeout"])
            self.masters.append(Master(net, node, mc, maps[target], grid_setpoints(self.model), policy,
                                       grid_limits(self.model)))

        self.alerts: list = []
        rules = rules_from_list(cfg["ids"]["rules"])
        self.ids = [Ids.on_router(net, net.node(tap), rules, sink=self.alerts) for tap in cfg["ids"]["taps"]]

        self.proxy = None
        self.attack_start = None
        att = cfg["attack"]
        if att is not None:
            self._build_attack(att)
        self.flood = None
        if cfg["dos"] is not None:
            self._build_dos(cfg["dos"])

    def _phase(self, value, period: float, rng) -> float:
        if value == "random":
            return rng.uniform(0.0, period)
        return value / self.c

    def _attacker(self):
        nodes = self.net.role("attacker")
        if not nodes:
            raise ScenarioError("topology has no attacker node")
        return nodes[0]

    def _build_attack(self, att: dict) -> None:
        policy = atk.AttackPolicy(
            att["use_case"], tuple(att["breakers"]), tuple(att["generators"]), tuple(att["flow_branches"]),
            p=att["p"], q=att["q"], r=att["r"],
            fci_processing_delay=att["fci_processing_delay"], fdi_processing_delay=att["fdi_processing_delay"],
            service_rate=att["service_rate"], recompute_crc=att["recompute_crc"],
            setpoint_value=att["setpoint_value"], false_output=att["false_output"],
            false_flow=att["false_flow"], trip_below=att["trip_below"],
            reaction_tolerance=att["reaction_tolerance"])
        node = self._attacker()
        gateway = _gateway(node)
        victims = {o.node.ip: pm for o, pm in zip(self.outstations, self.point_maps)}
        if att["victims"] != "all":
            victims = {ip: pm for ip, pm in victims.items() if ip in att["victims"]}
        self.proxy = atk.MitmProxy(self.net, node, policy, gateway, victims)
        self.attack_start = att["start"] / self.c
        self.net.at(self.attack_start, self.proxy.engage)

    def _build_dos(self, dos: dict) -> None:
        node = self._attacker()
        target = self.net.role("sub_router" if dos["target"] == "sub" else "ucc_router")[0]
        # aim at the address the attacker reaches first on the way in
        dst = target.interfaces[0].ip
        start = dos["start"] / self.c
        duration = (self.cfg["duration"] - dos["start"] if dos["duration"] is None else dos["duration"]) / self.c
        self.flood = atk.dos_run(self.net, node, dst, int(dos["payload_size"]), dos["interval"], duration, start,
                                 jitter=dos["jitter"])
        if self.attack_start is None:
            self.attack_start = start

    # -- running --------------------------------------------------------------------
    def run(self) -> RunReport:
        end = self.cfg["duration"] / self.c
        self.net.advance(end)
        return self.report(end)

    def windows(self, end: float) -> list[dict]:
        width = self.cfg["metrics_window"] / self.c
        rows = []
        start = 0.0
        while start < end - 1e-12:
            stop = min(start + width, end)
            res = self.net.metrics.measure(start, stop, None)
            rtts = [r for _t, r in res.rtt_series]
            rows.append({
                "window_start": start, "window_end": stop, "window_start_unscaled": start * self.c,
                "total_payload_bytes": res.sample.total_payload_bytes,
                "retransmitted_bytes": res.sample.retransmitted_bytes,
                "throughput": res.sample.throughput, "goodput": res.sample.goodput,
                "retransmissions": res.retransmission_count, "rtt_samples": len(rtts),
                "mean_rtt": statistics.fmean(rtts) if rtts else None,
                "active_flows": _active_at(self.net.flows.series, stop),
            })
            start = stop
        return rows

    def report(self, end: float) -> RunReport:
        onset = self.grid.overload_onset
        ref = self.attack_start or 0.0
        ttov = None if onset is None else onset - ref
        alerts_by_kind: dict[str, int] = {}
        for a in self.alerts:
            alerts_by_kind[a.kind] = alerts_by_kind.get(a.kind, 0) + 1
        hist: dict[str, dict[str, int]] = {}
        for (kind, bucket), count in alert_histogram(self.alerts, self.cfg["metrics_window"] / self.c).items():
            hist.setdefault(kind, {})[str(bucket)] = count
        attempts, mitm, campaign = {}, {}, {}
        if self.proxy is not None:
            attempts = self.proxy.counts()
            span_end = end
            lam = self.proxy.arrival_rate(span_end)
            mitm = {
                "arrivals": self.proxy.arrivals, "misses": self.proxy.misses,
                "miss_rate": self.proxy.miss_rate(), "arrival_rate": lam,
                "service_rate": self.proxy.policy.service_rate,
                "traffic_intensity": atk.traffic_intensity(lam, self.proxy.policy.service_rate),
                "engaged_at": self.proxy.engaged_at, "fdi_done": self.proxy.fdi_done,
                "reacting": self.proxy.reacting,
            }
            campaign = self._campaign()
        dos = {}
        if self.flood is not None:
            dos = {"target": self.cfg["dos"]["target"], "payload_size": self.cfg["dos"]["payload_size"],
                   "interval": self.cfg["dos"]["interval"], "sent": self.flood.sent}
        windows = self.windows(end)
        return RunReport(
            scenario=self.scenario.id, seed=self.scenario.seed, duration=end, time_compression=self.c,
            time_to_overload=None if ttov is None else ttov * self.c,
            time_to_overload_virtual=ttov,
            overloaded_branches=list(self.grid.ever_overloaded),
            windows=windows,
            retransmission_count=self.net.metrics.retransmissions,
            flow_count_series=[[t / 1e9, n] for t, n in self.net.flows.series],
            attempts=attempts,
            alert_histogram=hist,
            alert_counts=dict(sorted(alerts_by_kind.items())),
            mitm=mitm, campaign=campaign, dos=dos,
            drops=dict(sorted(self.net.drop_reasons.items())),
            config=copy.deepcopy(self.cfg),
        )

    def _campaign(self) -> dict:
        att = self.cfg["attack"]
        camp = att["campaign"]
        uc = att["use_case"]
        probs = {k: (att[k] if att[k] is not None else 1.0) for k in ("p", "q", "r")}
        stats = atk.campaign_statistics(uc, camp["m"], camp["n"], camp["o"], probs["p"], probs["q"], probs["r"],
                                        trials=self.cfg["campaign_trials"], seed=self.scenario.seed)
        stats.update(use_case=uc, m=camp["m"], n=camp["n"], o=camp["o"], **probs)
        return stats


def _gateway(node) -> str:
    for prefix, via in node.routes:
        if prefix.prefixlen == 0:
            return via
    raise ScenarioError(f"{node.name} has no default route")


def _active_at(series: list, t: float) -> int:
    n = 0
    for t_ns, count in series:
        if t_ns / 1e9 > t:
            break
        n = count
    return n


# -- output -------------------------------------------------------------------------------

def _jsonable(obj):
    if hasattr(obj, "value"):
        return obj.value
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    if isinstance(obj, bytes):
        return obj.hex()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, default=_jsonable, separators=(",", ":"))


def write_outputs(result: RunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = result.sim
    with open(out / "events.jsonl", "w") as fh:
        for rec in sim.net.events:
            fh.write(dumps(rec))
            fh.write("\n")
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        writer.writeheader()
        for row in result.report.windows:
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})
    write_alerts_csv(sim.alerts, out / "alerts.csv")
    with open(out / "report.json", "w") as fh:
        json.dump(result.report.as_dict(), fh, indent=2, default=_jsonable)
        fh.write("\n")
    with open(out / "report.txt", "w") as fh:
        fh.write(render_run(result.report))
    result.out_dir = out


def render_run(rep: RunReport) -> str:
    lines = [f"scenario {rep.scenario}  seed {rep.seed}",
             f"simulated {rep.duration:g} s virtual = {rep.duration * rep.time_compression:g} s unscaled "
             f"(compression {rep.time_compression:g}x)"]
    if rep.time_to_overload is None:
        lines.append("time to overload: none")
    else:
        lines.append(f"time to overload: {rep.time_to_overload:.1f} s unscaled "
                     f"({rep.time_to_overload_virtual:.3f} s virtual)")
        lines.append("overloaded branches: " + ", ".join(rep.overloaded_branches))
    lines.append(f"retransmissions: {rep.retransmission_count}")
    if rep.attempts:
        lines.append("mutation attempts / successes / misses:")
        for cls in ("BO", "AO", "RR"):
            c = rep.attempts[cls]
            lines.append(f"  {cls}: {c['attempts']} / {c['successes']} / {c['misses']}")
        lines.append(f"adversary miss rate {rep.mitm['miss_rate']:.4f}, "
                     f"traffic intensity {rep.mitm['traffic_intensity']:.4f}")
    if rep.campaign:
        c = rep.campaign
        lines.append(f"campaign attempts: empirical mean {c['mean_attempts']:.3f} over {c['trials']} trials, "
                     f"expected {c['expected_attempts']:.3f}")
    if rep.alert_counts:
        lines.append("alerts: " + ", ".join(f"{k} {v}" for k, v in rep.alert_counts.items()))
    else:
        lines.append("alerts: none")
    lines.append("window  start_unscaled  throughput  goodput  mean_rtt_ms  flows")
    for i, w in enumerate(rep.windows):
        rtt = "-" if w["mean_rtt"] is None else f"{w['mean_rtt'] * 1e3:.3f}"
        lines.append(f"{i:6d}  {w['window_start_unscaled']:14.1f}  {w['throughput']:10.1f}  "
                     f"{w['goodput']:7.1f}  {rtt:>11}  {w['active_flows']:5d}")
    return "\n".join(lines) + "\n"


def run_scenario(scenario: Scenario, out_dir=None) -> RunResult:
    """Run one scenario to its duration; write logs and the report when ``out_dir`` is given."""
    try:
        sim = Simulation(scenario)
        report = sim.run()
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(f"{scenario.id} (seed {scenario.seed}): {type(exc).__name__}: {exc}") from exc
    result = RunResult(report, sim)
    if out_dir is not None:
        write_outputs(result, out_dir)
    log.info("%s seed %d finished: time to overload %s", scenario.id, scenario.seed, report.time_to_overload)
    return result


def rerun_from_report(report: dict) -> Scenario:
    """The scenario embedded in a report, ready to run again."""
    return resolve(report["config"])


# -- sweeps ---------------------------------------------------------------------------------

@dataclass
class SweepResult:
    kind: str
    trials: list
    """one row per (target, value, seed)"""
    summary: list
    """one row per (target, value), averaged over seeds"""


SWEEP_FIELDS = ["target", "value", "seed", "payload_size", "interval", "mean_rtt", "rtt_samples",
                "throughput", "goodput", "gap", "retransmissions", "flood_sent"]
SUMMARY_FIELDS = ["target", "value", "seeds", "mean_rtt", "throughput", "goodput", "gap", "retransmissions"]


def trial_scenario(scenario: Scenario, target: str, value: float, seed: int) -> Scenario:
    cfg = copy.deepcopy(scenario.config)
    sw = cfg["sweep"]
    if sw["kind"] == "payload":
        payload, interval = value, sw["fixed_interval"]
    else:
        payload, interval = sw["fixed_payload"], value
    doc = {k: v for k, v in cfg.items() if k != "sweep"}
    doc["id"] = "BASELINE"
    doc["seed"] = seed
    doc["dos"] = {"target": target, "payload_size": int(payload), "interval": interval * sw["interval_unit"],
                  "start": sw["flood_start"], "duration": None, "jitter": sw["jitter"]}
    return resolve(doc)


def run_sweep(scenario: Scenario, out_dir=None, targets: list | None = None) -> SweepResult:
    """Every (target, value, seed) trial of a DoS sweep plus per-point averages.

    Trials at different sweep points share seeds, so the comparison across
    points is not blurred by independent randomness.
    """
    sw = scenario.config["sweep"]
    if sw is None:
        raise ValueError(f"{scenario.id} is not a sweep scenario")
    targets = targets or sw["targets"]
    c = scenario.config["time_compression"]
    start = sw["flood_start"] / c
    trials = []
    for target in targets:
        for value in sw["values"]:
            for k in range(sw["seeds"]):
                trial = trial_scenario(scenario, target, value, scenario.seed + k)
                res = run_scenario(trial)
                sim = res.sim
                end = trial.config["duration"] / c
                m = sim.net.metrics.measure(start, end, sim.net.flows)
                rtts = [r for _t, r in m.rtt_series]
                trials.append({
                    "target": target, "value": value, "seed": trial.seed,
                    "payload_size": trial.config["dos"]["payload_size"],
                    "interval": trial.config["dos"]["interval"],
                    "mean_rtt": statistics.fmean(rtts) if rtts else None, "rtt_samples": len(rtts),
                    "throughput": m.sample.throughput, "goodput": m.sample.goodput,
                    "gap": m.sample.throughput - m.sample.goodput,
                    "retransmissions": m.retransmission_count,
                    "flood_sent": sim.flood.sent if sim.flood else 0,
                })
    summary = []
    for target in targets:
        for value in sw["values"]:
            rows = [t for t in trials if t["target"] == target and t["value"] == value]
            rtts = [t["mean_rtt"] for t in rows if t["mean_rtt"] is not None]
            summary.append({
                "target": target, "value": value, "seeds": len(rows),
                "mean_rtt": statistics.fmean(rtts) if rtts else None,
                "throughput": statistics.fmean(t["throughput"] for t in rows),
                "goodput": statistics.fmean(t["goodput"] for t in rows),
                "gap": statistics.fmean(t["gap"] for t in rows),
                "retransmissions": statistics.fmean(t["retransmissions"] for t in rows),
            })
    result = SweepResult(sw["kind"], trials, summary)
    if out_dir is not None:
        write_sweep(result, scenario, out_dir)
    return result


def write_sweep(result: SweepResult, scenario: Scenario, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows, fields in (("trials.csv", result.trials, SWEEP_FIELDS),
                               ("summary.csv", result.summary, SUMMARY_FIELDS)):
        with open(out / name, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float)
                                     else row[k]) for k in fields})
    doc = {"scenario": scenario.id, "seed": scenario.seed, "kind": result.kind,
           "trials": result.trials, "summary": result.summary, "config": scenario.config}
    with open(out / "report.json", "w") as fh:
        json.dump(doc, fh, indent=2, default=_jsonable)
        fh.write("\n")
    with open(out / "report.txt", "w") as fh:
        fh.write(render_sweep(result))


def render_sweep(result: SweepResult) -> str:
    unit = "payload_B" if result.kind == "payload" else "interval"
    lines = [f"DoS {result.kind} sweep",
             f"target  {unit:>10}  mean_rtt_ms  throughput  goodput  gap"]
    for row in result.summary:
        rtt = "-" if row["mean_rtt"] is None else f"{row['mean_rtt'] * 1e3:.3f}"
        lines.append(f"{row['target']:6}  {row['value']:>10g}  {rtt:>11}  {row['throughput']:10.1f}  "
                     f"{row['goodput']:7.1f}  {row['gap']:.1f}")
    return "\n".join(lines) + "\n"
