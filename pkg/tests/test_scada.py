import pytest
import yaml

from netsim_helpers import drop_where
from scadasim import grid
from scadasim.dnp3 import AppFragment, CommandStatus, ControlCode, FunctionCode, PointGroup, PointKind
from scadasim.grid import Branch, Bus, Generator, GridModel, Load
from scadasim.harness.config import data_path
from scadasim.netsim import build_network, default_topology
from scadasim.scada import (AutomationPolicy, Command, GridProcess, Master, MasterConfig, Outstation, PointMap,
                            ScadaError, auto_point_maps, automation_evaluate, grid_limits, grid_setpoints)

BO = PointKind.BINARY_OUTPUT_COMMAND
AO = PointKind.ANALOG_OUTPUT_COMMAND


def small_model():
    return GridModel([Bus("A", True), Bus("B")],
                     [Branch(f"L{k}", "A", "B", 0.1, 1000.0) for k in range(6)],
                     [Generator("G1", "A", 0, 0, 5000, 10), Generator("G2", "B", 100, 100, 1000, 50)],
                     [Load("D", "B", 300.0)])


def small_map():
    return PointMap(binary_inputs={0: "L0", 1: "L5"},
                    analog_inputs={0: ("output", "G2"), 1: ("flow", "L5")},
                    binary_outputs={k: f"L{k}" for k in range(6)},
                    analog_outputs={0: "G2"})


def rig(point_map=None, model=None, **master_kw):
    net = build_network(default_topology(1, 1, attacker=False), seed=4)
    model = model or small_model()
    proc = GridProcess(net, model, step_dt=1.0)
    pm = point_map or small_map()
    os_ = Outstation(net, net.node("outstation1"), proc, pm, address=10)
    cfg = MasterConfig(**{"poll_interval": 30.0, **master_kw})
    master = Master(net, net.node("master1"), cfg, pm, setpoints=grid_setpoints(model))
    return net, proc, os_, master


def command(fn, kind, idx, value):
    return AppFragment(fn, [PointGroup(kind, [(idx, (value, 0))])], seq=3)


def statuses(resp):
    return [st for grp in resp.objects for _i, (_v, st) in grp.points]


# -- outstation --------------------------------------------------------------------------------

def test_direct_operate_trip_opens_branch():
    net, proc, os_, _m = rig()
    resp = os_.serve(command(FunctionCode.DIRECT_OPERATE, BO, 5, ControlCode.TRIP))
    assert statuses(resp) == [CommandStatus.SUCCESS] and resp.seq == 3
    assert proc.model.branch("L5").breaker_closed is False
    assert proc.state.flows["L5"] == 0.0


def test_operate_without_select_is_rejected():
    net, proc, os_, _m = rig()
    resp = os_.serve(command(FunctionCode.OPERATE, BO, 5, ControlCode.TRIP))
    assert statuses(resp) == [CommandStatus.NO_SELECT]
    assert proc.model.branch("L5").breaker_closed is True


def test_select_then_operate_setpoint():
    net, proc, os_, _m = rig()
    sel = os_.serve(command(FunctionCode.SELECT, AO, 0, 1000.0))
    assert statuses(sel) == [CommandStatus.SUCCESS]
    assert proc.model.generator("G2").setpoint == 100.0
    op = os_.serve(command(FunctionCode.OPERATE, AO, 0, 1000.0))
    assert statuses(op) == [CommandStatus.SUCCESS]
    assert proc.model.generator("G2").setpoint == 1000.0


def test_operate_must_match_selection():
    net, proc, os_, _m = rig()
    os_.serve(command(FunctionCode.SELECT, AO, 0, 1000.0))
    op = os_.serve(command(FunctionCode.OPERATE, AO, 0, 0.0))
    assert statuses(op) == [CommandStatus.NO_SELECT]
    assert proc.model.generator("G2").setpoint == 100.0


def test_read_reports_grid_truth():
    net, proc, os_, _m = rig()
    resp = os_.serve(AppFragment(FunctionCode.READ, [PointGroup(PointKind.BINARY_INPUT, []),
                                                     PointGroup(PointKind.ANALOG_INPUT, [])]))
    bi, ai = resp.objects
    assert bi.points == [(0, True), (1, True)]
    assert ai.points == [(0, proc.state.outputs["G2"]), (1, proc.state.flows["L5"])]


def test_close_on_open_breaker():
    net, proc, os_, _m = rig()
    os_.serve(command(FunctionCode.DIRECT_OPERATE, BO, 2, ControlCode.TRIP))
    os_.serve(command(FunctionCode.DIRECT_OPERATE, BO, 2, ControlCode.CLOSE))
    assert proc.model.branch("L2").breaker_closed is True


def test_unmapped_index_is_echoed_as_error():
    net, proc, os_, _m = rig()
    before = grid.model_to_dict(proc.model)
    resp = os_.serve(command(FunctionCode.DIRECT_OPERATE, BO, 999, ControlCode.TRIP))
    assert statuses(resp) == [CommandStatus.NOT_SUPPORTED]
    assert grid.model_to_dict(proc.model) == before


def test_point_map_validation():
    with pytest.raises(ScadaError):
        rig(point_map=PointMap(binary_outputs={0: "nope"}))
    pm = small_map()
    assert PointMap.from_rows(pm.to_rows()) == pm


def test_auto_point_maps_cover_every_device():
    model = grid.model_from_dict(yaml.safe_load(data_path("desk_grid.yaml").read_text()))
    maps = auto_point_maps(model, 3)
    bos = [b for pm in maps for b in pm.binary_outputs.values()]
    aos = [g for pm in maps for g in pm.analog_outputs.values()]
    assert sorted(bos) == sorted(b.id for b in model.branches)
    assert sorted(aos) == sorted(g.id for g in model.generators if g.id != "G1")


# -- master ---------------------------------------------------------------------------------------

def test_polls_follow_interval():
    net, _p, _o, master = rig(poll_interval=30.0)
    net.advance(95.0)
    reads = [e["t"] for e in net.events if e["type"] == "dnp3_tx" and e["function"] == "READ"]
    assert reads == pytest.approx([0.0, 30.0, 60.0, 90.0], abs=0.01)


def test_snapshot_holds_every_mapped_point():
    pm = PointMap(binary_inputs={0: "L0"}, analog_inputs={0: ("output", "G2"), 1: ("flow", "L1")})
    net, proc, _o, master = rig(point_map=pm)
    net.advance(1.0)
    assert master.snapshot == {"status:L0": True, "output:G2": proc.state.outputs["G2"],
                               "flow:L1": proc.state.flows["L1"]}


def test_lost_response_is_recovered_by_retransmission():
    net, proc, _o, master = rig()
    seen = []
    drop_where(net, "sub_lan", lambda p: p.src[1] == 20000 and len(p.payload) > 20 and not seen
               and not seen.append(p))
    net.advance(2.0)
    assert len(seen) == 1
    assert master.snapshots == 1 and master.snapshot["output:G2"] == proc.state.outputs["G2"]
    assert net.metrics.retransmissions == 1


def test_master_select_operate_path_reaches_grid():
    net, proc, _o, master = rig(command_mode="select_operate")
    net.advance(1.0)
    master.operate_analog([(0, 1000.0)])
    net.advance(2.0)
    assert proc.model.generator("G2").setpoint == 1000.0
    fns = [e["function"] for e in net.events if e["type"] == "dnp3_tx"]
    assert fns[-2:] == ["SELECT", "OPERATE"]
    assert master.results[-1]["success"] is True


def test_app_timeout_then_reconnect():
    net, proc, _o, master = rig(app_timeout=0.5)
    net.advance(1.0)
    lost = drop_where(net, "sub_lan", lambda p: p.dst[1] == 20000 and p.payload)
    master.operate_binary([(0, ControlCode.TRIP)])
    net.advance(5.0)
    assert master.results[-1]["error"] in ("timeout", "connection_failed")
    assert lost and master.reconnects >= 1
    ports = net.flows.source_ports()
    assert len(ports) >= 2 and len(set(ports)) == len(ports)


# -- automation -------------------------------------------------------------------------------------

POLICY = AutomationPolicy(gen_low_threshold=100.0, gen_restore_setpoint=1000.0, trip_on_overload=True)


def test_low_generator_reading_restores_setpoint():
    cmds = automation_evaluate(POLICY, {"output:G2": 20.0}, small_map(), {})
    assert cmds == [Command("setpoint", 0, 1000.0)]


def test_flow_over_limit_trips():
    pm = small_map()
    cmds = automation_evaluate(POLICY, {"flow:L5": 3000.0, "status:L5": True}, pm, {"L5": 1500.0})
    assert cmds == [Command("trip", 5)]
    assert automation_evaluate(POLICY, {"flow:L5": 3000.0, "status:L5": False}, pm, {"L5": 1500.0}) == []
    no_trip = AutomationPolicy(trip_on_overload=False)
    assert automation_evaluate(no_trip, {"flow:L5": 3000.0}, pm, {"L5": 1500.0}) == []


def test_nominal_readings_yield_nothing():
    snap = {"output:G2": 500.0, "flow:L5": 10.0, "status:L5": True}
    assert automation_evaluate(POLICY, snap, small_map(), {"L5": 1000.0}) == []
    with pytest.raises(ValueError):
        automation_evaluate(POLICY, {}, small_map(), {})


def test_automation_closes_the_loop():
    net = build_network(default_topology(1, 1, attacker=False), seed=4)
    model = small_model()
    model.generator("G2").output = 20.0
    model.generator("G2").setpoint = 20.0
    proc = GridProcess(net, model, step_dt=1.0)
    pm = small_map()
    Outstation(net, net.node("outstation1"), proc, pm, address=10)
    Master(net, net.node("master1"), MasterConfig(poll_interval=5.0), pm, policy=POLICY,
           limits=grid_limits(model), setpoints=grid_setpoints(model))
    net.advance(2.0)
    assert proc.model.generator("G2").setpoint == 1000.0
