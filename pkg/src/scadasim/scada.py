"""DNP3 masters, outstations, the grid process they share, and operator automation."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import dnp3
from .dnp3 import (CTRL_FROM_MASTER, CTRL_FROM_OUTSTATION, DNP3_PORT, AppFragment, CommandStatus,
                   ControlCode, FunctionCode, PointGroup, PointKind)
from .grid import ControlAction, GridModel, UnknownDevice, apply_control, dc_power_flow, overloads, step


class ScadaError(Exception):
    pass


class SelectOperateMismatch(ScadaError):
    pass


class CommandMode(str, enum.Enum):
    DIRECT = "direct"
    SELECT_OPERATE = "select_operate"


# -- point maps ----------------------------------------------------------------

@dataclass
class PointMap:
    """Index assignments for one outstation.

    ``analog_inputs`` values are ``(quantity, device)`` with quantity
    ``output`` (generator MW) or ``flow`` (branch MW).
    """

    binary_inputs: dict[int, str] = field(default_factory=dict)
    analog_inputs: dict[int, tuple[str, str]] = field(default_factory=dict)
    binary_outputs: dict[int, str] = field(default_factory=dict)
    analog_outputs: dict[int, str] = field(default_factory=dict)

    def validate(self, model: GridModel) -> None:
        branches = {b.id for b in model.branches}
        gens = {g.id for g in model.generators}
        loads = {ld.id for ld in model.loads}
        for idx, dev in self.binary_inputs.items():
            if dev not in branches | gens | loads:
                raise ScadaError(f"binary input {idx} maps unknown device {dev}")
        for idx, (qty, dev) in self.analog_inputs.items():
            pool = gens if qty == "output" else branches if qty == "flow" else None
            if pool is None or dev not in pool:
                raise ScadaError(f"analog input {idx} maps unknown source {qty}:{dev}")
        for idx, dev in self.binary_outputs.items():
            if dev not in branches:
                raise ScadaError(f"binary output {idx} maps unknown breaker {dev}")
        for idx, dev in self.analog_outputs.items():
            if dev not in gens:
                raise ScadaError(f"analog output {idx} maps unknown generator {dev}")

    def ai_index(self, qty: str, device: str) -> int | None:
        for idx, src in self.analog_inputs.items():
            if src == (qty, device):
                return idx
        return None

    def bo_index(self, branch: str) -> int | None:
        return next((i for i, b in self.binary_outputs.items() if b == branch), None)

    def ao_index(self, gen: str) -> int | None:
        return next((i for i, g in self.analog_outputs.items() if g == gen), None)

    def bi_index(self, device: str) -> int | None:
        return next((i for i, d in self.binary_inputs.items() if d == device), None)

    def to_rows(self) -> list[list]:
        rows = [["bi", i, d] for i, d in sorted(self.binary_inputs.items())]
        rows += [["ai", i, f"{q}:{d}"] for i, (q, d) in sorted(self.analog_inputs.items())]
        rows += [["bo", i, d] for i, d in sorted(self.binary_outputs.items())]
        rows += [["ao", i, d] for i, d in sorted(self.analog_outputs.items())]
        return rows

    @classmethod
    def from_rows(cls, rows) -> "PointMap":
        pm = cls()
        tables = {"bi": pm.binary_inputs, "ai": pm.analog_inputs,
                  "bo": pm.binary_outputs, "ao": pm.analog_outputs}
        for row in rows:
            group, idx, dev = row
            table = tables.get(group)
            if table is None:
                raise ScadaError(f"unknown point group {group!r}")
            idx = int(idx)
            if idx < 0 or idx > 0xFFFF:
                raise ScadaError(f"point index {idx} out of range")
            if idx in table:
                raise ScadaError(f"duplicate {group} index {idx}")
            if group == "ai":
                qty, _, name = str(dev).partition(":")
                table[idx] = (qty, name)
            else:
                table[idx] = str(dev)
        return pm


def auto_point_maps(model: GridModel, n_outstations: int) -> list[PointMap]:
    """Partition buses round-robin over outstations and number each device group densely.

    A branch belongs to the outstation of its from-bus.  The slack generator
    is reported but never commanded.
    """
    owner = {bus.id: i % n_outstations for i, bus in enumerate(model.buses)}
    maps = [PointMap() for _ in range(n_outstations)]
    slack_gen = model.slack_generator()
    for br in model.branches:
        pm = maps[owner[br.from_bus]]
        pm.binary_inputs[len(pm.binary_inputs)] = br.id
        pm.binary_outputs[len(pm.binary_outputs)] = br.id
    for gen in model.generators:
        pm = maps[owner[gen.bus]]
        pm.binary_inputs[len(pm.binary_inputs)] = gen.id
        if gen is not slack_gen:
            pm.analog_outputs[len(pm.analog_outputs)] = gen.id
    for ld in model.loads:
        pm = maps[owner[ld.bus]]
        pm.binary_inputs[len(pm.binary_inputs)] = ld.id
    for gen in model.generators:
        pm = maps[owner[gen.bus]]
        pm.analog_inputs[len(pm.analog_inputs)] = ("output", gen.id)
    for br in model.branches:
        pm = maps[owner[br.from_bus]]
        pm.analog_inputs[len(pm.analog_inputs)] = ("flow", br.id)
    return maps


# -- the grid as a running process ---------------------------------------------------

class GridProcess:
    """Steps the grid model on a fixed virtual-time tick.

    ``time_scale`` converts virtual seconds into grid seconds, so ramp
    rates stay in MW per unscaled second under time compression.
    """

    def __init__(self, net, model: GridModel, step_dt: float = 0.1, time_scale: float = 1.0,
                 log_flows: bool = False):
        self.net = net
        self.model = model
        self.step_dt = step_dt
        self.time_scale = time_scale
        self.log_flows = log_flows
        self.state = dc_power_flow(model)
        self.overload_onset: float | None = None
        self.overloaded: list[str] = []
        self.ever_overloaded: list[str] = []
        self.actions: list[tuple[float, ControlAction]] = []
        self._check()
        net.after(step_dt, self._tick)

    def _tick(self) -> None:
        self.state = step(self.model, self.step_dt * self.time_scale)
        self._check()
        if self.log_flows:
            self.net.log("grid", flows={k: round(v, 6) for k, v in self.state.flows.items()},
                         outputs={k: round(v, 6) for k, v in self.state.outputs.items()})
        self.net.after(self.step_dt, self._tick)

    def apply(self, *actions: ControlAction) -> None:
        """Apply actions together; the grid is re-solved once, after the last."""
        for action in actions:
            apply_control(self.model, action)
            self.actions.append((self.net.now, action))
            self.net.log("grid_action", kind=action.kind, target=action.target, value=action.value)
        self.state = dc_power_flow(self.model)
        self._check()

    def _check(self) -> None:
        report = overloads(self.model, self.state)
        names = report.branches
        if names != self.overloaded:
            self.overloaded = names
            if names:
                for b in names:
                    if b not in self.ever_overloaded:
                        self.ever_overloaded.append(b)
                if self.overload_onset is None:
                    self.overload_onset = self.net.now
                self.net.log("overload", branches=[
                    {"branch": e.branch, "flow": e.flow, "limit": e.limit, "loading": e.loading}
                    for e in report.entries])
            else:
                self.net.log("overload_clear")

    # measurement sources
    def read_binary(self, device: str) -> bool:
        m = self.model
        for br in m.branches:
            if br.id == device:
                return br.breaker_closed
        for gen in m.generators:
            if gen.id == device:
                return gen.in_service
        return m.load(device).in_service

    def read_analog(self, qty: str, device: str) -> float:
        if qty == "output":
            return float(self.state.outputs.get(device, 0.0))
        return float(self.state.flows.get(device, 0.0))


# -- outstation ------------------------------------------------------------------

class Outstation:
    def __init__(self, net, node, grid: GridProcess, point_map: PointMap, address: int,
                 port: int = DNP3_PORT, select_timeout: float = 10.0, unsolicited: bool = False):
        self.net = net
        self.node = node
        self.grid = grid
        self.points = point_map
        self.address = address
        self.select_timeout = select_timeout
        self.unsolicited = unsolicited
        self.selected: tuple | None = None
        self.conn = None
        self.master_address = 1
        self._tseq = 0
        self._uns_seq = 0
        self.decode_errors = 0
        point_map.validate(grid.model)
        net.tcp(node).listen(port, self._accept)

    def _accept(self, conn) -> None:
        self.conn = conn
        conn.on_data = self._on_data

    def _on_data(self, conn, data: bytes) -> None:
        try:
            msg = dnp3.decode_message(data)
        except dnp3.Dnp3Error as exc:
            self.decode_errors += 1
            self.net.log("os_reject", node=self.node.name, error=type(exc).__name__,
                         detail=str(exc))
            return
        if msg.frame.header.destination != self.address:
            self.net.log("os_reject", node=self.node.name, error="WrongAddress",
                         detail=str(msg.frame.header.destination))
            return
        frag = msg.fragment
        self.master_address = msg.frame.header.source
        self.net.log("os_rx", node=self.node.name, tcp_seq=conn.last_rx_seq,
                     function=frag.function.name, app_seq=frag.seq, points=_points_repr(frag))
        response = self.serve(frag)
        if response is not None:
            self._send(conn, response, msg.frame.header.source)

    def _send(self, conn, fragment: AppFragment, master_address: int) -> None:
        payload = dnp3.encode_message(fragment, CTRL_FROM_OUTSTATION, master_address, self.address,
                                      self._tseq)
        self._tseq = (self._tseq + 1) & 0x3F
        conn.send(payload)

    def serve(self, frag: AppFragment) -> AppFragment | None:
        """Handle one request fragment; returns the response fragment."""
        fn = frag.function
        if fn in (FunctionCode.READ, FunctionCode.READ2):
            return self._read(frag)
        if fn in (FunctionCode.DIRECT_OPERATE, FunctionCode.SELECT, FunctionCode.OPERATE):
            return self._command(frag)
        if fn == FunctionCode.CONFIRM:
            return None
        return AppFragment(FunctionCode.SOLICITED_RESPONSE, [], seq=frag.seq, iin=0x0100)

    def _read(self, frag: AppFragment) -> AppFragment:
        wanted = [g.kind for g in frag.objects] or [PointKind.BINARY_INPUT, PointKind.ANALOG_INPUT]
        groups = []
        served = {}
        for kind in (PointKind.BINARY_INPUT, PointKind.ANALOG_INPUT):
            if kind not in wanted:
                continue
            if kind == PointKind.BINARY_INPUT:
                pts = [(i, self.grid.read_binary(d)) for i, d in sorted(self.points.binary_inputs.items())]
                served.update({f"status:{self.points.binary_inputs[i]}": v for i, v in pts})
            else:
                pts = [(i, self.grid.read_analog(*src)) for i, src in sorted(self.points.analog_inputs.items())]
                served.update({f"{self.points.analog_inputs[i][0]}:{self.points.analog_inputs[i][1]}": v
                               for i, v in pts})
            groups.append(PointGroup(kind, pts))
        self.net.log("os_serve", node=self.node.name, values=served)
        return AppFragment(FunctionCode.SOLICITED_RESPONSE, groups, seq=frag.seq, iin=0)

    def _command(self, frag: AppFragment) -> AppFragment:
        fn = frag.function
        now = self.net.now
        request = _command_key(frag)
        if fn == FunctionCode.SELECT:
            statuses = self._check_points(frag)
            self.selected = (request, now) if all(s == CommandStatus.SUCCESS for s in statuses.values()) else None
            return _echo(frag, statuses)
        if fn == FunctionCode.OPERATE:
            sel = self.selected
            self.selected = None
            if sel is None or sel[0] != request or now - sel[1] > self.select_timeout:
                self.net.log("os_sbo_reject", node=self.node.name, points=_points_repr(frag))
                return _echo(frag, {key: CommandStatus.NO_SELECT for key in _point_keys(frag)})
        statuses = self._check_points(frag)
        before = self._breaker_states()
        actions = []
        for grp in frag.objects:
            for idx, value in grp.points:
                if statuses[(grp.kind, idx)] != CommandStatus.SUCCESS:
                    continue
                action = self._action(grp.kind, idx, value[0])
                if action is not None:
                    actions.append(action)
                    self.net.log("os_apply", node=self.node.name, kind=action.kind,
                                 target=action.target, value=action.value)
        if actions:
            self.grid.apply(*actions)
        if self.unsolicited and self._breaker_states() != before:
            self._send_unsolicited()
        return _echo(frag, statuses)

    def _check_points(self, frag: AppFragment) -> dict:
        out = {}
        for grp in frag.objects:
            table = (self.points.binary_outputs if grp.kind == PointKind.BINARY_OUTPUT_COMMAND
                     else self.points.analog_outputs if grp.kind == PointKind.ANALOG_OUTPUT_COMMAND
                     else None)
            for idx, _value in grp.points:
                if table is None:
                    out[(grp.kind, idx)] = CommandStatus.NOT_SUPPORTED
                elif idx not in table:
                    out[(grp.kind, idx)] = CommandStatus.NOT_SUPPORTED
                else:
                    out[(grp.kind, idx)] = CommandStatus.SUCCESS
        return out

    def _action(self, kind: PointKind, idx: int, value) -> ControlAction | None:
        if kind == PointKind.BINARY_OUTPUT_COMMAND:
            branch = self.points.binary_outputs[idx]
            code = ControlCode(value)
            if code in (ControlCode.TRIP, ControlCode.LATCH_OFF):
                return ControlAction("trip_branch", branch)
            return ControlAction("close_branch", branch)
        return ControlAction("set_setpoint", self.points.analog_outputs[idx], float(value))

    def _breaker_states(self) -> dict:
        return {d: self.grid.read_binary(d) for d in self.points.binary_outputs.values()}

    def _send_unsolicited(self) -> None:
        if self.conn is None or self.conn.state.value != "established":
            return
        pts = [(i, self.grid.read_binary(d)) for i, d in sorted(self.points.binary_inputs.items())]
        frag = AppFragment(FunctionCode.UNSOLICITED_RESPONSE, [PointGroup(PointKind.BINARY_INPUT, pts)],
                           seq=self._uns_seq, uns=True, con=True, iin=0)
        self._uns_seq = (self._uns_seq + 1) & 0x0F
        self._send(self.conn, frag, self.master_address)


def _point_keys(frag: AppFragment) -> list:
    return [(grp.kind, idx) for grp in frag.objects for idx, _ in grp.points]


def _command_key(frag: AppFragment) -> tuple:
    return tuple((int(grp.kind), idx, _plain(v)) for grp in frag.objects for idx, v in grp.points)


def _plain(value):
    if isinstance(value, tuple):
        return _plain(value[0])
    if isinstance(value, enum.Enum):
        return value.name
    return value


def _echo(frag: AppFragment, statuses: dict) -> AppFragment:
    groups = []
    for grp in frag.objects:
        groups.append(PointGroup(grp.kind, [(idx, (val[0], int(statuses[(grp.kind, idx)])))
                                            for idx, val in grp.points]))
    return AppFragment(FunctionCode.SOLICITED_RESPONSE, groups, seq=frag.seq, iin=0)


def _points_repr(frag: AppFragment) -> list:
    out = []
    for grp in frag.objects:
        for idx, val in grp.points:
            out.append([grp.kind.name, idx, _plain(val)])
    return out


# -- operator automation ------------------------------------------------------------

@dataclass(frozen=True)
class AutomationPolicy:
    gen_low_threshold: float = 100.0
    gen_restore_setpoint: float = 1000.0
    trip_on_overload: bool = True
    reaction_delay: float = 0.0
    """virtual seconds between the triggering snapshot and the corrective commands"""

    def __post_init__(self):
        if not (self.gen_low_threshold > 0 and self.gen_restore_setpoint > 0):
            raise ValueError("automation thresholds must be positive")
        if self.reaction_delay < 0:
            raise ValueError("reaction_delay must be non-negative")


@dataclass(frozen=True)
class Command:
    kind: str
    """``setpoint`` (analog output) or ``trip`` / ``close`` (binary output)"""
    index: int
    value: float | None = None


def automation_evaluate(policy: AutomationPolicy, snapshot: dict, point_map: PointMap,
                        limits: dict[str, float]) -> list[Command]:
    """Corrective commands for one snapshot.

    ``snapshot`` maps ``output:<gen>``, ``flow:<branch>`` and
    ``status:<device>`` to the values the master holds.  Setpoint restores
    come first (by analog-output index), then trips (by binary-output index).
    A trip is skipped when the breaker already reads open.
    """
    if not snapshot:
        raise ValueError("empty snapshot")
    cmds = []
    for idx, gen in sorted(point_map.analog_outputs.items()):
        reading = snapshot.get(f"output:{gen}")
        if reading is not None and reading < policy.gen_low_threshold:
            cmds.append(Command("setpoint", idx, policy.gen_restore_setpoint))
    if policy.trip_on_overload:
        for idx, branch in sorted(point_map.binary_outputs.items()):
            flow = snapshot.get(f"flow:{branch}")
            if flow is None or branch not in limits or abs(flow) <= limits[branch]:
                continue
            if snapshot.get(f"status:{branch}") is False:
                continue
            cmds.append(Command("trip", idx))
    return cmds


# -- master -------------------------------------------------------------------------

@dataclass
class MasterConfig:
    poll_interval: float
    command_mode: CommandMode = CommandMode.DIRECT
    outstation_ip: str = "10.0.1.10"
    outstation_address: int = 10
    master_address: int = 1
    port: int = DNP3_PORT
    poll_phase: float = 0.0
    command_interval: float | None = None
    """routine command rounds (re-affirm breakers CLOSE and setpoints); None disables"""
    command_phase: float = 0.0
    app_timeout: float = 2.0
    reconnect_delay: float = 0.1
    max_fragment: int = dnp3.MAX_PAYLOAD

    def __post_init__(self):
        if not self.poll_interval > 0:
            raise ValueError("poll_interval must be positive")
        self.command_mode = CommandMode(self.command_mode)


@dataclass
class _Request:
    kind: str
    fragment: AppFragment
    on_done: object = None
    sent_at: float | None = None


class Master:
    """A DNP3 master bound to exactly one outstation."""

    def __init__(self, net, node, config: MasterConfig, point_map: PointMap,
                 setpoints: dict[str, float] | None = None, policy: AutomationPolicy | None = None,
                 limits: dict[str, float] | None = None, start: float = 0.0):
        self.net = net
        self.node = node
        self.cfg = config
        self.points = point_map
        self.policy = policy
        self.limits = limits or {}
        self.operator_setpoints = dict(setpoints or {})
        self.snapshot: dict[str, float | bool] = {}
        self.raw: dict[tuple, object] = {}
        self.snapshot_time: float | None = None
        self.snapshots = 0
        self.queue: list[_Request] = []
        self.outstanding: _Request | None = None
        self._timer = None
        self._app_seq = 0
        self._tseq = 0
        self.conn = None
        self.results: list[dict] = []
        self.timeouts = 0
        self.reconnects = 0
        self._poll_batches = self._plan_reads()
        self._poll_pending = 0
        self._connect()
        net.at(start + config.poll_phase, self._poll_tick)
        if config.command_interval:
            net.at(start + config.command_phase, self._command_tick)

    # -- connection ---------------------------------------------------------------
    def _connect(self) -> None:
        self.conn = self.net.tcp(self.node).connect(
            (self.cfg.outstation_ip, self.cfg.port), on_established=self._established,
            on_data=self._on_data, on_failed=self._failed)

    def _established(self, conn) -> None:
        self._pump()

    def _failed(self, conn) -> None:
        if self.outstanding is not None:
            self._finish(None, "connection_failed")
        self.reconnects += 1
        self.net.after(self.cfg.reconnect_delay, self._connect)

    # -- polling ------------------------------------------------------------------
    def _plan_reads(self) -> list[list[PointKind]]:
        sizes = {
            PointKind.BINARY_INPUT: 5 + 3 * len(self.points.binary_inputs),
            PointKind.ANALOG_INPUT: 5 + 11 * len(self.points.analog_inputs),
        }
        kinds = [k for k in sizes if sizes[k] > 5]
        if not kinds:
            return []
        if 1 + 4 + sum(sizes[k] for k in kinds) <= self.cfg.max_fragment:
            return [kinds]
        return [[k] for k in kinds]

    def _poll_tick(self) -> None:
        self.net.after(self.cfg.poll_interval, self._poll_tick)
        if self._poll_pending:
            return
        for kinds in self._poll_batches:
            frag = AppFragment(FunctionCode.READ, [PointGroup(k, []) for k in kinds])
            self._poll_pending += 1
            self._submit(_Request("read", frag, self._read_done))

    def poll_now(self) -> None:
        for kinds in self._poll_batches:
            self._poll_pending += 1
            self._submit(_Request("read", AppFragment(FunctionCode.READ, [PointGroup(k, []) for k in kinds]),
                                  self._read_done))

    def _read_done(self, req, response, status) -> None:
        self._poll_pending -= 1
        if response is None:
            return
        for grp in response.objects:
            for idx, value in grp.points:
                self.raw[(grp.kind, idx)] = value
                name = self._name(grp.kind, idx)
                if name is not None:
                    self.snapshot[name] = value
        if self._poll_pending == 0:
            self.snapshot_time = self.net.now
            self.snapshots += 1
            self.net.log("snapshot", node=self.node.name, values=dict(self.snapshot))
            if self.policy is not None:
                cmds = automation_evaluate(self.policy, self.snapshot, self.points, self.limits)
                if cmds:
                    self.net.after(self.policy.reaction_delay, self._corrective, cmds)

    def _name(self, kind: PointKind, idx: int) -> str | None:
        if kind == PointKind.BINARY_INPUT and idx in self.points.binary_inputs:
            return f"status:{self.points.binary_inputs[idx]}"
        if kind == PointKind.ANALOG_INPUT and idx in self.points.analog_inputs:
            qty, dev = self.points.analog_inputs[idx]
            return f"{qty}:{dev}"
        return None

    def _corrective(self, cmds: list[Command]) -> None:
        setpoints = [(c.index, c.value) for c in cmds if c.kind == "setpoint"]
        trips = [(c.index, ControlCode.TRIP) for c in cmds if c.kind == "trip"]
        for idx, value in setpoints:
            self.operator_setpoints[self.points.analog_outputs[idx]] = value
        for idx, _code in trips:
            # routine rounds issued before the next poll must not re-close what is being tripped
            self.snapshot[f"status:{self.points.binary_outputs[idx]}"] = False
        self.net.log("automation", node=self.node.name,
                     commands=[[c.kind, c.index, c.value] for c in cmds])
        if setpoints:
            self.operate_analog(setpoints, origin="automation")
        if trips:
            self.operate_binary(trips, origin="automation")

    # -- routine commands -----------------------------------------------------------------
    def _command_tick(self) -> None:
        self.net.after(self.cfg.command_interval, self._command_tick)
        closes = []
        for idx, branch in sorted(self.points.binary_outputs.items()):
            if self.snapshot.get(f"status:{branch}", True):
                closes.append((idx, ControlCode.CLOSE))
        if closes:
            self.operate_binary(closes, origin="routine")
        setpoints = [(idx, self.operator_setpoints[g]) for idx, g in sorted(self.points.analog_outputs.items())
                     if g in self.operator_setpoints]
        if setpoints:
            self.operate_analog(setpoints, origin="routine")

    # -- commands ----------------------------------------------------------------------
    def operate_binary(self, points: list[tuple[int, ControlCode]], origin: str = "operator") -> None:
        grp = PointGroup(PointKind.BINARY_OUTPUT_COMMAND, [(i, (ControlCode(c), 0)) for i, c in sorted(points)])
        self._operate(grp, origin)

    def operate_analog(self, points: list[tuple[int, float]], origin: str = "operator") -> None:
        grp = PointGroup(PointKind.ANALOG_OUTPUT_COMMAND, [(i, (float(v), 0)) for i, v in sorted(points)])
        self._operate(grp, origin)

    def _operate(self, grp: PointGroup, origin: str) -> None:
        if self.cfg.command_mode == CommandMode.DIRECT:
            self._submit(_Request(f"operate:{origin}", AppFragment(FunctionCode.DIRECT_OPERATE, [grp]),
                                  self._command_done))
            return

        def after_select(req, response, status):
            if status == "ok" and _all_success(response):
                self._submit(_Request(f"operate:{origin}", AppFragment(FunctionCode.OPERATE, [grp]),
                                      self._command_done), front=True)
            else:
                self._command_done(req, response, status)

        self._submit(_Request(f"select:{origin}", AppFragment(FunctionCode.SELECT, [grp]), after_select))

    def _command_done(self, req, response, status) -> None:
        ok = status == "ok" and _all_success(response)
        if status != "ok":
            error = status
        elif ok:
            error = None
        elif _any_status(response, CommandStatus.NO_SELECT):
            error = SelectOperateMismatch.__name__
        else:
            error = "rejected"
        if ok:
            # the master's view of a breaker follows its own successful commands until the next poll
            for grp in req.fragment.objects:
                if grp.kind == PointKind.BINARY_OUTPUT_COMMAND:
                    for idx, (code, _st) in grp.points:
                        closed = ControlCode(code) not in (ControlCode.TRIP, ControlCode.LATCH_OFF)
                        self.snapshot[f"status:{self.points.binary_outputs[idx]}"] = closed
        self.results.append({"t": self.net.now, "kind": req.kind, "success": ok, "error": error})
        self.net.log("command_result", node=self.node.name, kind=req.kind, success=ok, error=error)

    # -- request pipeline -----------------------------------------------------------------
    def _submit(self, req: _Request, front: bool = False) -> None:
        if front:
            self.queue.insert(0, req)
        else:
            self.queue.append(req)
        self._pump()

    def _pump(self) -> None:
        if self.outstanding is not None or not self.queue:
            return
        if self.conn is None or self.conn.state.value != "established":
            return
        req = self.queue.pop(0)
        req.fragment.seq = self._app_seq
        self._app_seq = (self._app_seq + 1) & 0x0F
        payload = dnp3.encode_message(req.fragment, CTRL_FROM_MASTER, self.cfg.outstation_address,
                                      self.cfg.master_address, self._tseq)
        self._tseq = (self._tseq + 1) & 0x3F
        self.outstanding = req
        req.sent_at = self.net.now
        self.net.log("dnp3_tx", node=self.node.name, kind=req.kind, function=req.fragment.function.name,
                     app_seq=req.fragment.seq, points=_points_repr(req.fragment))
        self.conn.send(payload)
        self._timer = self.net.after(self.cfg.app_timeout, self._app_timeout, req)

    def _app_timeout(self, req) -> None:
        if self.outstanding is req:
            self.timeouts += 1
            self._finish(None, "timeout")

    def _finish(self, response, status: str) -> None:
        req = self.outstanding
        self.outstanding = None
        if self._timer is not None:
            self.net.loop.cancel(self._timer)
            self._timer = None
        if req.on_done:
            req.on_done(req, response, status)
        self._pump()

    def _on_data(self, conn, data: bytes) -> None:
        try:
            msg = dnp3.decode_message(data)
        except dnp3.Dnp3Error as exc:
            self.net.log("master_reject", node=self.node.name, error=type(exc).__name__)
            return
        frag = msg.fragment
        if frag.function == FunctionCode.UNSOLICITED_RESPONSE:
            for grp in frag.objects:
                for idx, value in grp.points:
                    name = self._name(grp.kind, idx)
                    if name is not None:
                        self.snapshot[name] = value
            self.net.log("unsolicited", node=self.node.name, points=_points_repr(frag))
            return
        req = self.outstanding
        if req is None or frag.seq != req.fragment.seq:
            self.net.log("master_stale", node=self.node.name, app_seq=frag.seq)
            return
        self.net.log("dnp3_rx", node=self.node.name, function=frag.function.name, app_seq=frag.seq,
                     rtt=self.net.now - req.sent_at)
        self._finish(frag, "ok")


def _all_success(response: AppFragment | None) -> bool:
    if response is None:
        return False
    for grp in response.objects:
        for _idx, (_val, status) in grp.points:
            if status != CommandStatus.SUCCESS:
                return False
    return True


def _any_status(response: AppFragment, status: CommandStatus) -> bool:
    return any(st == status for grp in response.objects for _idx, (_val, st) in grp.points)


def grid_limits(model: GridModel) -> dict[str, float]:
    return {br.id: br.limit for br in model.branches}


def grid_setpoints(model: GridModel) -> dict[str, float]:
    return {g.id: g.setpoint for g in model.generators}


__all__ = [
    "ScadaError", "SelectOperateMismatch", "CommandMode", "PointMap", "auto_point_maps",
    "GridProcess", "Outstation", "AutomationPolicy", "Command", "automation_evaluate",
    "MasterConfig", "Master", "grid_limits", "grid_setpoints", "UnknownDevice",
]
