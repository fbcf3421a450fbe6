"""Quasi-steady grid model: DC power flow, LODF screening, actuation and ramping."""
from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

BALANCE_TOL = 1e-6


class GridError(Exception):
    pass


class InvalidModel(GridError):
    pass


class UnknownDevice(GridError):
    pass


class IslandingOutage(GridError):
    pass


@dataclass
class Bus:
    id: str
    is_slack: bool = False


@dataclass
class Branch:
    id: str
    from_bus: str
    to_bus: str
    reactance: float
    limit: float
    breaker_closed: bool = True


@dataclass
class Generator:
    id: str
    bus: str
    setpoint: float
    output: float
    max_mw: float
    ramp: float
    """MW per second of simulated time."""
    in_service: bool = True


@dataclass
class Load:
    id: str
    bus: str
    demand: float
    in_service: bool = True


@dataclass
class GridModel:
    buses: list[Bus]
    branches: list[Branch]
    generators: list[Generator] = field(default_factory=list)
    loads: list[Load] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise InvalidModel("duplicate bus id")
        slack = [b for b in self.buses if b.is_slack]
        if len(slack) != 1:
            raise InvalidModel(f"expected exactly one slack bus, found {len(slack)}")
        known = set(ids)
        devices = set()
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise InvalidModel(f"branch {br.id} references an unknown bus")
            if br.from_bus == br.to_bus:
                raise InvalidModel(f"branch {br.id} is a self loop")
            if not br.reactance > 0:
                raise InvalidModel(f"branch {br.id} reactance must be positive")
            if not br.limit > 0:
                raise InvalidModel(f"branch {br.id} limit must be positive")
        for dev in [*self.branches, *self.generators, *self.loads]:
            if dev.id in devices:
                raise InvalidModel(f"duplicate device id {dev.id}")
            devices.add(dev.id)
        for dev in [*self.generators, *self.loads]:
            if dev.bus not in known:
                raise InvalidModel(f"{dev.id} references unknown bus {dev.bus}")

    @property
    def slack_bus(self) -> str:
        return next(b.id for b in self.buses if b.is_slack)

    def branch(self, branch_id: str) -> Branch:
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise UnknownDevice(branch_id)

    def generator(self, gen_id: str) -> Generator:
        for gen in self.generators:
            if gen.id == gen_id:
                return gen
        raise UnknownDevice(gen_id)

    def load(self, load_id: str) -> Load:
        for ld in self.loads:
            if ld.id == load_id:
                return ld
        raise UnknownDevice(load_id)

    def slack_generator(self) -> Generator | None:
        slack = self.slack_bus
        return next((g for g in self.generators if g.bus == slack and g.in_service), None)

    def copy(self) -> "GridModel":
        return copy.deepcopy(self)

    def with_branches_open(self, branch_ids) -> "GridModel":
        model = self.copy()
        for bid in branch_ids:
            model.branch(bid).breaker_closed = False
        return model


@dataclass
class GridState:
    flows: dict[str, float]
    outputs: dict[str, float]
    statuses: dict[str, bool]
    solved_ok: bool
    islanded: bool
    angles: dict[str, float] = field(default_factory=dict)
    dead_buses: tuple[str, ...] = ()


@dataclass
class OverloadEntry:
    branch: str
    flow: float
    limit: float
    loading: float


@dataclass
class OverloadReport:
    entries: list[OverloadEntry]

    def __bool__(self) -> bool:
        return bool(self.entries)

    @property
    def branches(self) -> list[str]:
        return [e.branch for e in self.entries]


def _slack_island(model: GridModel) -> set[str]:
    adj: dict[str, list[str]] = {b.id: [] for b in model.buses}
    for br in model.branches:
        if br.breaker_closed:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
    seen = {model.slack_bus}
    stack = [model.slack_bus]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def bus_injections(model: GridModel) -> dict[str, float]:
    """Scheduled net injection per bus, excluding the slack generator."""
    inj = {b.id: 0.0 for b in model.buses}
    slack_gen = model.slack_generator()
    for gen in model.generators:
        if gen.in_service and gen is not slack_gen:
            inj[gen.bus] += gen.output
    for ld in model.loads:
        if ld.in_service:
            inj[ld.bus] -= ld.demand
    return inj


def dc_power_flow(model: GridModel) -> GridState:
    """Solve the lossless DC power flow on the island containing the slack bus.

    Injections on buses cut off from the slack are dropped and the state is
    flagged ``islanded``; flows outside the slack island are reported as zero.
    """
    island = _slack_island(model)
    inj = bus_injections(model)
    dead = tuple(sorted(b for b in inj if b not in island and abs(inj[b]) > 0.0))
    order = [b.id for b in model.buses if b.id in island and b.id != model.slack_bus]
    pos = {bus: i for i, bus in enumerate(order)}
    n = len(order)
    susceptance = np.zeros((n, n))
    for br in model.branches:
        if not br.breaker_closed or br.from_bus not in island:
            continue
        y = 1.0 / br.reactance
        i, j = pos.get(br.from_bus), pos.get(br.to_bus)
        if i is not None:
            susceptance[i, i] += y
        if j is not None:
            susceptance[j, j] += y
        if i is not None and j is not None:
            susceptance[i, j] -= y
            susceptance[j, i] -= y
    injection = np.array([inj[b] for b in order])
    theta = np.linalg.solve(susceptance, injection) if n else np.zeros(0)
    angles = {model.slack_bus: 0.0}
    angles.update({bus: float(theta[pos[bus]]) for bus in order})

    flows = {}
    for br in model.branches:
        if br.breaker_closed and br.from_bus in island:
            flows[br.id] = (angles[br.from_bus] - angles[br.to_bus]) / br.reactance
        else:
            flows[br.id] = 0.0

    outputs = {}
    slack_gen = model.slack_generator()
    slack_balance = -sum(inj[b] for b in island if b != model.slack_bus) - inj[model.slack_bus]
    for gen in model.generators:
        if not gen.in_service:
            outputs[gen.id] = 0.0
        elif gen is slack_gen:
            outputs[gen.id] = slack_balance
        elif gen.bus in island:
            outputs[gen.id] = gen.output
        else:
            outputs[gen.id] = 0.0
    if slack_gen is not None:
        slack_gen.output = slack_balance

    statuses = {br.id: br.breaker_closed for br in model.branches}
    statuses.update({g.id: g.in_service for g in model.generators})
    statuses.update({ld.id: ld.in_service for ld in model.loads})
    islanded = bool(dead)
    return GridState(flows, outputs, statuses, solved_ok=not islanded, islanded=islanded,
                     angles=angles, dead_buses=dead)


def overloads(model: GridModel, state: GridState) -> OverloadReport:
    entries = []
    for br in model.branches:
        flow = state.flows.get(br.id, 0.0)
        if abs(flow) > br.limit:
            entries.append(OverloadEntry(br.id, flow, br.limit, 100.0 * abs(flow) / br.limit))
    return OverloadReport(entries)


def max_loading(model: GridModel, state: GridState) -> float:
    return max((100.0 * abs(state.flows[br.id]) / br.limit for br in model.branches if br.breaker_closed),
               default=0.0)


def _ptdf_columns(model: GridModel):
    """Return (X, pos) with X the inverse reduced susceptance matrix padded by slack zeros."""
    island = _slack_island(model)
    order = [b.id for b in model.buses if b.id in island]
    pos = {bus: i for i, bus in enumerate(order)}
    n = len(order)
    full = np.zeros((n, n))
    for br in model.branches:
        if br.breaker_closed and br.from_bus in island:
            y = 1.0 / br.reactance
            i, j = pos[br.from_bus], pos[br.to_bus]
            full[i, i] += y
            full[j, j] += y
            full[i, j] -= y
            full[j, i] -= y
    s = pos[model.slack_bus]
    keep = [k for k in range(n) if k != s]
    x = np.zeros((n, n))
    if keep:
        x[np.ix_(keep, keep)] = np.linalg.inv(full[np.ix_(keep, keep)])
    return x, pos, island


def lodf(model: GridModel, outaged: str) -> dict[str, float]:
    """Line outage distribution factors for every other closed branch.

    ``post[m] = pre[m] + factor[m] * pre[outaged]``.
    """
    out = model.branch(outaged)
    if not out.breaker_closed:
        raise GridError(f"branch {outaged} is already open")
    x, pos, island = _ptdf_columns(model)
    if out.from_bus not in island:
        raise IslandingOutage(f"branch {outaged} is outside the slack island")
    fk, tk = pos[out.from_bus], pos[out.to_bus]
    self_ptdf = (x[fk, fk] - x[fk, tk] - x[tk, fk] + x[tk, tk]) / out.reactance
    denom = 1.0 - self_ptdf
    if abs(denom) < 1e-9 or _is_bridge(model, outaged):
        raise IslandingOutage(f"outage of {outaged} splits the network")
    factors = {}
    for br in model.branches:
        if br.id == outaged or not br.breaker_closed or br.from_bus not in island:
            continue
        fm, tm = pos[br.from_bus], pos[br.to_bus]
        ptdf = (x[fm, fk] - x[fm, tk] - x[tm, fk] + x[tm, tk]) / br.reactance
        factors[br.id] = ptdf / denom
    return factors


def _is_bridge(model: GridModel, branch_id: str) -> bool:
    trial = model.with_branches_open([branch_id])
    br = model.branch(branch_id)
    return _slack_island(trial) != _slack_island(model) and (
        br.from_bus in _slack_island(model))


def outage_severity(model: GridModel, outaged) -> float:
    """Max loading percent after opening ``outaged``; islanding injections scores infinity."""
    post = model.with_branches_open(outaged)
    state = dc_power_flow(post)
    if state.islanded:
        return math.inf
    return max_loading(post, state)


def _predicted_loading(model: GridModel, state: GridState, branch_id: str) -> float:
    try:
        factors = lodf(model, branch_id)
    except IslandingOutage:
        return math.inf
    pre_k = state.flows[branch_id]
    return max((100.0 * abs(state.flows[m] + f * pre_k) / model.branch(m).limit for m, f in factors.items()),
               default=0.0)


def rank_contingencies(model: GridModel, k: int, beam_width: int | None = None,
                       screen: int | None = None) -> list[tuple[tuple[str, ...], float]]:
    """Rank ``k``-branch outage sets by the worst post-outage loading.

    Sets are grown one branch at a time.  At each level every candidate
    extension is first screened with LODFs computed on the parent outage
    state (``screen`` keeps that many per parent), then scored exactly by a
    full re-solve; ``beam_width`` parents survive to the next level.  With
    both left as ``None`` the search is exhaustive.  Ties break on the
    sorted branch-id tuple.
    """
    if k not in (1, 2, 3, 4):
        raise ValueError("k must be 1, 2, 3 or 4")
    closed = sorted(br.id for br in model.branches if br.breaker_closed)
    beam: list[tuple[str, ...]] = [()]
    scored: dict[tuple[str, ...], float] = {}
    for level in range(1, k + 1):
        scored = {}
        for parent in beam:
            parent_model = model.with_branches_open(parent)
            parent_state = dc_power_flow(parent_model)
            options = [b for b in closed if b not in parent and (not parent or b > parent[-1] or beam_width is not None)]
            if screen is not None and not parent_state.islanded:
                options.sort(key=lambda b: (-_predicted_loading(parent_model, parent_state, b), b))
                options = options[:screen]
            for b in options:
                cand = tuple(sorted(parent + (b,)))
                if cand not in scored:
                    scored[cand] = outage_severity(model, cand)
        ranked = sorted(scored.items(), key=lambda item: (-item[1], item[0]))
        beam = [s for s, _ in ranked[:beam_width]] if beam_width is not None else [s for s, _ in ranked]
        if level == k:
            return ranked
    return []


def enumerate_contingencies(model: GridModel, k: int) -> list[tuple[tuple[str, ...], float]]:
    """Brute-force scoring of every ``k``-subset of closed branches."""
    closed = sorted(br.id for br in model.branches if br.breaker_closed)
    scored = [(combo, outage_severity(model, combo)) for combo in itertools.combinations(closed, k)]
    return sorted(scored, key=lambda item: (-item[1], item[0]))


@dataclass(frozen=True)
class ControlAction:
    kind: str
    """One of trip_branch, close_branch, set_setpoint, trip_load, close_load."""
    target: str
    value: float | None = None


def apply_control(model: GridModel, action: ControlAction) -> GridModel:
    """Apply a device command in place.  Breaker actions are immediate; setpoints ramp in ``step``."""
    if action.kind in ("trip_branch", "close_branch"):
        model.branch(action.target).breaker_closed = action.kind == "close_branch"
    elif action.kind in ("trip_load", "close_load"):
        model.load(action.target).in_service = action.kind == "close_load"
    elif action.kind == "set_setpoint":
        gen = model.generator(action.target)
        gen.setpoint = min(max(float(action.value), 0.0), gen.max_mw)
    else:
        raise ValueError(f"unknown control action {action.kind!r}")
    return model


def step(model: GridModel, dt: float) -> GridState:
    """Ramp every non-slack generator toward its setpoint, then re-solve."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    slack_gen = model.slack_generator()
    for gen in model.generators:
        if gen is slack_gen or not gen.in_service:
            continue
        delta = gen.setpoint - gen.output
        limit = gen.ramp * dt
        if abs(delta) <= limit:
            gen.output = gen.setpoint
        else:
            gen.output += math.copysign(limit, delta)
    return dc_power_flow(model)


def model_from_dict(doc: dict) -> GridModel:
    """Build a model from the grid-file key tree (buses/branches/generators/loads)."""
    try:
        buses = [Bus(str(b["id"]), bool(b.get("slack", False))) for b in doc["buses"]]
        branches = [
            Branch(str(b["id"]), str(b["from"]), str(b["to"]), float(b["reactance"]),
                   float(b["limit"]), bool(b.get("closed", True)))
            for b in doc["branches"]
        ]
        gens = [
            Generator(str(g["id"]), str(g["bus"]), float(g.get("setpoint", g.get("output", 0.0))),
                      float(g.get("output", g.get("setpoint", 0.0))), float(g["max"]),
                      float(g.get("ramp", 1.0)), bool(g.get("in_service", True)))
            for g in doc.get("generators", [])
        ]
        loads = [
            Load(str(ld["id"]), str(ld["bus"]), float(ld["demand"]), bool(ld.get("in_service", True)))
            for ld in doc.get("loads", [])
        ]
    except KeyError as exc:
        raise InvalidModel(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidModel(str(exc)) from None
    return GridModel(buses, branches, gens, loads)


def model_to_dict(model: GridModel) -> dict:
    return {
        "buses": [{"id": b.id, "slack": b.is_slack} for b in model.buses],
        "branches": [
            {"id": b.id, "from": b.from_bus, "to": b.to_bus, "reactance": b.reactance,
             "limit": b.limit, "closed": b.breaker_closed}
            for b in model.branches
        ],
        "generators": [
            {"id": g.id, "bus": g.bus, "setpoint": g.setpoint, "output": g.output,
             "max": g.max_mw, "ramp": g.ramp, "in_service": g.in_service}
            for g in model.generators
        ],
        "loads": [
            {"id": ld.id, "bus": ld.bus, "demand": ld.demand, "in_service": ld.in_service}
            for ld in model.loads
        ],
    }
