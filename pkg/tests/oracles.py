"""Independent reference implementations used as test oracles."""
import numpy as np


def crc_dnp_bitwise(data: bytes) -> int:
    """CRC-16/DNP by straight polynomial division, one bit at a time (MSB-first form).

    Works on the unreflected polynomial 0x3D65 by reversing input bits and the
    final register, so it shares no table or reflected constant with the codec.
    """
    poly = 0x3D65
    reg = 0
    for byte in data:
        rev = int(f"{byte:08b}"[::-1], 2)
        for bit in range(7, -1, -1):
            top = (reg >> 15) & 1
            reg = (reg << 1) & 0xFFFF
            if top ^ ((rev >> bit) & 1):
                reg ^= poly
    reg = int(f"{reg:016b}"[::-1], 2)
    return reg ^ 0xFFFF


def dense_flows(buses, branches, injections, slack):
    """DC flows by assembling the full susceptance matrix and solving it with numpy.

    ``branches`` is a list of ``(id, from, to, x)``; ``injections`` maps bus to MW.
    """
    idx = {b: i for i, b in enumerate(buses)}
    n = len(buses)
    B = np.zeros((n, n))
    for _bid, f, t, x in branches:
        i, j = idx[f], idx[t]
        B[i, i] += 1 / x
        B[j, j] += 1 / x
        B[i, j] -= 1 / x
        B[j, i] -= 1 / x
    keep = [i for i in range(n) if i != idx[slack]]
    P = np.array([injections.get(b, 0.0) for b in buses])
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], P[keep])
    return {bid: (theta[idx[f]] - theta[idx[t]]) / x for bid, f, t, x in branches}


def random_grid(rnd, n_buses=None):
    """A connected random grid of at most 12 buses, with a ring so no branch is a bridge."""
    from scadasim.grid import Branch, Bus, Generator, GridModel, Load

    n = n_buses or rnd.randint(3, 12)
    names = [f"B{i}" for i in range(n)]
    buses = [Bus(b, is_slack=(i == 0)) for i, b in enumerate(names)]
    order = names[:]
    rnd.shuffle(order)
    pairs = {tuple(sorted((order[i], order[(i + 1) % n]))) for i in range(n)}
    for _ in range(rnd.randint(0, n)):
        a, b = rnd.sample(names, 2)
        pairs.add(tuple(sorted((a, b))))
    branches = [Branch(f"L{k}", a, b, rnd.uniform(0.02, 0.3), rnd.uniform(100, 800))
                for k, (a, b) in enumerate(sorted(pairs))]
    gens = [Generator("G0", names[0], 0.0, 0.0, 10000.0, 10.0)]
    loads = []
    for i, b in enumerate(names[1:], start=1):
        if rnd.random() < 0.5:
            out = rnd.uniform(0, 400)
            gens.append(Generator(f"G{i}", b, out, out, 500.0, 5.0))
        loads.append(Load(f"D{i}", b, rnd.uniform(0, 300)))
    return GridModel(buses, branches, gens, loads)


def model_flows_dense(model):
    """Dense-solve flows for the closed branches of a fully connected model."""
    slack_gen = model.slack_generator()
    inj = {}
    for g in model.generators:
        if g.in_service and g is not slack_gen:
            inj[g.bus] = inj.get(g.bus, 0.0) + g.output
    for ld in model.loads:
        if ld.in_service:
            inj[ld.bus] = inj.get(ld.bus, 0.0) - ld.demand
    closed = [(br.id, br.from_bus, br.to_bus, br.reactance) for br in model.branches if br.breaker_closed]
    return dense_flows([b.id for b in model.buses], closed, inj, model.slack_bus)
