"""Benchmark instances: a hand-verified catalog plus a synthetic generator.

The catalog ships as JSON files next to this module.  ``tiny2`` is small
enough that every reference value is hand-solved (gas objective 5.0 at the
base profile with no plant offtake, nodal price 1.0 at the demand node);
``small6`` and ``med12`` are desk-scale systems sized for the oracle-based
equivalence checks and the trend experiments.
"""

from __future__ import annotations

import importlib.resources as resources
from dataclasses import dataclass

import numpy as np

from .model import (
    BidStep,
    Compressor,
    DemandProfile,
    ElectricNetwork,
    GasNetwork,
    GasNode,
    GfppCoupling,
    GfppLink,
    Line,
    MarketInstance,
    Pipeline,
    SupplyBid,
    UcParams,
    UcUnit,
    Valve,
    instance_from_dict,
    ELECTRIC,
)

CATALOG = ("tiny2", "small6", "med12")


def build_tiny2() -> MarketInstance:
    """Two gas nodes, one pipe, two buses, one GFPP; fully hand-solved.

    With the base profile (5 MWh at node B) and zero plant offtake the gas
    market clears at cost 5.0 with nodal price 1.0 everywhere; pushing the
    demand to 15 exceeds the 10 MWh pipe and supply caps, so 5 MWh shed at
    cost 100 puts the objective at 510 and the price at the shed cost.
    """
    gas = GasNetwork(
        nodes=(GasNode("A", 0.0, 100.0), GasNode("B", 0.0, 100.0)),
        pipelines=(Pipeline("A", "B", 0.05, -10.0, 10.0, (0.0,)),),
        compressors=(),
        valves=(),
    )
    elec = ElectricNetwork(buses=("X1", "X2"), lines=(Line("X1", "X2", 1.0, 10.0),))
    return MarketInstance(
        name="tiny2",
        gas=gas,
        elec=elec,
        gas_bids=(SupplyBid("A", (BidStep(1.0, 10.0),), min_total=0.0, max_total=10.0),),
        elec_bids=(SupplyBid("X1", (BidStep(2.0, 10.0),), kind=ELECTRIC),),
        uc=UcParams((UcUnit("X1", 1.0, (1.0,), 1, 1, 0, 0),)),
        coupling=GfppCoupling((GfppLink("X1", "B", 0.5, 0.5),)),
        demand=DemandProfile(horizon=1, gas={("B", 0): 5.0}, elec={("X2", 0): 4.0}),
        shed_cost={"A": 100.0, "B": 100.0},
    )


def build_small6() -> MarketInstance:
    """Six gas nodes with a compressor and a valve, five buses, two GFPPs, T=2.

    G6 is a small demand leaf behind a snug pipe, so strongly obfuscated
    (negative) demands there are the typical source of clearing
    infeasibility; the plants' offtake at G3/G4 bounds how much system-wide
    negative demand the network can absorb.
    """
    gas = GasNetwork(
        nodes=tuple(GasNode(f"G{i}", 0.0, 100.0) for i in range(1, 7)),
        pipelines=(
            Pipeline("G1", "G2", 0.02, -20.0, 20.0, (-10.0, 10.0)),
            Pipeline("G2", "G3", 0.02, -14.0, 14.0, (-7.0, 7.0)),
            Pipeline("G2", "G6", 0.02, -0.5, 0.5, (-0.3, 0.3)),
            Pipeline("G4", "G5", 0.02, -28.0, 28.0, (-8.0, 8.0)),
        ),
        compressors=(Compressor("G2", "G4", 1.0, 1.8),),
        valves=(Valve("G3", "G4", 0.6, 1.0),),
    )
    elec = ElectricNetwork(
        buses=("B1", "B2", "B3", "B4", "B5"),
        lines=(
            Line("B1", "B2", 5.0, 12.0),
            Line("B2", "B3", 5.0, 12.0),
            Line("B3", "B4", 5.0, 12.0),
            Line("B4", "B5", 5.0, 12.0),
            Line("B5", "B1", 5.0, 12.0),
        ),
    )
    return MarketInstance(
        name="small6",
        gas=gas,
        elec=elec,
        gas_bids=(
            SupplyBid("G1", (BidStep(1.0, 10.0), BidStep(1.5, 10.0)), min_total=0.0, max_total=20.0),
            SupplyBid(
                "G5",
                (
                    BidStep(2.0, 2.0),
                    BidStep(2.3, 2.0),
                    BidStep(2.6, 2.0),
                    BidStep(2.9, 2.0),
                    BidStep(3.2, 10.0),
                    BidStep(3.5, 10.0),
                ),
                min_total=0.0,
                max_total=28.0,
            ),
        ),
        elec_bids=(
            SupplyBid("B1", (BidStep(28.0, 6.0), BidStep(33.0, 6.0)), kind=ELECTRIC),
            SupplyBid("B3", (BidStep(40.0, 6.0), BidStep(46.0, 6.0)), kind=ELECTRIC),
            SupplyBid("B4", (BidStep(52.0, 5.0), BidStep(70.0, 5.0)), kind=ELECTRIC),
        ),
        uc=UcParams(
            (
                UcUnit("B1", 10.0, (20.0,), 1, 1, 1, 0),
                UcUnit("B3", 3.0, (20.0,), 1, 1, 1, 0),
                UcUnit("B4", 15.0, (50.0, 80.0), 1, 1, 0, 0),
            )
        ),
        coupling=GfppCoupling(
            (
                GfppLink("B1", "G3", 0.8, 5.0),
                GfppLink("B3", "G4", 0.7, 6.5),
            )
        ),
        demand=DemandProfile(
            horizon=2,
            gas={
                ("G2", 0): 4.0,
                ("G3", 0): 6.0,
                ("G4", 0): 5.0,
                ("G6", 0): 0.3,
                ("G2", 1): 4.5,
                ("G3", 1): 6.5,
                ("G4", 1): 5.5,
                ("G6", 1): 0.32,
            },
            elec={("B2", 0): 8.0, ("B5", 0): 5.0, ("B2", 1): 8.0, ("B5", 1): 6.0},
        ),
        shed_cost={},
    )


def build_med12() -> MarketInstance:
    """Twelve gas nodes, nine buses, three GFPPs over four periods."""
    pipes = [
        ("G1", "G2", 40.0),
        ("G2", "G3", 25.0),
        ("G3", "G4", 15.0),
        ("G2", "G5", 30.0),
        ("G5", "G6", 25.0),
        ("G6", "G7", 20.0),
        ("G5", "G8", 18.0),
        ("G8", "G9", 16.0),
        ("G9", "G10", 20.0),
    ]
    gas = GasNetwork(
        nodes=tuple(GasNode(f"G{i}", 0.0, 100.0) for i in range(1, 13)),
        pipelines=tuple(Pipeline(a, b, 0.01, -cap, cap, (0.0,)) for a, b, cap in pipes),
        compressors=(Compressor("G7", "G11", 1.0, 1.6),),
        valves=(Valve("G9", "G12", 0.7, 1.0),),
    )
    elec = ElectricNetwork(
        buses=tuple(f"E{i}" for i in range(1, 10)),
        lines=tuple(
            Line(f"E{i}", f"E{i % 9 + 1}", 5.0, 15.0) for i in range(1, 10)
        ),
    )
    tgrow = [1.0, 1.15, 1.3, 1.1]
    gas_dem = {}
    for node, base in (("G3", 5.0), ("G4", 4.0), ("G8", 5.0), ("G11", 4.0), ("G12", 4.0)):
        for t, m in enumerate(tgrow):
            gas_dem[(node, t)] = round(base * m, 6)
    elec_dem = {}
    for bus, base in (("E2", 7.0), ("E5", 8.0), ("E8", 6.0)):
        for t, m in enumerate(tgrow):
            elec_dem[(bus, t)] = round(base * m, 6)
    return MarketInstance(
        name="med12",
        gas=gas,
        elec=elec,
        gas_bids=(
            SupplyBid("G1", (BidStep(1.2, 20.0),), min_total=0.0, max_total=20.0),
            SupplyBid("G6", (BidStep(2.0, 15.0),), min_total=0.0, max_total=15.0),
            SupplyBid("G10", (BidStep(2.6, 15.0),), min_total=0.0, max_total=15.0),
        ),
        elec_bids=(
            SupplyBid("E1", (BidStep(26.0, 7.0), BidStep(32.0, 7.0)), kind=ELECTRIC),
            SupplyBid("E4", (BidStep(28.0, 7.0), BidStep(35.0, 7.0)), kind=ELECTRIC),
            SupplyBid("E7", (BidStep(30.0, 7.0), BidStep(37.0, 7.0)), kind=ELECTRIC),
            SupplyBid("E9", (BidStep(42.0, 10.0), BidStep(58.0, 10.0)), kind=ELECTRIC),
        ),
        uc=UcParams(
            (
                UcUnit("E1", 12.0, (25.0,), 1, 1, 1, 0),
                UcUnit("E4", 12.0, (25.0,), 1, 1, 1, 0),
                UcUnit("E7", 12.0, (25.0,), 1, 1, 1, 0),
                UcUnit("E9", 18.0, (60.0, 90.0), 2, 2, 0, 0),
            )
        ),
        coupling=GfppCoupling(
            (
                GfppLink("E1", "G3", 0.5, 5.0),
                GfppLink("E4", "G7", 0.6, 5.0),
                GfppLink("E7", "G12", 0.5, 5.0),
            )
        ),
        demand=DemandProfile(horizon=4, gas=gas_dem, elec=elec_dem),
        shed_cost={},
    )


_BUILDERS = {"tiny2": build_tiny2, "small6": build_small6, "med12": build_med12}


def builtin_instances() -> dict[str, MarketInstance]:
    """Catalog of shipped instances, loaded from the packaged JSON files."""
    out = {}
    for name in CATALOG:
        ref = resources.files(__package__) / "instances" / f"{name}.json"
        with ref.open() as fh:
            import json

            out[name] = instance_from_dict(json.load(fh))
    return out


def get_instance(name_or_path: str) -> MarketInstance:
    """Resolve a catalog name or a JSON file path to an instance."""
    if name_or_path in CATALOG:
        return builtin_instances()[name_or_path]
    from .model import load_instance

    return load_instance(name_or_path)


@dataclass(frozen=True)
class BenchSpec:
    gas_nodes: int
    pipelines: int
    compressors: int = 0
    valves: int = 0
    buses: int = 2
    lines: int = 1
    gfpps: int = 1
    conventional: int = 1
    horizon: int = 1
    gas_demand_range: tuple[float, float] = (3.0, 8.0)
    elec_demand_range: tuple[float, float] = (4.0, 9.0)
    seed: int = 0


def generate_instance(spec: BenchSpec) -> MarketInstance:
    """Deterministic synthetic system: spanning trees plus random chords.

    Sized so the gas market is comfortably feasible at the base profile;
    supply and pipe capacities carry roughly 2x the sampled demand.
    """
    narcs = spec.pipelines + spec.compressors + spec.valves
    if spec.gas_nodes < 2 or narcs < spec.gas_nodes - 1:
        raise ValueError("gas topology cannot be connected with these counts")
    if spec.buses < 2 or spec.lines < spec.buses - 1:
        raise ValueError("electric topology cannot be connected with these counts")
    if spec.gfpps + spec.conventional > spec.buses:
        raise ValueError("more suppliers than buses")
    if spec.horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = np.random.default_rng(spec.seed)

    gnodes = [f"G{i+1}" for i in range(spec.gas_nodes)]
    edges = []
    for i in range(1, spec.gas_nodes):
        edges.append((gnodes[int(rng.integers(0, i))], gnodes[i]))
    while len(edges) < narcs:
        a, b = rng.choice(spec.gas_nodes, size=2, replace=False)
        edges.append((gnodes[int(a)], gnodes[int(b)]))
    rng.shuffle(edges)

    total_gas_demand = spec.horizon and sum(spec.gas_demand_range) / 2 * max(1, spec.gas_nodes // 2)
    cap = max(2.0 * total_gas_demand, 10.0)
    pipelines = []
    compressors = []
    valves = []
    for k, (a, b) in enumerate(edges):
        if k < spec.pipelines:
            w = float(rng.uniform(0.01, 0.04))
            half = round(float(rng.uniform(0.9, 1.3)) * cap, 3)
            pipelines.append(Pipeline(a, b, w, -half, half, (round(-half / 2, 3), round(half / 2, 3))))
        elif k < spec.pipelines + spec.compressors:
            compressors.append(Compressor(a, b, 1.0, float(rng.uniform(1.2, 2.0))))
        else:
            valves.append(Valve(a, b, float(rng.uniform(0.5, 0.9)), 1.0))
    gas = GasNetwork(
        nodes=tuple(GasNode(n, 0.0, 100.0) for n in gnodes),
        pipelines=tuple(pipelines),
        compressors=tuple(compressors),
        valves=tuple(valves),
    )

    buses = [f"B{i+1}" for i in range(spec.buses)]
    lines = []
    for i in range(1, spec.buses):
        lines.append((buses[int(rng.integers(0, i))], buses[i]))
    while len(lines) < spec.lines:
        a, b = rng.choice(spec.buses, size=2, replace=False)
        lines.append((buses[int(a)], buses[int(b)]))
    elec = ElectricNetwork(
        buses=tuple(buses),
        lines=tuple(
            Line(a, b, float(rng.uniform(3.0, 8.0)), round(2.0 * sum(spec.elec_demand_range), 3))
            for a, b in lines
        ),
    )

    n_gas_sup = max(2, spec.gas_nodes // 4)
    sup_nodes = sorted(rng.choice(spec.gas_nodes, size=min(n_gas_sup, spec.gas_nodes), replace=False))
    gas_bids = []
    sup_cap = round(2.5 * total_gas_demand / len(sup_nodes), 3)
    for i, ni in enumerate(sup_nodes):
        p1 = round(1.0 + 0.6 * i + float(rng.uniform(0, 0.3)), 3)
        gas_bids.append(
            SupplyBid(
                gnodes[int(ni)],
                (BidStep(p1, sup_cap), BidStep(round(p1 + 0.5, 3), sup_cap)),
                min_total=0.0,
                max_total=2 * sup_cap,
            )
        )
    max_gas_price = max(s.price for b in gas_bids for s in b.steps)

    sup_buses = list(rng.choice(spec.buses, size=spec.gfpps + spec.conventional, replace=False))
    elec_bids, units, links = [], [], []
    elec_cap = round(1.5 * sum(spec.elec_demand_range) / 2 * max(1, spec.buses // 2) / max(1, spec.gfpps + spec.conventional), 3)
    demand_gnodes = [g for g in gnodes if g not in {gas_bids[i].node for i in range(len(gas_bids))}]
    for i, bi in enumerate(sup_buses):
        bus = buses[int(bi)]
        is_gfpp = i < spec.gfpps
        base = 25.0 + 3.0 * i if is_gfpp else 42.0 + 5.0 * (i - spec.gfpps)
        steps = (BidStep(round(base, 3), elec_cap), BidStep(round(base * 1.25, 3), elec_cap))
        elec_bids.append(SupplyBid(bus, steps, kind=ELECTRIC))
        units.append(
            UcUnit(
                bus,
                no_load_cost=round(float(rng.uniform(8, 16)), 3),
                startup_costs=(round(float(rng.uniform(15, 40)), 3),),
                min_up=1,
                min_down=1,
                initial_state=1 if is_gfpp else 0,
                initial_lock=0,
            )
        )
        if is_gfpp:
            gnode = demand_gnodes[i % len(demand_gnodes)] if demand_gnodes else gnodes[i % len(gnodes)]
            # Keep the baseline bid-validity comfortable: 2 a kappa >> 2 a y*.
            alpha = round(0.35 * base / (2.0 * max_gas_price), 3)
            links.append(GfppLink(bus, gnode, round(float(rng.uniform(0.4, 0.8)), 3), alpha))

    d_gas = {}
    for g in demand_gnodes[: max(1, len(demand_gnodes) * 2 // 3)]:
        for t in range(spec.horizon):
            d_gas[(g, t)] = round(float(rng.uniform(*spec.gas_demand_range)), 3)
    d_elec = {}
    load_buses = [b for b in buses if b not in {e.node for e in elec_bids}] or [buses[-1]]
    for b in load_buses:
        for t in range(spec.horizon):
            d_elec[(b, t)] = round(float(rng.uniform(*spec.elec_demand_range)), 3)

    return MarketInstance(
        name=f"gen_seed{spec.seed}",
        gas=gas,
        elec=elec,
        gas_bids=tuple(gas_bids),
        elec_bids=tuple(elec_bids),
        uc=UcParams(tuple(units)),
        coupling=GfppCoupling(tuple(links)),
        demand=DemandProfile(horizon=spec.horizon, gas=d_gas, elec=d_elec),
        shed_cost={},
    )
