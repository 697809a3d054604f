"""Domain model for the joint natural gas / electricity market system.

All quantities are energies in MWh and prices in $/MWh over a single
instance-wide horizon of ``T`` periods.  Pressure variables are squared
pressures, so compressor/valve ratio bounds act multiplicatively on them.

Every type here is an immutable value object: operations never mutate an
instance, they return new ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping

SCHEMA_VERSION = "ppsm_instance_v1"

GAS = "gas"
ELECTRIC = "electric"


@dataclass(frozen=True)
class GasNode:
    id: str
    pressure_min: float
    pressure_max: float


@dataclass(frozen=True)
class Pipeline:
    tail: str
    head: str
    weymouth: float
    flow_min: float
    flow_max: float
    setpoints: tuple[float, ...]  # flow discretization points, strictly increasing


@dataclass(frozen=True)
class Compressor:
    tail: str
    head: str
    ratio_min: float
    ratio_max: float


@dataclass(frozen=True)
class Valve:
    tail: str
    head: str
    ratio_min: float
    ratio_max: float


@dataclass(frozen=True)
class GasNetwork:
    nodes: tuple[GasNode, ...]
    pipelines: tuple[Pipeline, ...]
    compressors: tuple[Compressor, ...]
    valves: tuple[Valve, ...]

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def arcs(self) -> list[tuple[str, object]]:
        """All arcs with stable ids: pipelines p#, compressors c#, valves v#."""
        out: list[tuple[str, object]] = []
        out += [(f"p{i}", a) for i, a in enumerate(self.pipelines)]
        out += [(f"c{i}", a) for i, a in enumerate(self.compressors)]
        out += [(f"v{i}", a) for i, a in enumerate(self.valves)]
        return out


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    susceptance: float
    capacity: float


@dataclass(frozen=True)
class ElectricNetwork:
    buses: tuple[str, ...]
    lines: tuple[Line, ...]


@dataclass(frozen=True)
class BidStep:
    price: float
    quantity: float


@dataclass(frozen=True)
class SupplyBid:
    """Stepwise supply offer of one supplier located at ``node``.

    Step prices must be non-decreasing (merit order).  ``min_total`` and
    ``max_total`` are the aggregate per-period production bounds; they are
    only meaningful for gas suppliers.
    """

    node: str
    steps: tuple[BidStep, ...]
    kind: str = GAS
    min_total: float = 0.0
    max_total: float | None = None

    @property
    def total_cap(self) -> float:
        return sum(s.quantity for s in self.steps)

    @property
    def agg_max(self) -> float:
        return self.total_cap if self.max_total is None else self.max_total


@dataclass(frozen=True)
class UcUnit:
    supplier: str  # bus of the electricity supplier this unit commits
    no_load_cost: float
    startup_costs: tuple[float, ...]  # cost per offline-duration class h = 1..H
    min_up: int = 1
    min_down: int = 1
    initial_state: int = 0
    initial_lock: int = 0  # number of leading periods pinned to initial_state


@dataclass(frozen=True)
class UcParams:
    units: tuple[UcUnit, ...]

    def by_supplier(self) -> dict[str, UcUnit]:
        return {u.supplier: u for u in self.units}


@dataclass(frozen=True)
class GfppLink:
    supplier: str  # electricity supplier bus
    gas_node: str
    heat_rate: float  # MWh gas per MWh electricity
    price_coeff: float  # price parameter entering the bid-validity constraint


@dataclass(frozen=True)
class GfppCoupling:
    links: tuple[GfppLink, ...]

    def by_supplier(self) -> dict[str, GfppLink]:
        return {l.supplier: l for l in self.links}


@dataclass(frozen=True)
class DemandProfile:
    horizon: int
    gas: Mapping[tuple[str, int], float]
    elec: Mapping[tuple[str, int], float]


@dataclass(frozen=True)
class MarketInstance:
    name: str
    gas: GasNetwork
    elec: ElectricNetwork
    gas_bids: tuple[SupplyBid, ...]
    elec_bids: tuple[SupplyBid, ...]
    uc: UcParams
    coupling: GfppCoupling
    demand: DemandProfile
    shed_cost: Mapping[str, float] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.demand.horizon

    def max_gas_bid_price(self) -> float:
        return max((s.price for b in self.gas_bids for s in b.steps), default=0.0)

    def shed_cost_at(self, node: str) -> float:
        """Shed cost for a node; defaults to 10x the dearest gas bid."""
        if node in self.shed_cost:
            return float(self.shed_cost[node])
        return 10.0 * self.max_gas_bid_price()

    def gas_bid_at(self, node: str) -> SupplyBid | None:
        for b in self.gas_bids:
            if b.node == node:
                return b
        return None

    def elec_bid_at(self, bus: str) -> SupplyBid | None:
        for b in self.elec_bids:
            if b.node == bus:
                return b
        return None


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_instance(inst: MarketInstance) -> ValidationReport:
    """Check every structural invariant; returns a report, never raises."""
    v: list[Violation] = []
    gas_nodes = set(inst.gas.node_ids())
    buses = set(inst.elec.buses)

    def bad(path, msg):
        v.append(Violation(path, msg))

    if len(gas_nodes) != len(inst.gas.nodes):
        bad("gas.nodes", "duplicate gas node ids")
    if len(buses) != len(inst.elec.buses):
        bad("elec.buses", "duplicate bus ids")

    for i, n in enumerate(inst.gas.nodes):
        if not n.pressure_min <= n.pressure_max:
            bad(f"gas.nodes[{i}].pressure_bounds", "pressure_min exceeds pressure_max")

    for i, p in enumerate(inst.gas.pipelines):
        if p.tail not in gas_nodes or p.head not in gas_nodes:
            bad(f"gas.pipelines[{i}]", "endpoint is not a declared gas node")
        if not p.flow_min <= p.flow_max:
            bad(f"gas.pipelines[{i}].flow_bounds", "flow_min exceeds flow_max")
        if len(p.setpoints) < 1:
            bad(f"gas.pipelines[{i}].setpoints", "at least one discretization point required")
        else:
            pts = p.setpoints
            if any(pts[k] >= pts[k + 1] for k in range(len(pts) - 1)):
                bad(f"gas.pipelines[{i}].setpoints", "setpoints must be strictly increasing")
            if pts[0] < p.flow_min or pts[-1] > p.flow_max:
                bad(f"gas.pipelines[{i}].setpoints", "setpoints outside flow bounds")

    for label, arcs in (("compressors", inst.gas.compressors), ("valves", inst.gas.valves)):
        for i, a in enumerate(arcs):
            if a.tail not in gas_nodes or a.head not in gas_nodes:
                bad(f"gas.{label}[{i}]", "endpoint is not a declared gas node")
            if not 0.0 < a.ratio_min <= a.ratio_max:
                bad(f"gas.{label}[{i}].ratio_bounds", "require 0 < ratio_min <= ratio_max")

    for i, l in enumerate(inst.elec.lines):
        if l.from_bus not in buses or l.to_bus not in buses:
            bad(f"elec.lines[{i}]", "endpoint is not a declared bus")
        if l.susceptance <= 0:
            bad(f"elec.lines[{i}].susceptance", "susceptance must be positive")
        if l.capacity <= 0:
            bad(f"elec.lines[{i}].capacity", "flow bound must be positive")

    def check_bids(bids, kind, domain, label):
        seen = set()
        for i, b in enumerate(bids):
            if b.node not in domain:
                bad(f"{label}[{i}].node", "bid placed at undeclared node")
            if b.node in seen:
                bad(f"{label}[{i}].node", "more than one supplier at this node")
            seen.add(b.node)
            if b.kind != kind:
                bad(f"{label}[{i}].kind", f"expected kind {kind!r}")
            if not b.steps:
                bad(f"{label}[{i}].steps", "empty bid")
            for k, s in enumerate(b.steps):
                if s.quantity <= 0:
                    bad(f"{label}[{i}].steps[{k}].quantity", "step cap must be positive")
                if k and s.price < b.steps[k - 1].price:
                    bad(f"{label}[{i}].steps[{k}].price", "step prices must be non-decreasing")
            if b.min_total < 0:
                bad(f"{label}[{i}].min_total", "negative aggregate lower bound")
            if b.min_total > b.total_cap:
                bad(f"{label}[{i}].min_total", "aggregate lower bound exceeds sum of step caps")

    check_bids(inst.gas_bids, GAS, gas_nodes, "gas_bids")
    check_bids(inst.elec_bids, ELECTRIC, buses, "elec_bids")

    elec_suppliers = {b.node for b in inst.elec_bids}
    for i, u in enumerate(inst.uc.units):
        if u.supplier not in elec_suppliers:
            bad(f"uc.units[{i}].supplier", "unit does not match any electricity bid")
        if u.no_load_cost < 0 or any(c < 0 for c in u.startup_costs):
            bad(f"uc.units[{i}]", "costs must be non-negative")
        if u.min_up < 1 or u.min_down < 1:
            bad(f"uc.units[{i}]", "minimum up/down times must be at least 1")
        if u.initial_state not in (0, 1):
            bad(f"uc.units[{i}].initial_state", "initial state must be 0 or 1")
        if u.initial_lock < 0 or u.initial_lock > inst.horizon:
            bad(f"uc.units[{i}].initial_lock", "lock window outside the horizon")
    committed = {u.supplier for u in inst.uc.units}
    for i, b in enumerate(inst.elec_bids):
        if b.node not in committed:
            bad(f"elec_bids[{i}]", "electricity supplier has no unit-commitment record")

    seen_gfpp = set()
    for i, l in enumerate(inst.coupling.links):
        if l.supplier not in elec_suppliers:
            bad(f"coupling.links[{i}].supplier", "GFPP does not match any electricity bid")
        if l.gas_node not in gas_nodes:
            bad(f"coupling.links[{i}].gas_node", "GFPP mapped to undeclared gas node")
        if l.supplier in seen_gfpp:
            bad(f"coupling.links[{i}].supplier", "GFPP mapped to more than one gas node")
        seen_gfpp.add(l.supplier)
        if l.heat_rate < 0 or l.price_coeff < 0:
            bad(f"coupling.links[{i}]", "heat rate and price parameter must be non-negative")

    T = inst.demand.horizon
    if T < 1:
        bad("demand.horizon", "horizon must be at least 1")
    for label, dem, domain in (("gas", inst.demand.gas, gas_nodes), ("elec", inst.demand.elec, buses)):
        for (node, t), val in dem.items():
            if node not in domain:
                bad(f"demand.{label}[{node},{t}]", "demand keyed at undeclared node")
            if not 0 <= t < T:
                bad(f"demand.{label}[{node},{t}]", "period outside the horizon")
            if val < 0:
                bad(f"demand.{label}[{node},{t}]", "physical demand must be non-negative")

    for node in inst.shed_cost:
        if node not in gas_nodes:
            bad(f"shed_cost[{node}]", "shed cost keyed at undeclared gas node")
    max_bid = inst.max_gas_bid_price()
    for node in sorted(gas_nodes):
        if inst.shed_cost_at(node) <= max_bid:
            bad(f"shed_cost[{node}]", "shed cost not dominant: must exceed every gas bid price")

    return ValidationReport(tuple(v))


def stress_scale(inst: MarketInstance, e_factor: float, g_factor: float) -> MarketInstance:
    """Scale electric demand by ``e_factor`` and gas demand by ``g_factor``."""
    if e_factor < 0 or g_factor < 0:
        raise ValueError("stress factors must be non-negative")
    dem = DemandProfile(
        horizon=inst.demand.horizon,
        gas={k: g_factor * val for k, val in inst.demand.gas.items()},
        elec={k: e_factor * val for k, val in inst.demand.elec.items()},
    )
    return replace(inst, demand=dem)


def with_gas_demand(inst: MarketInstance, gas_demand: Mapping[tuple[str, int], float]) -> MarketInstance:
    """Copy of the instance with its gas demand replaced (released profiles)."""
    dem = DemandProfile(horizon=inst.demand.horizon, gas=dict(gas_demand), elec=dict(inst.demand.elec))
    return replace(inst, demand=dem)


def gfpp_gas_consumption(
    dispatch: Mapping[tuple[str, int, int], float], coupling: GfppCoupling
) -> dict[tuple[str, int], float]:
    """Gas offtake per (gas node, period) implied by a GFPP electricity dispatch.

    ``dispatch`` is keyed by (supplier, bid step, period).  Nodes without a
    GFPP simply do not appear; read the result with ``.get(key, 0.0)``.
    """
    links = coupling.by_supplier()
    gamma: dict[tuple[str, int], float] = {}
    for (supplier, _b, t), x in sorted(dispatch.items()):
        if supplier not in links:
            raise ValueError(f"dispatch keyed by supplier {supplier!r} absent from the coupling")
        link = links[supplier]
        key = (link.gas_node, t)
        gamma[key] = gamma.get(key, 0.0) + link.heat_rate * x
    return gamma


# ---------------------------------------------------------------------------
# JSON round trip (schema ppsm_instance_v1, documented in docs/instance_schema.md)
# ---------------------------------------------------------------------------


def _demand_to_json(dem: Mapping[tuple[str, int], float], horizon: int) -> dict:
    nodes = sorted({node for node, _t in dem})
    return {node: [float(dem.get((node, t), 0.0)) for t in range(horizon)] for node in nodes}


def _demand_from_json(obj: Mapping[str, list[float]]) -> dict[tuple[str, int], float]:
    return {(node, t): float(val) for node, series in obj.items() for t, val in enumerate(series)}


def instance_to_dict(inst: MarketInstance) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "name": inst.name,
        "horizon": inst.demand.horizon,
        "gas_nodes": [
            {"id": n.id, "pressure_min": n.pressure_min, "pressure_max": n.pressure_max}
            for n in inst.gas.nodes
        ],
        "pipelines": [
            {
                "tail": p.tail,
                "head": p.head,
                "weymouth": p.weymouth,
                "flow_min": p.flow_min,
                "flow_max": p.flow_max,
                "setpoints": list(p.setpoints),
            }
            for p in inst.gas.pipelines
        ],
        "compressors": [
            {"tail": a.tail, "head": a.head, "ratio_min": a.ratio_min, "ratio_max": a.ratio_max}
            for a in inst.gas.compressors
        ],
        "valves": [
            {"tail": a.tail, "head": a.head, "ratio_min": a.ratio_min, "ratio_max": a.ratio_max}
            for a in inst.gas.valves
        ],
        "buses": list(inst.elec.buses),
        "lines": [
            {"from": l.from_bus, "to": l.to_bus, "susceptance": l.susceptance, "capacity": l.capacity}
            for l in inst.elec.lines
        ],
        "gas_bids": [
            {
                "node": b.node,
                "steps": [[s.price, s.quantity] for s in b.steps],
                "min_total": b.min_total,
                "max_total": b.agg_max,
            }
            for b in inst.gas_bids
        ],
        "elec_bids": [
            {"node": b.node, "steps": [[s.price, s.quantity] for s in b.steps]} for b in inst.elec_bids
        ],
        "units": [
            {
                "supplier": u.supplier,
                "no_load_cost": u.no_load_cost,
                "startup_costs": list(u.startup_costs),
                "min_up": u.min_up,
                "min_down": u.min_down,
                "initial_state": u.initial_state,
                "initial_lock": u.initial_lock,
            }
            for u in inst.uc.units
        ],
        "gfpps": [
            {
                "supplier": l.supplier,
                "gas_node": l.gas_node,
                "heat_rate": l.heat_rate,
                "price_coeff": l.price_coeff,
            }
            for l in inst.coupling.links
        ],
        "gas_demand": _demand_to_json(inst.demand.gas, inst.demand.horizon),
        "elec_demand": _demand_to_json(inst.demand.elec, inst.demand.horizon),
        "shed_cost": {k: float(val) for k, val in sorted(inst.shed_cost.items())},
    }


def instance_from_dict(obj: Mapping) -> MarketInstance:
    if obj.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported instance schema {obj.get('schema')!r}, expected {SCHEMA_VERSION!r}")
    gas = GasNetwork(
        nodes=tuple(GasNode(n["id"], float(n["pressure_min"]), float(n["pressure_max"])) for n in obj["gas_nodes"]),
        pipelines=tuple(
            Pipeline(
                p["tail"],
                p["head"],
                float(p["weymouth"]),
                float(p["flow_min"]),
                float(p["flow_max"]),
                tuple(float(x) for x in p["setpoints"]),
            )
            for p in obj["pipelines"]
        ),
        compressors=tuple(
            Compressor(a["tail"], a["head"], float(a["ratio_min"]), float(a["ratio_max"]))
            for a in obj.get("compressors", [])
        ),
        valves=tuple(
            Valve(a["tail"], a["head"], float(a["ratio_min"]), float(a["ratio_max"]))
            for a in obj.get("valves", [])
        ),
    )
    elec = ElectricNetwork(
        buses=tuple(obj["buses"]),
        lines=tuple(
            Line(l["from"], l["to"], float(l["susceptance"]), float(l["capacity"])) for l in obj["lines"]
        ),
    )
    gas_bids = tuple(
        SupplyBid(
            node=b["node"],
            steps=tuple(BidStep(float(p), float(q)) for p, q in b["steps"]),
            kind=GAS,
            min_total=float(b.get("min_total", 0.0)),
            max_total=float(b["max_total"]) if b.get("max_total") is not None else None,
        )
        for b in obj["gas_bids"]
    )
    elec_bids = tuple(
        SupplyBid(node=b["node"], steps=tuple(BidStep(float(p), float(q)) for p, q in b["steps"]), kind=ELECTRIC)
        for b in obj["elec_bids"]
    )
    uc = UcParams(
        units=tuple(
            UcUnit(
                supplier=u["supplier"],
                no_load_cost=float(u["no_load_cost"]),
                startup_costs=tuple(float(c) for c in u["startup_costs"]),
                min_up=int(u["min_up"]),
                min_down=int(u["min_down"]),
                initial_state=int(u["initial_state"]),
                initial_lock=int(u["initial_lock"]),
            )
            for u in obj["units"]
        )
    )
    coupling = GfppCoupling(
        links=tuple(
            GfppLink(g["supplier"], g["gas_node"], float(g["heat_rate"]), float(g["price_coeff"]))
            for g in obj["gfpps"]
        )
    )
    demand = DemandProfile(
        horizon=int(obj["horizon"]),
        gas=_demand_from_json(obj["gas_demand"]),
        elec=_demand_from_json(obj["elec_demand"]),
    )
    return MarketInstance(
        name=obj.get("name", "instance"),
        gas=gas,
        elec=elec,
        gas_bids=gas_bids,
        elec_bids=elec_bids,
        uc=uc,
        coupling=coupling,
        demand=demand,
        shed_cost=dict(obj.get("shed_cost", {})),
    )


def save_instance(inst: MarketInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh, indent=1, sort_keys=False)
        fh.write("\n")


def load_instance(path) -> MarketInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
