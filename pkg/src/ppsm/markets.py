"""Electricity-market (EM) and gas-market (GM) clearing problems.

Both markets are built as LPs over one instance and cleared independently
per period (no line-pack or ramping couples periods here; the horizon only
matters to the unit commitment).  The GM exposes nodal prices as the duals
of the nodal balance rows, i.e. the marginal system cost of one extra MWh
of demand at that node.

Sign conventions follow the appendix formulation this module implements:
the balance at node j reads  supply + shed - net_inflow(head) + net_outflow(tail)
equal to demand + GFPP offtake, and pipeline flows may be negative within
their symmetric bounds.  An instance needing the opposite orientation should
negate its Weymouth coefficients and flow bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .model import MarketInstance
from .solver import (
    DEFAULT_TOLS,
    INF,
    ITERATION_LIMIT,
    OPTIMAL,
    LpProblem,
    LpSolution,
    ToleranceSet,
    solve_lp,
)

UNSOLVED = "unsolved"


def gm_demand_keys(demand: Mapping[tuple[str, int], float]) -> list[tuple[str, int]]:
    return sorted(demand.keys())


@dataclass
class GmResult:
    status: str
    dispatch: dict[tuple[str, int, int], float] = field(default_factory=dict)
    shed: dict[tuple[str, int], float] = field(default_factory=dict)
    flows: dict[tuple[str, int], float] = field(default_factory=dict)
    pressures: dict[tuple[str, int], float] = field(default_factory=dict)
    prices: dict[tuple[str, int], float] = field(default_factory=dict)
    objective: float | None = None

    def to_dict(self) -> dict:
        enc = lambda m: {"|".join(map(str, k)): v for k, v in sorted(m.items())}
        return {
            "status": self.status,
            "objective": self.objective,
            "dispatch": enc(self.dispatch),
            "shed": enc(self.shed),
            "flows": enc(self.flows),
            "pressures": enc(self.pressures),
            "prices": enc(self.prices),
        }


@dataclass
class EmResult:
    status: str
    dispatch: dict[tuple[str, int, int], float] = field(default_factory=dict)
    angles: dict[tuple[str, int], float] = field(default_factory=dict)
    objective: float | None = None

    def to_dict(self) -> dict:
        enc = lambda m: {"|".join(map(str, k)): v for k, v in sorted(m.items())}
        return {
            "status": self.status,
            "objective": self.objective,
            "dispatch": enc(self.dispatch),
            "angles": enc(self.angles),
        }


def build_gm(
    inst: MarketInstance,
    demand: Mapping[tuple[str, int], float],
    gamma: Mapping[tuple[str, int], float] | None = None,
) -> LpProblem:
    """Gas-market LP for a given demand map and GFPP offtake map.

    Shed variables exist exactly at the keyed demand entries, with upper
    bound max(d, 0): a negative (obfuscated) demand stays in the balance as
    written but can not be shed away.
    """
    gamma = gamma or {}
    T = inst.horizon
    p = LpProblem(name=f"gm[{inst.name}]")
    obj: dict[str, float] = {}
    nodes = sorted(inst.gas.node_ids())
    arcs = inst.gas.arcs()

    for t in range(T):
        for node in nodes:
            bid = inst.gas_bid_at(node)
            if bid is not None:
                for b, step in enumerate(bid.steps):
                    name = p.add_var(f"sg[{node},{b},{t}]", 0.0, step.quantity)
                    obj[name] = step.price
            p.add_var(f"pi[{node},{t}]", *_pressure_bounds(inst, node))
        for arc_id, arc in arcs:
            if arc_id.startswith("p"):
                p.add_var(f"phi[{arc_id},{t}]", arc.flow_min, arc.flow_max)
            else:
                p.add_var(f"phi[{arc_id},{t}]", -INF, INF)
        for node, tt in gm_demand_keys(demand):
            if tt == t:
                name = p.add_var(f"q[{node},{t}]", 0.0, max(demand[(node, t)], 0.0))
                obj[name] = inst.shed_cost_at(node)

    for t in range(T):
        for node in nodes:
            coeffs: dict[str, float] = {}
            bid = inst.gas_bid_at(node)
            if bid is not None:
                for b in range(len(bid.steps)):
                    coeffs[f"sg[{node},{b},{t}]"] = 1.0
            if (node, t) in demand:
                coeffs[f"q[{node},{t}]"] = 1.0
            for arc_id, arc in arcs:
                if arc.head == node:
                    coeffs[f"phi[{arc_id},{t}]"] = coeffs.get(f"phi[{arc_id},{t}]", 0.0) - 1.0
                if arc.tail == node:
                    coeffs[f"phi[{arc_id},{t}]"] = coeffs.get(f"phi[{arc_id},{t}]", 0.0) + 1.0
            rhs = demand.get((node, t), 0.0) + gamma.get((node, t), 0.0)
            p.add_constr(f"gbal[{node},{t}]", coeffs, "=", rhs)
            if bid is not None:
                agg = {f"sg[{node},{b},{t}]": 1.0 for b in range(len(bid.steps))}
                p.add_constr(f"gagg_lo[{node},{t}]", agg, ">=", bid.min_total)
                p.add_constr(f"gagg_hi[{node},{t}]", agg, "<=", bid.agg_max)
        for arc_id, arc in arcs:
            if arc_id.startswith("p"):
                for k, phik in enumerate(arc.setpoints):
                    p.add_constr(
                        f"gcut[{arc_id},{k},{t}]",
                        {
                            f"pi[{arc.head},{t}]": 1.0,
                            f"pi[{arc.tail},{t}]": -1.0,
                            f"phi[{arc_id},{t}]": -2.0 * arc.weymouth * phik,
                        },
                        ">=",
                        -(phik**2),
                    )
            else:
                p.add_constr(
                    f"gratio_lo[{arc_id},{t}]",
                    {f"pi[{arc.tail},{t}]": 1.0, f"pi[{arc.head},{t}]": -arc.ratio_min},
                    ">=",
                    0.0,
                )
                p.add_constr(
                    f"gratio_hi[{arc_id},{t}]",
                    {f"pi[{arc.tail},{t}]": 1.0, f"pi[{arc.head},{t}]": -arc.ratio_max},
                    "<=",
                    0.0,
                )
    p.set_objective(obj)
    return p


def _pressure_bounds(inst: MarketInstance, node: str) -> tuple[float, float]:
    for n in inst.gas.nodes:
        if n.id == node:
            return n.pressure_min, n.pressure_max
    raise KeyError(node)


def clear_gm(
    inst: MarketInstance,
    demand: Mapping[tuple[str, int], float],
    gamma: Mapping[tuple[str, int], float] | None = None,
    tols: ToleranceSet = DEFAULT_TOLS,
) -> GmResult:
    p = build_gm(inst, demand, gamma)
    sol = solve_lp(p, tols)
    if sol.status == ITERATION_LIMIT:
        return GmResult(status=UNSOLVED)
    if sol.status != OPTIMAL:
        return GmResult(status=sol.status)
    T = inst.horizon
    out = GmResult(status=OPTIMAL, objective=sol.objective)
    for t in range(T):
        for node in sorted(inst.gas.node_ids()):
            bid = inst.gas_bid_at(node)
            if bid is not None:
                for b in range(len(bid.steps)):
                    out.dispatch[(node, b, t)] = sol.value(f"sg[{node},{b},{t}]")
            out.pressures[(node, t)] = sol.value(f"pi[{node},{t}]")
            out.prices[(node, t)] = sol.duals.get(f"gbal[{node},{t}]", 0.0)
            if (node, t) in demand:
                out.shed[(node, t)] = sol.value(f"q[{node},{t}]")
        for arc_id, _arc in inst.gas.arcs():
            out.flows[(arc_id, t)] = sol.value(f"phi[{arc_id},{t}]")
    return out


def gm_objective_value(inst: MarketInstance, result: GmResult) -> float:
    """Recompute c.s + kappa.q from the result fields (consistency checks)."""
    val = 0.0
    for (node, b, _t), x in result.dispatch.items():
        val += inst.gas_bid_at(node).steps[b].price * x
    for (node, _t), q in result.shed.items():
        val += inst.shed_cost_at(node) * q
    return val


# ---------------------------------------------------------------------------
# Electricity market
# ---------------------------------------------------------------------------


def validate_commitment(inst: MarketInstance, u: Mapping[tuple[str, int, int], int]) -> None:
    """Commitment maps are 0/1 over (supplier, level, t) with nested levels."""
    for (j, b, t), val in u.items():
        if val not in (0, 1):
            raise ValueError(f"commitment u[{j},{b},{t}] must be 0/1, got {val}")
        if b > 0 and val > u.get((j, b - 1, t), 0):
            raise ValueError(f"commitment violates bid ordering at u[{j},{b},{t}]")


def build_em(inst: MarketInstance, u: Mapping[tuple[str, int, int], int]) -> LpProblem:
    """Electricity dispatch LP under a fixed commitment.

    Level b of the commitment selects bid step b-1 (level 0 is the on/off
    state).  A selected level forces the previous step to its full cap,
    mirroring the block-bid selection rule of the commitment problem.
    """
    validate_commitment(inst, u)
    T = inst.horizon
    p = LpProblem(name=f"em[{inst.name}]")
    obj: dict[str, float] = {}
    for t in range(T):
        for bid in inst.elec_bids:
            for b, step in enumerate(bid.steps):
                selected = u.get((bid.node, b + 1, t), 0)
                next_selected = u.get((bid.node, b + 2, t), 0) if b + 1 < len(bid.steps) else 0
                lo = step.quantity * next_selected
                hi = step.quantity * selected
                name = p.add_var(f"se[{bid.node},{b},{t}]", lo, hi)
                obj[name] = step.price
        for bus in inst.elec.buses:
            p.add_var(f"theta[{bus},{t}]", -INF, INF)
    for t in range(T):
        for bus in inst.elec.buses:
            coeffs: dict[str, float] = {}
            bid = inst.elec_bid_at(bus)
            if bid is not None:
                for b in range(len(bid.steps)):
                    coeffs[f"se[{bus},{b},{t}]"] = 1.0
            for i, line in enumerate(inst.elec.lines):
                if line.from_bus == bus:
                    coeffs[f"theta[{line.from_bus},{t}]"] = coeffs.get(f"theta[{line.from_bus},{t}]", 0.0) - line.susceptance
                    coeffs[f"theta[{line.to_bus},{t}]"] = coeffs.get(f"theta[{line.to_bus},{t}]", 0.0) + line.susceptance
                if line.to_bus == bus:
                    coeffs[f"theta[{line.from_bus},{t}]"] = coeffs.get(f"theta[{line.from_bus},{t}]", 0.0) + line.susceptance
                    coeffs[f"theta[{line.to_bus},{t}]"] = coeffs.get(f"theta[{line.to_bus},{t}]", 0.0) - line.susceptance
            p.add_constr(f"ebal[{bus},{t}]", coeffs, "=", inst.demand.elec.get((bus, t), 0.0))
        for i, line in enumerate(inst.elec.lines):
            flow = {
                f"theta[{line.from_bus},{t}]": line.susceptance,
                f"theta[{line.to_bus},{t}]": -line.susceptance,
            }
            p.add_constr(f"eline_hi[l{i},{t}]", flow, "<=", line.capacity)
            p.add_constr(f"eline_lo[l{i},{t}]", flow, ">=", -line.capacity)
    p.set_objective(obj)
    return p


def clear_em(
    inst: MarketInstance,
    u: Mapping[tuple[str, int, int], int],
    tols: ToleranceSet = DEFAULT_TOLS,
) -> EmResult:
    p = build_em(inst, u)
    sol = solve_lp(p, tols)
    if sol.status == ITERATION_LIMIT:
        return EmResult(status=UNSOLVED)
    if sol.status != OPTIMAL:
        return EmResult(status=sol.status)
    out = EmResult(status=OPTIMAL, objective=sol.objective)
    for t in range(inst.horizon):
        for bid in inst.elec_bids:
            for b in range(len(bid.steps)):
                out.dispatch[(bid.node, b, t)] = sol.value(f"se[{bid.node},{b},{t}]")
        for bus in inst.elec.buses:
            out.angles[(bus, t)] = sol.value(f"theta[{bus},{t}]")
    return out
