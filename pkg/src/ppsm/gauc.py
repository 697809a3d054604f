"""Gas-aware unit commitment over the sequential market clearings.

The leader commits electricity bids anticipating (i) the electricity
dispatch those commitments induce, (ii) the gas offtake of the committed
gas-fired plants, and (iii) the gas prices the gas market then clears at,
which feed back through the bid-validity constraints: the last selected
bid of a gas-fired plant must price at or above its gas-driven marginal
cost 2 * alpha_j * y.

Two solution paths are provided.  ``solve_gauc_enumerate`` walks every
commitment satisfying the commitment logic, clears both markets per
candidate and keeps the best valid one; it is the reference semantics.
``solve_gauc_milp`` stacks the electricity and gas optimality systems into
one big-M MILP, with the middle level's independence from the gas level
making the two systems a plain stack rather than a nesting.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping

from .fidelity import CapExceeded, kkt_gm_constraints
from .markets import UNSOLVED, EmResult, GmResult, clear_em, clear_gm
from .model import MarketInstance, gfpp_gas_consumption
from .solver import (
    DEFAULT_TOLS,
    INF,
    INFEASIBLE,
    NODE_LIMIT,
    OPTIMAL,
    ComplementarityPair,
    LpProblem,
    ToleranceSet,
    linearize_complementarity,
    solve_milp,
)

VALIDITY_TOL = 1e-7


@dataclass
class Commitment:
    u: dict[tuple[str, int, int], int]
    v_up: dict[tuple[str, int], int] = field(default_factory=dict)
    v_dn: dict[tuple[str, int], int] = field(default_factory=dict)
    startup_cost: dict[tuple[str, int], float] = field(default_factory=dict)


@dataclass
class GaucResult:
    status: str
    objective: float | None = None
    commitment: Commitment | None = None
    em: EmResult | None = None
    gm: GmResult | None = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "commitment": None
            if self.commitment is None
            else {f"{j}|{b}|{t}": v for (j, b, t), v in sorted(self.commitment.u.items())},
            "em": None if self.em is None else self.em.to_dict(),
            "gm": None if self.gm is None else self.gm.to_dict(),
        }


def bid_validity_big_m(inst: MarketInstance) -> dict[str, float]:
    """Per-GFPP constants large enough to deactivate the validity rows.

    Nodal gas prices are capped by the dearest shed cost, so
    2 * alpha_j * kappa_max + max bid price provably dominates the
    right-hand side whenever no bid transition is active.
    """
    kappa_max = max((inst.shed_cost_at(n) for n in inst.gas.node_ids()), default=0.0)
    price_max = max((s.price for b in inst.elec_bids for s in b.steps), default=0.0)
    out = {}
    for link in inst.coupling.links:
        out[link.supplier] = max(2.0 * link.price_coeff * kappa_max + price_max, 1.0)
    return out


def check_bid_validity(
    u: Mapping[tuple[str, int, int], int],
    prices: Mapping[tuple[str, int], float],
    inst: MarketInstance,
    big_m: Mapping[str, float] | None = None,
) -> list[tuple[str, int, int, float, float]]:
    """Evaluate every bid-validity inequality; returns (j, t, bid, lhs, rhs) misses.

    Rows exist for transitions between consecutive priced bids, i.e. the
    candidate last-selected bid ranges over 1..B-1 (a plant running with no
    priced bid, or with all of them, has no transition row).
    """
    mm = big_m or bid_validity_big_m(inst)
    violations = []
    for link in sorted(inst.coupling.links, key=lambda l: l.supplier):
        bid = inst.elec_bid_at(link.supplier)
        if bid is None:
            continue
        mj = mm[link.supplier]
        for t in range(inst.horizon):
            y = prices.get((link.gas_node, t), 0.0)
            for s in range(1, len(bid.steps)):
                trans = u.get((link.supplier, s, t), 0) - u.get((link.supplier, s + 1, t), 0)
                lhs = (bid.steps[s - 1].price - mj) * trans
                rhs = 2.0 * link.price_coeff * y - mj
                if lhs < rhs - VALIDITY_TOL:
                    violations.append((link.supplier, t, s, lhs, rhs))
    return violations


def _u0_at(traj: list[int], t: int, initial: int) -> int:
    return initial if t < 0 else traj[t]


def _uc_logic_ok(unit, traj: list[int], T: int) -> bool:
    lock = unit.initial_lock
    for t in range(min(lock, T)):
        if traj[t] != unit.initial_state:
            return False
    v_up = []
    for t in range(T):
        prev = _u0_at(traj, t - 1, unit.initial_state)
        v_up.append(max(traj[t] - prev, 0))
    for t in range(lock, T):
        if sum(v_up[k] for k in range(max(0, t - unit.min_up + 1), t + 1)) > traj[t]:
            return False
        if sum(v_up[k] for k in range(max(0, t - unit.min_down + 1), t + 1)) > 1 - _u0_at(
            traj, t - unit.min_down, unit.initial_state
        ):
            return False
    return True


def startup_cost(unit, traj: list[int], t: int) -> float:
    """Tight start-up charge at t: the dearest offline-duration class activated."""
    r = 0.0
    for h, cost in enumerate(unit.startup_costs, start=1):
        expr = traj[t] - sum(_u0_at(traj, k, unit.initial_state) for k in range(t - h, t))
        r = max(r, cost * expr)
    return r


def _commitment_from_levels(inst, levels: Mapping[str, tuple[int, ...]]) -> Commitment:
    u: dict[tuple[str, int, int], int] = {}
    v_up, v_dn, r = {}, {}, {}
    for unit in inst.uc.units:
        j = unit.supplier
        steps = len(inst.elec_bid_at(j).steps)
        traj = [1 if lvl >= 1 else 0 for lvl in levels[j]]
        for t, lvl in enumerate(levels[j]):
            u[(j, 0, t)] = traj[t]
            for b in range(1, steps + 1):
                u[(j, b, t)] = 1 if lvl >= b + 1 else 0
            prev = _u0_at(traj, t - 1, unit.initial_state)
            v_up[(j, t)] = max(traj[t] - prev, 0)
            v_dn[(j, t)] = max(prev - traj[t], 0)
            r[(j, t)] = startup_cost(unit, traj, t)
    return Commitment(u, v_up, v_dn, r)


def commitment_cost(inst: MarketInstance, c: Commitment) -> float:
    val = 0.0
    for unit in inst.uc.units:
        for t in range(inst.horizon):
            val += unit.no_load_cost * c.u[(unit.supplier, 0, t)] + c.startup_cost[(unit.supplier, t)]
    return val


def solve_gauc_enumerate(
    inst: MarketInstance,
    cap: int = 1 << 16,
    tols: ToleranceSet = DEFAULT_TOLS,
    time_limit: float | None = None,
) -> GaucResult:
    """Reference solution by exhaustive sweep of the commitment space."""
    T = inst.horizon
    units = sorted(inst.uc.units, key=lambda un: un.supplier)
    level_counts = [len(inst.elec_bid_at(un.supplier).steps) + 2 for un in units]
    total = 1
    for n in level_counts:
        total *= n**T
    if total > cap:
        raise CapExceeded(f"{total} candidate commitments exceed the cap of {cap}")

    per_unit: list[list[tuple[int, ...]]] = []
    for un, n in zip(units, level_counts):
        trajs = [
            lv
            for lv in product(range(n), repeat=T)
            if _uc_logic_ok(un, [1 if x >= 1 else 0 for x in lv], T)
        ]
        per_unit.append(trajs)

    start = time.monotonic()
    best_key = None
    best: GaucResult | None = None
    for combo in product(*per_unit):
        if time_limit is not None and time.monotonic() - start > time_limit:
            return GaucResult(status=UNSOLVED)
        levels = {un.supplier: lv for un, lv in zip(units, combo)}
        commitment = _commitment_from_levels(inst, levels)
        em = clear_em(inst, commitment.u, tols)
        if em.status != OPTIMAL:
            continue
        gfpp_dispatch = {
            k: v for k, v in em.dispatch.items() if k[0] in inst.coupling.by_supplier()
        }
        gamma = gfpp_gas_consumption(gfpp_dispatch, inst.coupling)
        gm = clear_gm(inst, inst.demand.gas, gamma, tols)
        if gm.status != OPTIMAL:
            continue
        if check_bid_validity(commitment.u, gm.prices, inst):
            continue
        obj = commitment_cost(inst, commitment) + em.objective
        key = (round(obj, 9), tuple(lv for lv in combo))
        if best_key is None or key < best_key:
            best_key = key
            best = GaucResult(OPTIMAL, obj, commitment, em, gm)
    if best is None:
        return GaucResult(status=INFEASIBLE)
    return best


# ---------------------------------------------------------------------------
# Single-level MILP
# ---------------------------------------------------------------------------


def solve_gauc_milp(
    inst: MarketInstance,
    tols: ToleranceSet = DEFAULT_TOLS,
    m_dual: float = 1e4,
    dump_file: str | None = None,
) -> GaucResult:
    """Solve the commitment problem as one mixed-integer program.

    Commitment logic, the electricity dispatch problem with its full
    optimality system, the gas-market optimality system (offtake tied
    affinely to the dispatch of gas-fired plants) and the bid-validity
    rows are stacked into a single problem; complementarity is linearized
    with the Fortuny-Amat construction.
    """
    T = inst.horizon
    p = LpProblem(name=f"gauc[{inst.name}]")
    binaries: set[str] = set()
    pairs: list[ComplementarityPair] = []
    obj: dict[str, float] = {}

    units = sorted(inst.uc.units, key=lambda un: un.supplier)

    # Commitment variables and logic
    for un in units:
        j = un.supplier
        steps = len(inst.elec_bid_at(j).steps)
        for t in range(T):
            for b in range(steps + 1):
                binaries.add(p.add_var(f"u[{j},{b},{t}]", 0.0, 1.0))
            binaries.add(p.add_var(f"vup[{j},{t}]", 0.0, 1.0))
            binaries.add(p.add_var(f"vdn[{j},{t}]", 0.0, 1.0))
            p.add_var(f"r[{j},{t}]", 0.0, INF)
            obj[f"u[{j},0,{t}]"] = un.no_load_cost
            obj[f"r[{j},{t}]"] = 1.0
        for t in range(T):
            for h, cost in enumerate(un.startup_costs, start=1):
                coeffs = {f"r[{j},{t}]": 1.0, f"u[{j},0,{t}]": -cost}
                rhs = 0.0
                for k in range(t - h, t):
                    if k < 0:
                        rhs -= cost * un.initial_state
                    else:
                        coeffs[f"u[{j},0,{k}]"] = coeffs.get(f"u[{j},0,{k}]", 0.0) + cost
                p.add_constr(f"uc_startup[{j},{t},{h}]", coeffs, ">=", rhs)
            if t < un.initial_lock:
                p.add_constr(f"uc_lock[{j},{t}]", {f"u[{j},0,{t}]": 1.0}, "=", un.initial_state)
            prev = {f"u[{j},0,{t-1}]": 1.0} if t > 0 else {}
            rhs0 = 0.0 if t > 0 else -float(un.initial_state)
            p.add_constr(
                f"uc_delta[{j},{t}]",
                {f"vup[{j},{t}]": 1.0, f"vdn[{j},{t}]": -1.0, f"u[{j},0,{t}]": -1.0, **prev},
                "=",
                rhs0,
            )
            if t >= un.initial_lock:
                up = {f"vup[{j},{k}]": 1.0 for k in range(max(0, t - un.min_up + 1), t + 1)}
                up[f"u[{j},0,{t}]"] = -1.0
                p.add_constr(f"uc_minup[{j},{t}]", up, "<=", 0.0)
                dn = {f"vup[{j},{k}]": 1.0 for k in range(max(0, t - un.min_down + 1), t + 1)}
                rhs_dn = 1.0
                if t - un.min_down < 0:
                    rhs_dn -= un.initial_state
                else:
                    dn[f"u[{j},0,{t - un.min_down}]"] = 1.0
                p.add_constr(f"uc_mindown[{j},{t}]", dn, "<=", rhs_dn)
            for b in range(1, steps + 1):
                p.add_constr(
                    f"uc_order[{j},{b},{t}]",
                    {f"u[{j},{b},{t}]": 1.0, f"u[{j},{b-1},{t}]": -1.0},
                    "<=",
                    0.0,
                )

    # Electricity dispatch: primal, duals, stationarity, complementarity
    for t in range(T):
        for bid in inst.elec_bids:
            for b, step in enumerate(bid.steps):
                name = p.add_var(f"se[{bid.node},{b},{t}]", 0.0, step.quantity)
                obj[name] = step.price
        for bus in inst.elec.buses:
            p.add_var(f"theta[{bus},{t}]", -INF, INF)
            p.add_var(f"em_y[{bus},{t}]", -INF, INF)
        for i, _line in enumerate(inst.elec.lines):
            p.add_var(f"em_du_line_hi[l{i},{t}]", 0.0, INF)
            p.add_var(f"em_du_line_lo[l{i},{t}]", 0.0, INF)
        for bid in inst.elec_bids:
            for b in range(len(bid.steps)):
                p.add_var(f"em_du_bid_hi[{bid.node},{b},{t}]", 0.0, INF)
                p.add_var(f"em_du_bid_lo[{bid.node},{b},{t}]", 0.0, INF)

    for t in range(T):
        for bus in inst.elec.buses:
            coeffs: dict[str, float] = {}
            bid = inst.elec_bid_at(bus)
            if bid is not None:
                for b in range(len(bid.steps)):
                    coeffs[f"se[{bus},{b},{t}]"] = 1.0
            for line in inst.elec.lines:
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
            p.add_constr(f"em_line_hi[l{i},{t}]", flow, "<=", line.capacity)
            p.add_constr(f"em_line_lo[l{i},{t}]", flow, ">=", -line.capacity)
            pairs.append(
                ComplementarityPair(f"em_du_line_hi[l{i},{t}]", f"em_line_hi[l{i},{t}]", 2.0 * line.capacity + 1.0, m_dual)
            )
            pairs.append(
                ComplementarityPair(f"em_du_line_lo[l{i},{t}]", f"em_line_lo[l{i},{t}]", 2.0 * line.capacity + 1.0, m_dual)
            )
        for bid in inst.elec_bids:
            jb = bid.node
            for b, step in enumerate(bid.steps):
                p.add_constr(
                    f"em_bid_hi[{jb},{b},{t}]",
                    {f"se[{jb},{b},{t}]": 1.0, f"u[{jb},{b+1},{t}]": -step.quantity},
                    "<=",
                    0.0,
                )
                lo_coeffs = {f"se[{jb},{b},{t}]": 1.0}
                if b + 1 < len(bid.steps):
                    lo_coeffs[f"u[{jb},{b+2},{t}]"] = -step.quantity
                p.add_constr(f"em_bid_lo[{jb},{b},{t}]", lo_coeffs, ">=", 0.0)
                pairs.append(
                    ComplementarityPair(f"em_du_bid_hi[{jb},{b},{t}]", f"em_bid_hi[{jb},{b},{t}]", step.quantity + 1.0, m_dual)
                )
                pairs.append(
                    ComplementarityPair(f"em_du_bid_lo[{jb},{b},{t}]", f"em_bid_lo[{jb},{b},{t}]", step.quantity + 1.0, m_dual)
                )
                p.add_constr(
                    f"em_st_se[{jb},{b},{t}]",
                    {
                        f"em_y[{jb},{t}]": -1.0,
                        f"em_du_bid_hi[{jb},{b},{t}]": 1.0,
                        f"em_du_bid_lo[{jb},{b},{t}]": -1.0,
                    },
                    "=",
                    -step.price,
                )
        for bus in inst.elec.buses:
            coeffs = {}
            for i, line in enumerate(inst.elec.lines):
                for end, sign in ((line.from_bus, 1.0), (line.to_bus, -1.0)):
                    if end != bus:
                        continue
                    bsus = line.susceptance
                    coeffs[f"em_du_line_hi[l{i},{t}]"] = coeffs.get(f"em_du_line_hi[l{i},{t}]", 0.0) + sign * bsus
                    coeffs[f"em_du_line_lo[l{i},{t}]"] = coeffs.get(f"em_du_line_lo[l{i},{t}]", 0.0) - sign * bsus
                    other = line.to_bus if end == line.from_bus else line.from_bus
                    coeffs[f"em_y[{bus},{t}]"] = coeffs.get(f"em_y[{bus},{t}]", 0.0) + sign * sign * bsus
                    coeffs[f"em_y[{other},{t}]"] = coeffs.get(f"em_y[{other},{t}]", 0.0) - sign * sign * bsus
            if coeffs:
                p.add_constr(f"em_st_theta[{bus},{t}]", coeffs, "=", 0.0)

    # Gas-market optimality system with offtake tied to GFPP dispatch
    gamma_vars: dict[tuple[str, int], dict[str, float]] = {}
    for link in inst.coupling.links:
        bid = inst.elec_bid_at(link.supplier)
        for t in range(T):
            terms = gamma_vars.setdefault((link.gas_node, t), {})
            for b in range(len(bid.steps)):
                terms[f"se[{link.supplier},{b},{t}]"] = terms.get(f"se[{link.supplier},{b},{t}]", 0.0) + link.heat_rate
    system = kkt_gm_constraints(
        inst, {}, inst.demand.gas, fixed=True, m_dual=m_dual, problem=p, gamma_vars=gamma_vars
    )
    pairs.extend(system.pairs)

    # Bid-validity rows tying commitments to gas prices
    big_m = bid_validity_big_m(inst)
    for link in sorted(inst.coupling.links, key=lambda l: l.supplier):
        j = link.supplier
        bid = inst.elec_bid_at(j)
        mj = big_m[j]
        for t in range(T):
            for s in range(1, len(bid.steps)):
                price = bid.steps[s - 1].price
                p.add_constr(
                    f"uc_validity[{j},{s},{t}]",
                    {
                        f"u[{j},{s},{t}]": price - mj,
                        f"u[{j},{s+1},{t}]": -(price - mj),
                        f"y[{link.gas_node},{t}]": -2.0 * link.price_coeff,
                    },
                    ">=",
                    -mj,
                )

    p.set_objective(obj)
    milp = linearize_complementarity(pairs, p, margin=0.0)
    milp.binaries |= binaries
    sol = solve_milp(milp, tols, dump_file=dump_file)
    if sol.status == NODE_LIMIT:
        return GaucResult(status=UNSOLVED)
    if sol.status != OPTIMAL:
        return GaucResult(status=sol.status)

    u: dict[tuple[str, int, int], int] = {}
    v_up, v_dn, rr = {}, {}, {}
    for un in units:
        j = un.supplier
        steps = len(inst.elec_bid_at(j).steps)
        for t in range(T):
            for b in range(steps + 1):
                u[(j, b, t)] = int(round(sol.value(f"u[{j},{b},{t}]")))
            v_up[(j, t)] = int(round(sol.value(f"vup[{j},{t}]")))
            v_dn[(j, t)] = int(round(sol.value(f"vdn[{j},{t}]")))
            rr[(j, t)] = sol.value(f"r[{j},{t}]")
    commitment = Commitment(u, v_up, v_dn, rr)

    em = EmResult(status=OPTIMAL)
    em_obj = 0.0
    for t in range(T):
        for bid in inst.elec_bids:
            for b, step in enumerate(bid.steps):
                x = sol.value(f"se[{bid.node},{b},{t}]")
                em.dispatch[(bid.node, b, t)] = x
                em_obj += step.price * x
        for bus in inst.elec.buses:
            em.angles[(bus, t)] = sol.value(f"theta[{bus},{t}]")
    em.objective = em_obj

    gm = GmResult(status=OPTIMAL)
    gm.objective = sum(coef * sol.value(name) for name, coef in system.gm_cost.items())
    for t in range(T):
        for node in sorted(inst.gas.node_ids()):
            bid = inst.gas_bid_at(node)
            if bid is not None:
                for b in range(len(bid.steps)):
                    gm.dispatch[(node, b, t)] = sol.value(f"sg[{node},{b},{t}]")
            gm.pressures[(node, t)] = sol.value(f"pi[{node},{t}]")
            gm.prices[(node, t)] = sol.value(f"y[{node},{t}]")
            if (node, t) in inst.demand.gas:
                gm.shed[(node, t)] = sol.value(f"q[{node},{t}]")
        for arc_id, _arc in inst.gas.arcs():
            gm.flows[(arc_id, t)] = sol.value(f"phi[{arc_id},{t}]")

    return GaucResult(OPTIMAL, sol.objective, commitment, em, gm)
