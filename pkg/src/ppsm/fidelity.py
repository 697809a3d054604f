"""Fidelity post-processing of obfuscated gas demand profiles.

Both post-processing modes search for a released profile d_hat as close as
possible to the noisy input d_tilde, subject to the released profile being
a demand vector for which the gas market clears consistently (enforced by
embedding the market's full first-order optimality system) and to a band
tying the induced outcome to public baseline data:

* primal mode   |gm_cost(d_hat) - target_cost| <= eta        (a $ band)
* dual mode     |price_j,t(d_hat) - target_price_j,t| <= eta (per node, $/MWh)

The optimality system is linearized with the big-M disjunctions from the
solver module, giving one MILP per release.  In dual mode a small strict-
complementarity margin keeps the solution off degenerate faces, so the
price band survives an independent re-clearing of the market.

``fidelity_oracle`` re-solves the same problem by brute force over all
active-set patterns and is the reference the MILP path is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .markets import UNSOLVED, build_gm
from .model import MarketInstance, gfpp_gas_consumption
from .privacy import ObfuscatedProfile
from .solver import (
    DEFAULT_TOLS,
    INF,
    NODE_LIMIT,
    OPTIMAL,
    ComplementarityPair,
    LpProblem,
    MilpProblem,
    ToleranceSet,
    linearize_complementarity,
    row_activity_bounds,
    solve_lp,
    solve_milp,
)

PRIMAL = "primal"
DUAL = "dual"
FIDELITY_INFEASIBLE = "infeasible"


class CapExceeded(RuntimeError):
    """Brute-force enumeration would exceed its configured cap."""


@dataclass(frozen=True)
class FidelityParams:
    """Knobs of the post-processing step.

    ``eta`` is an absolute band: a $ width in primal mode, a $/MWh width in
    dual mode (scalar, or one value per (node, t) key).  ``hist_dispatch``
    is the public historical GFPP dispatch keyed (supplier, step, t) that
    stands in for the not-yet-cleared electricity outcome.  ``margin`` is
    the strict-complementarity margin used by dual mode.
    """

    eta: float | Mapping[tuple[str, int], float]
    hist_dispatch: Mapping[tuple[str, int, int], float] = field(default_factory=dict)
    norm: str = "l1"  # "l1" (exact) or "l2" (piecewise-linear overestimator)
    margin: float = 1e-5
    m_dual: float = 1e4
    l2_pieces: int = 16
    l2_span: float | None = None

    def eta_at(self, key: tuple[str, int]) -> float:
        if isinstance(self.eta, Mapping):
            return float(self.eta[key])
        return float(self.eta)

    def __post_init__(self):
        etas = self.eta.values() if isinstance(self.eta, Mapping) else [self.eta]
        if any(e < 0 for e in etas):
            raise ValueError("fidelity band eta must be non-negative")
        if self.norm not in ("l1", "l2"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.l2_pieces < 2 or self.l2_pieces % 2:
            raise ValueError("l2_pieces must be even and at least 2")


@dataclass
class KktSystem:
    """First-order optimality system of the gas market as one LP skeleton.

    ``problem`` holds the primal rows, dual variables and stationarity
    equalities; ``pairs`` the complementarity conditions still awaiting
    linearization.  ``demand_vars`` maps profile keys to the released-demand
    decision variables (empty when the demand was folded in as constants).
    """

    problem: LpProblem
    pairs: list[ComplementarityPair]
    demand_vars: dict[tuple[str, int], str]
    price_vars: dict[tuple[str, int], str]
    gm_cost: dict[str, float]


def kkt_gm_constraints(
    inst: MarketInstance,
    gamma: Mapping[tuple[str, int], float],
    demand: Mapping[tuple[str, int], float],
    fixed: bool = False,
    m_dual: float = 1e4,
    problem: LpProblem | None = None,
    gamma_vars: Mapping[tuple[str, int], Mapping[str, float]] | None = None,
) -> KktSystem:
    """Build the gas-market optimality system over an existing or fresh LP.

    With ``fixed=True`` the demand map is folded in as constants, mirroring
    the plain clearing problem exactly (shed caps clamp negative entries at
    zero).  Otherwise one released-demand variable per profile key is
    created, constrained non-negative, entering the balance and the shed
    cap.  ``gamma_vars`` optionally adds variable offtake terms (used when
    the dispatch feeding the gas market is itself a decision upstream).
    """
    p = problem if problem is not None else LpProblem(name=f"gm_kkt[{inst.name}]")
    T = inst.horizon
    nodes = sorted(inst.gas.node_ids())
    arcs = inst.gas.arcs()
    demand_keys = sorted(demand.keys())
    supply_cap = sum(b.agg_max for b in inst.gas_bids)
    pipe_cap = sum(max(abs(a.flow_min), abs(a.flow_max)) for a in inst.gas.pipelines)

    demand_vars: dict[tuple[str, int], str] = {}
    price_vars: dict[tuple[str, int], str] = {}
    gm_cost: dict[str, float] = {}
    pairs: list[ComplementarityPair] = []

    def pbounds(node):
        for n in inst.gas.nodes:
            if n.id == node:
                return n.pressure_min, n.pressure_max
        raise KeyError(node)

    # --- variables -------------------------------------------------------
    for t in range(T):
        for node in nodes:
            bid = inst.gas_bid_at(node)
            if bid is not None:
                for b, step in enumerate(bid.steps):
                    name = p.add_var(f"sg[{node},{b},{t}]", 0.0, step.quantity)
                    gm_cost[name] = step.price
            p.add_var(f"pi[{node},{t}]", *pbounds(node))
            price_vars[(node, t)] = p.add_var(f"y[{node},{t}]", -INF, INF)
        for arc_id, arc in arcs:
            if arc_id.startswith("p"):
                p.add_var(f"phi[{arc_id},{t}]", arc.flow_min, arc.flow_max)
            else:
                p.add_var(f"phi[{arc_id},{t}]", -INF, INF)
    for node, t in demand_keys:
        cap = max(demand[(node, t)], 0.0) if fixed else max(demand[(node, t)], 0.0) + supply_cap + pipe_cap + 10.0
        name = p.add_var(f"q[{node},{t}]", 0.0, cap)
        gm_cost[name] = inst.shed_cost_at(node)
        if not fixed:
            demand_vars[(node, t)] = p.add_var(f"dhat[{node},{t}]", 0.0, cap)

    # --- primal rows -----------------------------------------------------
    for t in range(T):
        for node in nodes:
            coeffs: dict[str, float] = {}
            rhs = gamma.get((node, t), 0.0)
            bid = inst.gas_bid_at(node)
            if bid is not None:
                for b in range(len(bid.steps)):
                    coeffs[f"sg[{node},{b},{t}]"] = 1.0
            if (node, t) in demand:
                coeffs[f"q[{node},{t}]"] = 1.0
                if fixed:
                    rhs += demand[(node, t)]
                else:
                    coeffs[f"dhat[{node},{t}]"] = -1.0
            for arc_id, arc in arcs:
                if arc.head == node:
                    coeffs[f"phi[{arc_id},{t}]"] = coeffs.get(f"phi[{arc_id},{t}]", 0.0) - 1.0
                if arc.tail == node:
                    coeffs[f"phi[{arc_id},{t}]"] = coeffs.get(f"phi[{arc_id},{t}]", 0.0) + 1.0
            if gamma_vars and (node, t) in gamma_vars:
                for vname, coef in gamma_vars[(node, t)].items():
                    coeffs[vname] = coeffs.get(vname, 0.0) - coef
            p.add_constr(f"gbal[{node},{t}]", coeffs, "=", rhs)

    def pair(dual_name: str, row_name: str):
        con = p.constraint(row_name)
        if con.relation == "<=":
            slack = {k: -v for k, v in con.coeffs.items()}
            const = con.rhs
        else:
            slack = dict(con.coeffs)
            const = -con.rhs
        lo, hi = row_activity_bounds(p, slack)
        m_primal = max(hi + const, 1.0)
        pairs.append(ComplementarityPair(dual_name, row_name, m_primal, m_dual))

    for t in range(T):
        for node in nodes:
            if (node, t) in demand:
                p.add_constr(f"pc_q_lo[{node},{t}]", {f"q[{node},{t}]": 1.0}, ">=", 0.0)
                hi_coeffs = {f"q[{node},{t}]": 1.0}
                hi_rhs = max(demand[(node, t)], 0.0) if fixed else 0.0
                if not fixed:
                    hi_coeffs[f"dhat[{node},{t}]"] = -1.0
                p.add_constr(f"pc_q_hi[{node},{t}]", hi_coeffs, "<=", hi_rhs)
                p.add_var(f"du_q_lo[{node},{t}]", 0.0, INF)
                p.add_var(f"du_q_hi[{node},{t}]", 0.0, INF)
                pair(f"du_q_lo[{node},{t}]", f"pc_q_lo[{node},{t}]")
                pair(f"du_q_hi[{node},{t}]", f"pc_q_hi[{node},{t}]")
            bid = inst.gas_bid_at(node)
            if bid is not None:
                agg = {f"sg[{node},{b},{t}]": 1.0 for b in range(len(bid.steps))}
                p.add_constr(f"pc_agg_lo[{node},{t}]", agg, ">=", bid.min_total)
                p.add_constr(f"pc_agg_hi[{node},{t}]", agg, "<=", bid.agg_max)
                p.add_var(f"du_agg_lo[{node},{t}]", 0.0, INF)
                p.add_var(f"du_agg_hi[{node},{t}]", 0.0, INF)
                pair(f"du_agg_lo[{node},{t}]", f"pc_agg_lo[{node},{t}]")
                pair(f"du_agg_hi[{node},{t}]", f"pc_agg_hi[{node},{t}]")
                for b, step in enumerate(bid.steps):
                    p.add_constr(f"pc_bid_lo[{node},{b},{t}]", {f"sg[{node},{b},{t}]": 1.0}, ">=", 0.0)
                    p.add_constr(f"pc_bid_hi[{node},{b},{t}]", {f"sg[{node},{b},{t}]": 1.0}, "<=", step.quantity)
                    p.add_var(f"du_bid_lo[{node},{b},{t}]", 0.0, INF)
                    p.add_var(f"du_bid_hi[{node},{b},{t}]", 0.0, INF)
                    pair(f"du_bid_lo[{node},{b},{t}]", f"pc_bid_lo[{node},{b},{t}]")
                    pair(f"du_bid_hi[{node},{b},{t}]", f"pc_bid_hi[{node},{b},{t}]")
        for arc_id, arc in arcs:
            if arc_id.startswith("p"):
                for k, phik in enumerate(arc.setpoints):
                    p.add_constr(
                        f"pc_cut[{arc_id},{k},{t}]",
                        {
                            f"pi[{arc.head},{t}]": 1.0,
                            f"pi[{arc.tail},{t}]": -1.0,
                            f"phi[{arc_id},{t}]": -2.0 * arc.weymouth * phik,
                        },
                        ">=",
                        -(phik**2),
                    )
                    p.add_var(f"du_cut[{arc_id},{k},{t}]", 0.0, INF)
                    pair(f"du_cut[{arc_id},{k},{t}]", f"pc_cut[{arc_id},{k},{t}]")
                p.add_constr(f"pc_phi_lo[{arc_id},{t}]", {f"phi[{arc_id},{t}]": 1.0}, ">=", arc.flow_min)
                p.add_constr(f"pc_phi_hi[{arc_id},{t}]", {f"phi[{arc_id},{t}]": 1.0}, "<=", arc.flow_max)
                p.add_var(f"du_phi_lo[{arc_id},{t}]", 0.0, INF)
                p.add_var(f"du_phi_hi[{arc_id},{t}]", 0.0, INF)
                pair(f"du_phi_lo[{arc_id},{t}]", f"pc_phi_lo[{arc_id},{t}]")
                pair(f"du_phi_hi[{arc_id},{t}]", f"pc_phi_hi[{arc_id},{t}]")
            else:
                p.add_constr(
                    f"pc_ratio_lo[{arc_id},{t}]",
                    {f"pi[{arc.tail},{t}]": 1.0, f"pi[{arc.head},{t}]": -arc.ratio_min},
                    ">=",
                    0.0,
                )
                p.add_constr(
                    f"pc_ratio_hi[{arc_id},{t}]",
                    {f"pi[{arc.tail},{t}]": 1.0, f"pi[{arc.head},{t}]": -arc.ratio_max},
                    "<=",
                    0.0,
                )
                p.add_var(f"du_ratio_lo[{arc_id},{t}]", 0.0, INF)
                p.add_var(f"du_ratio_hi[{arc_id},{t}]", 0.0, INF)
                pair(f"du_ratio_lo[{arc_id},{t}]", f"pc_ratio_lo[{arc_id},{t}]")
                pair(f"du_ratio_hi[{arc_id},{t}]", f"pc_ratio_hi[{arc_id},{t}]")
        for node in nodes:
            lo, hi = pbounds(node)
            p.add_constr(f"pc_pi_lo[{node},{t}]", {f"pi[{node},{t}]": 1.0}, ">=", lo)
            p.add_constr(f"pc_pi_hi[{node},{t}]", {f"pi[{node},{t}]": 1.0}, "<=", hi)
            p.add_var(f"du_pi_lo[{node},{t}]", 0.0, INF)
            p.add_var(f"du_pi_hi[{node},{t}]", 0.0, INF)
            pair(f"du_pi_lo[{node},{t}]", f"pc_pi_lo[{node},{t}]")
            pair(f"du_pi_hi[{node},{t}]", f"pc_pi_hi[{node},{t}]")

    # --- stationarity ----------------------------------------------------
    for t in range(T):
        for node in nodes:
            bid = inst.gas_bid_at(node)
            if bid is not None:
                for b, step in enumerate(bid.steps):
                    p.add_constr(
                        f"st_sg[{node},{b},{t}]",
                        {
                            f"y[{node},{t}]": -1.0,
                            f"du_agg_lo[{node},{t}]": -1.0,
                            f"du_agg_hi[{node},{t}]": 1.0,
                            f"du_bid_lo[{node},{b},{t}]": -1.0,
                            f"du_bid_hi[{node},{b},{t}]": 1.0,
                        },
                        "=",
                        -step.price,
                    )
            if (node, t) in demand:
                p.add_constr(
                    f"st_q[{node},{t}]",
                    {
                        f"y[{node},{t}]": -1.0,
                        f"du_q_lo[{node},{t}]": -1.0,
                        f"du_q_hi[{node},{t}]": 1.0,
                    },
                    "=",
                    -inst.shed_cost_at(node),
                )
        for arc_id, arc in arcs:
            coeffs = {f"y[{arc.head},{t}]": 1.0, f"y[{arc.tail},{t}]": -1.0}
            if arc_id.startswith("p"):
                for k, phik in enumerate(arc.setpoints):
                    coeffs[f"du_cut[{arc_id},{k},{t}]"] = 2.0 * arc.weymouth * phik
                coeffs[f"du_phi_lo[{arc_id},{t}]"] = -1.0
                coeffs[f"du_phi_hi[{arc_id},{t}]"] = 1.0
            p.add_constr(f"st_phi[{arc_id},{t}]", coeffs, "=", 0.0)
        for node in nodes:
            coeffs = {f"du_pi_lo[{node},{t}]": -1.0, f"du_pi_hi[{node},{t}]": 1.0}
            for arc_id, arc in arcs:
                if arc_id.startswith("p"):
                    for k in range(len(arc.setpoints)):
                        cut = f"du_cut[{arc_id},{k},{t}]"
                        if arc.head == node:
                            coeffs[cut] = coeffs.get(cut, 0.0) - 1.0
                        if arc.tail == node:
                            coeffs[cut] = coeffs.get(cut, 0.0) + 1.0
                else:
                    lo_name = f"du_ratio_lo[{arc_id},{t}]"
                    hi_name = f"du_ratio_hi[{arc_id},{t}]"
                    if arc.tail == node:
                        coeffs[lo_name] = coeffs.get(lo_name, 0.0) - 1.0
                        coeffs[hi_name] = coeffs.get(hi_name, 0.0) + 1.0
                    if arc.head == node:
                        coeffs[lo_name] = coeffs.get(lo_name, 0.0) + arc.ratio_min
                        coeffs[hi_name] = coeffs.get(hi_name, 0.0) - arc.ratio_max
            p.add_constr(f"st_pi[{node},{t}]", coeffs, "=", 0.0)

    return KktSystem(p, pairs, demand_vars, price_vars, gm_cost)


@dataclass
class FidelityResult:
    status: str
    mode: str
    demand: dict[tuple[str, int], float] = field(default_factory=dict)
    distance: float | None = None
    gm_objective: float | None = None
    prices: dict[tuple[str, int], float] = field(default_factory=dict)
    dispatch: dict[tuple[str, int, int], float] = field(default_factory=dict)
    shed: dict[tuple[str, int], float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "mode": self.mode,
            "distance": self.distance,
            "gm_objective": self.gm_objective,
            "demand": {f"{n}|{t}": v for (n, t), v in sorted(self.demand.items())},
            "prices": {f"{n}|{t}": v for (n, t), v in sorted(self.prices.items())},
        }


def _profile_values(d_tilde) -> Mapping[tuple[str, int], float]:
    if isinstance(d_tilde, ObfuscatedProfile):
        return d_tilde.values
    return d_tilde


def _add_distance_objective(system: KktSystem, d_tilde, params: FidelityParams, scale_hint: float) -> None:
    """Objective measuring the deviation of the released profile from d_tilde."""
    p = system.problem
    obj: dict[str, float] = {}
    for key in sorted(system.demand_vars):
        dv = system.demand_vars[key]
        target = d_tilde[key]
        if params.norm == "l1":
            pos = p.add_var(f"dev_pos[{key[0]},{key[1]}]", 0.0, INF)
            neg = p.add_var(f"dev_neg[{key[0]},{key[1]}]", 0.0, INF)
            p.add_constr(f"dev[{key[0]},{key[1]}]", {dv: 1.0, pos: -1.0, neg: 1.0}, "=", target)
            obj[pos] = 1.0
            obj[neg] = 1.0
        else:
            span = params.l2_span if params.l2_span is not None else scale_hint
            z = p.add_var(f"dev_sq[{key[0]},{key[1]}]", 0.0, INF)
            pieces = params.l2_pieces
            for i in range(pieces):
                a = -span + 2.0 * span * i / pieces
                b = -span + 2.0 * span * (i + 1) / pieces
                # chord of x^2 over [a, b]:  z >= (a+b)(dhat-target) - a*b
                p.add_constr(
                    f"dev_chord[{key[0]},{key[1]},{i}]",
                    {z: 1.0, dv: -(a + b)},
                    ">=",
                    -a * b - (a + b) * target,
                )
            obj[z] = 1.0
    p.set_objective(obj)


def _add_band(system: KktSystem, mode: str, target, params: FidelityParams) -> None:
    p = system.problem
    if mode == PRIMAL:
        eta = params.eta if not isinstance(params.eta, Mapping) else max(params.eta.values())
        p.add_constr("band_cost_hi", dict(system.gm_cost), "<=", float(target) + eta)
        p.add_constr("band_cost_lo", dict(system.gm_cost), ">=", float(target) - eta)
    else:
        for key in sorted(target):
            y = system.price_vars[key]
            eta = params.eta_at(key)
            p.add_constr(f"band_y_hi[{key[0]},{key[1]}]", {y: 1.0}, "<=", target[key] + eta)
            p.add_constr(f"band_y_lo[{key[0]},{key[1]}]", {y: 1.0}, ">=", target[key] - eta)


def _build_fidelity_system(inst, d_tilde, mode, target, params) -> KktSystem:
    values = _profile_values(d_tilde)
    gamma = gfpp_gas_consumption(params.hist_dispatch, inst.coupling)
    system = kkt_gm_constraints(inst, gamma, values, fixed=False, m_dual=params.m_dual)
    _add_band(system, mode, target, params)
    scale_hint = 6.0 * (d_tilde.alpha / d_tilde.epsilon) if isinstance(d_tilde, ObfuscatedProfile) else max(
        (abs(v) for v in values.values()), default=1.0
    )
    _add_distance_objective(system, values, params, scale_hint)
    return system


def _extract_result(inst, system: KktSystem, sol, mode: str) -> FidelityResult:
    out = FidelityResult(status=OPTIMAL, mode=mode, distance=sol.objective)
    out.demand = {k: sol.value(v) for k, v in system.demand_vars.items()}
    out.prices = {k: sol.value(v) for k, v in system.price_vars.items()}
    out.gm_objective = sum(coef * sol.value(name) for name, coef in system.gm_cost.items())
    for name, coef in system.gm_cost.items():
        if name.startswith("sg["):
            node, b, t = name[3:-1].split(",")
            out.dispatch[(node, int(b), int(t))] = sol.value(name)
        else:
            node, t = name[2:-1].split(",")
            out.shed[(node, int(t))] = sol.value(name)
    return out


def _run_fidelity(inst, d_tilde, mode, target, params, tols) -> FidelityResult:
    system = _build_fidelity_system(inst, d_tilde, mode, target, params)
    margin = params.margin if mode == DUAL else 0.0
    milp = linearize_complementarity(system.pairs, system.problem, margin=margin)
    sol = solve_milp(milp, tols)
    if sol.status == NODE_LIMIT:
        return FidelityResult(status=UNSOLVED, mode=mode)
    if sol.status != OPTIMAL:
        return FidelityResult(status=FIDELITY_INFEASIBLE, mode=mode)
    return _extract_result(inst, system, sol, mode)


def primal_fidelity(
    inst: MarketInstance,
    d_tilde,
    target_cost: float,
    params: FidelityParams,
    tols: ToleranceSet = DEFAULT_TOLS,
) -> FidelityResult:
    """Release the profile closest to d_tilde whose market cost stays in-band."""
    return _run_fidelity(inst, d_tilde, PRIMAL, target_cost, params, tols)


def dual_fidelity(
    inst: MarketInstance,
    d_tilde,
    target_prices: Mapping[tuple[str, int], float],
    params: FidelityParams,
    tols: ToleranceSet = DEFAULT_TOLS,
) -> FidelityResult:
    """Release the profile closest to d_tilde whose nodal prices stay in-band."""
    return _run_fidelity(inst, d_tilde, DUAL, target_prices, params, tols)


def fidelity_oracle(
    inst: MarketInstance,
    d_tilde,
    mode: str,
    target,
    params: FidelityParams,
    pattern_cap: int = 20,
) -> FidelityResult:
    """Brute force over every complementarity pattern; reference for the MILP path.

    Each pattern activates a subset of the inequality rows as equalities
    (zeroing the complementary duals) and solves the remaining LP exactly;
    the best feasible pattern is returned.  Needs no big-M constants at all.
    """
    import numpy as np
    from scipy.optimize import Bounds, LinearConstraint
    from scipy.optimize import milp as scipy_milp

    system = _build_fidelity_system(inst, d_tilde, mode, target, params)
    m = len(system.pairs)
    if m > pattern_cap:
        raise CapExceeded(f"{m} complementarity pairs exceed the cap of {pattern_cap}")
    margin = params.margin if mode == DUAL else 0.0

    p = system.problem
    p.validate()
    idx = p.var_index()
    n = len(p.variables)
    c = np.zeros(n)
    for name, coef in p.objective.items():
        c[idx[name]] = coef
    lb = np.array([v.lb for v in p.variables])
    ub = np.array([v.ub for v in p.variables])
    rows = np.zeros((len(p.constraints), n))
    lo = np.empty(len(p.constraints))
    hi = np.empty(len(p.constraints))
    row_index = {}
    for ri, con in enumerate(p.constraints):
        row_index[con.name] = ri
        for name, coef in con.coeffs.items():
            rows[ri, idx[name]] = coef
        if con.relation == "=":
            lo[ri] = hi[ri] = con.rhs
        elif con.relation == "<=":
            lo[ri], hi[ri] = -np.inf, con.rhs
        else:
            lo[ri], hi[ri] = con.rhs, np.inf

    best = None
    best_x = None
    for pattern in range(1 << m):
        plo, phi = lo.copy(), hi.copy()
        vlo, vub = lb.copy(), ub.copy()
        for i, pr in enumerate(system.pairs):
            ri = row_index[pr.slack_constraint]
            di = idx[pr.dual_var]
            active = (pattern >> i) & 1
            if active:
                plo[ri] = phi[ri] = p.constraints[ri].rhs
                if margin > 0:
                    vlo[di] = margin
            else:
                vub[di] = 0.0
                if margin > 0:
                    if p.constraints[ri].relation == ">=":
                        plo[ri] = p.constraints[ri].rhs + margin
                    else:
                        phi[ri] = p.constraints[ri].rhs - margin
        res = scipy_milp(
            c=c,
            constraints=LinearConstraint(rows, plo, phi),
            integrality=np.zeros(n),
            bounds=Bounds(vlo, vub),
            options={"presolve": True},
        )
        if res.status == 0 and res.x is not None:
            if best is None or res.fun < best - 1e-12:
                best = res.fun
                best_x = res.x
    if best is None:
        return FidelityResult(status=FIDELITY_INFEASIBLE, mode=mode)
    sol_map = {v.name: float(x) for v, x in zip(p.variables, best_x)}

    class _Sol:
        objective = best

        @staticmethod
        def value(name):
            return sol_map.get(name, 0.0)

    return _extract_result(inst, system, _Sol, mode)


def truth_feasibility(
    inst: MarketInstance,
    demand: Mapping[tuple[str, int], float],
    mode: str,
    target,
    params: FidelityParams,
) -> bool:
    """Whether the original profile itself satisfies the fidelity problem.

    This is the premise of the distance guarantees: the original demand must
    sit inside the band (always true with exact public targets and a
    positive band) and, in dual mode, clear the market away from degenerate
    faces by at least the strict-complementarity margin.
    """
    gamma = gfpp_gas_consumption(params.hist_dispatch, inst.coupling)
    p = build_gm(inst, demand, gamma)
    sol = solve_lp(p)
    if sol.status != OPTIMAL:
        return False
    if mode == PRIMAL:
        eta = params.eta if not isinstance(params.eta, Mapping) else max(params.eta.values())
        if abs(sol.objective - float(target)) > eta:
            return False
        return True
    for key, y_target in target.items():
        y = sol.duals.get(f"gbal[{key[0]},{key[1]}]", 0.0)
        if abs(y - y_target) > params.eta_at(key):
            return False
    if params.margin > 0:
        system = kkt_gm_constraints(
            inst, gamma, demand, fixed=False, m_dual=params.m_dual
        )
        # Strict complementarity at the clearing solution rules out the
        # degenerate faces the margin excludes from the fidelity problem.
        values = _clearing_point(inst, demand, gamma, sol, system)
        for pr in system.pairs:
            con = system.problem.constraint(pr.slack_constraint)
            act = sum(coef * values.get(name, 0.0) for name, coef in con.coeffs.items())
            slack = (con.rhs - act) if con.relation == "<=" else (act - con.rhs)
            dual = values.get(pr.dual_var, 0.0)
            if slack < params.margin - 1e-9 and dual < params.margin - 1e-9:
                return False
    return True


def _clearing_point(inst, demand, gamma, sol, system: KktSystem) -> dict[str, float]:
    """Map a clear_gm solution onto the KKT system's variable names."""
    values: dict[str, float] = {}
    for v in system.problem.variables:
        values[v.name] = 0.0
    for name in sol.primal:
        if name in values:
            values[name] = sol.primal[name]
    for key, var in system.demand_vars.items():
        values[var] = demand[key]
    T = inst.horizon
    for t in range(T):
        for node in inst.gas.node_ids():
            values[f"y[{node},{t}]"] = sol.duals.get(f"gbal[{node},{t}]", 0.0)
    # bound duals of the clearing LP are the explicit-row duals of the system
    for con_name, dual in sol.duals.items():
        mapped = _ROW_DUAL_MAP(con_name)
        if mapped and mapped in values:
            values[mapped] = abs(dual)
    for vname, rc in sol.reduced_costs.items():
        for prefix, lo_t, hi_t in (("sg[", "du_bid_lo[", "du_bid_hi["), ("q[", "du_q_lo[", "du_q_hi["),
                                   ("pi[", "du_pi_lo[", "du_pi_hi["), ("phi[", "du_phi_lo[", "du_phi_hi[")):
            if vname.startswith(prefix):
                key = vname[len(prefix):]
                if rc > 0 and lo_t + key in values:
                    values[lo_t + key] = rc
                elif rc < 0 and hi_t + key in values:
                    values[hi_t + key] = -rc
    return values


def _ROW_DUAL_MAP(con_name: str) -> str | None:
    table = {
        "gagg_lo[": "du_agg_lo[",
        "gagg_hi[": "du_agg_hi[",
        "gcut[": "du_cut[",
        "gratio_lo[": "du_ratio_lo[",
        "gratio_hi[": "du_ratio_hi[",
    }
    for prefix, repl in table.items():
        if con_name.startswith(prefix):
            return repl + con_name[len(prefix):]
    return None
