"""Linear and mixed-integer programming layer.

Problems are built symbolically (named variables, named rows) and solved
through scipy's HiGHS bindings: dual simplex for LPs so the reported duals
are deterministic for identical input, branch-and-bound for MILPs with the
relative gap pinned to zero.  Dual values follow the sensitivity convention
``dual = d objective / d rhs``: equality rows have free sign, ``>=`` rows
yield non-negative duals and ``<=`` rows non-positive ones in a minimization.

The Fortuny-Amat linearization of complementarity pairs lives here as well,
since every downstream single-level reformulation builds on it.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

INF = float("inf")

# Solve statuses
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NODE_LIMIT = "node_limit"


class BigMTooSmall(RuntimeError):
    """A complementarity dual landed at its big-M ceiling: the constant truncated the dual."""


@dataclass(frozen=True)
class ToleranceSet:
    feas_tol: float = 1e-7
    gap_tol: float = 1e-6  # relative duality / MIP gap
    int_tol: float = 1e-6
    comp_tol: float = 1e-6
    iteration_limit: int = 50_000
    node_limit: int = 1_000_000
    time_limit: float | None = None


DEFAULT_TOLS = ToleranceSet()


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF


@dataclass
class Constraint:
    name: str
    coeffs: dict[str, float]
    relation: str  # "<=", ">=", "="
    rhs: float


@dataclass
class LpProblem:
    name: str = "lp"
    variables: list[Variable] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF) -> str:
        if lb > ub:
            raise ValueError(f"variable {name!r}: lb {lb} exceeds ub {ub}")
        self.variables.append(Variable(name, lb, ub))
        return name

    def add_constr(self, name: str, coeffs: dict[str, float], relation: str, rhs: float) -> str:
        if relation not in ("<=", ">=", "="):
            raise ValueError(f"unknown relation {relation!r}")
        self.constraints.append(Constraint(name, dict(coeffs), relation, float(rhs)))
        return name

    def set_objective(self, coeffs: dict[str, float]) -> None:
        self.objective = dict(coeffs)

    def var_index(self) -> dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    def constraint(self, name: str) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def validate(self) -> None:
        idx = self.var_index()
        if len(idx) != len(self.variables):
            raise ValueError("duplicate variable names")
        for term in self.objective:
            if term not in idx:
                raise ValueError(f"objective references undeclared variable {term!r}")
        for c in self.constraints:
            for term in c.coeffs:
                if term not in idx:
                    raise ValueError(f"constraint {c.name!r} references undeclared variable {term!r}")

    def clone(self) -> "LpProblem":
        return copy.deepcopy(self)

    def to_lp_text(self) -> str:
        """Human-readable dump, CPLEX-LP flavoured.

        Grammar: a `Minimize` section with one `obj:` row, `Subject To` with
        one `name: sum_of(coef var) rel rhs` row per constraint, a `Bounds`
        section listing every variable (``free`` when unbounded both ways),
        then `End`.  Terms are space separated with explicit signs.
        """

        def terms(coeffs: dict[str, float]) -> str:
            parts = []
            for name, coef in coeffs.items():
                sign = "-" if coef < 0 else "+"
                parts.append(f"{sign} {abs(coef):.12g} {name}")
            if not parts:
                return "0"
            out = " ".join(parts)
            return out[2:] if out.startswith("+ ") else out

        lines = [f"\\ {self.name}", "Minimize", f" obj: {terms(self.objective)}", "Subject To"]
        rel = {"<=": "<=", ">=": ">=", "=": "="}
        for c in self.constraints:
            lines.append(f" {c.name}: {terms(c.coeffs)} {rel[c.relation]} {c.rhs:.12g}")
        lines.append("Bounds")
        for v in self.variables:
            if v.lb == -INF and v.ub == INF:
                lines.append(f" {v.name} free")
            elif v.ub == INF:
                lines.append(f" {v.lb:.12g} <= {v.name}")
            else:
                lines.append(f" {v.lb:.12g} <= {v.name} <= {v.ub:.12g}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class MilpProblem:
    base: LpProblem
    binaries: set[str] = field(default_factory=set)
    pairs: list["ComplementarityPair"] = field(default_factory=list)

    def validate(self) -> None:
        self.base.validate()
        idx = self.base.var_index()
        for b in self.binaries:
            if b not in idx:
                raise ValueError(f"binary {b!r} is not a declared variable")
            v = self.base.variables[idx[b]]
            if v.lb < 0 or v.ub > 1:
                raise ValueError(f"binary {b!r} must have bounds within [0, 1]")


@dataclass(frozen=True)
class ComplementarityPair:
    """One `0 <= dual  perp  slack >= 0` condition awaiting disjunctive linearization."""

    dual_var: str
    slack_constraint: str
    m_primal: float
    m_dual: float


@dataclass
class LpSolution:
    status: str
    primal: dict[str, float] = field(default_factory=dict)
    duals: dict[str, float] = field(default_factory=dict)
    reduced_costs: dict[str, float] = field(default_factory=dict)
    objective: float | None = None

    def value(self, name: str) -> float:
        return self.primal.get(name, 0.0)


def _scipy_inputs(p: LpProblem):
    idx = p.var_index()
    n = len(p.variables)
    c = np.zeros(n)
    for name, coef in p.objective.items():
        c[idx[name]] = coef
    lb = np.array([v.lb for v in p.variables], dtype=float)
    ub = np.array([v.ub for v in p.variables], dtype=float)
    a_ub, b_ub, ub_rows = [], [], []  # ub_rows: (constraint index, sign)
    a_eq, b_eq, eq_rows = [], [], []
    for ci, con in enumerate(p.constraints):
        row = np.zeros(n)
        for name, coef in con.coeffs.items():
            row[idx[name]] = coef
        if con.relation == "=":
            a_eq.append(row)
            b_eq.append(con.rhs)
            eq_rows.append(ci)
        elif con.relation == "<=":
            a_ub.append(row)
            b_ub.append(con.rhs)
            ub_rows.append((ci, 1.0))
        else:  # >=  ->  -a x <= -b
            a_ub.append(-row)
            b_ub.append(-con.rhs)
            ub_rows.append((ci, -1.0))
    return c, idx, (a_ub, b_ub, ub_rows), (a_eq, b_eq, eq_rows), (lb, ub)


_LP_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


def solve_lp(p: LpProblem, tols: ToleranceSet = DEFAULT_TOLS, dump_file: str | None = None) -> LpSolution:
    """Solve an LP; on success the solution carries duals and reduced costs."""
    p.validate()
    if dump_file:
        with open(dump_file, "w") as fh:
            fh.write(p.to_lp_text())
    c, idx, (a_ub, b_ub, ub_rows), (a_eq, b_eq, eq_rows), (lb, ub) = _scipy_inputs(p)
    options = {"maxiter": tols.iteration_limit, "presolve": True}
    if tols.time_limit is not None:
        options["time_limit"] = tols.time_limit
    res = linprog(
        c,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=np.column_stack([lb, ub]),
        method="highs-ds",
        options=options,
    )
    status = _LP_STATUS.get(res.status, ITERATION_LIMIT)
    if status != OPTIMAL:
        return LpSolution(status=status)
    names = [v.name for v in p.variables]
    primal = {name: float(x) for name, x in zip(names, res.x)}
    duals: dict[str, float] = {}
    if ub_rows:
        for (ci, sign), m in zip(ub_rows, res.ineqlin.marginals):
            duals[p.constraints[ci].name] = float(sign * m)
    if eq_rows:
        for ci, m in zip(eq_rows, res.eqlin.marginals):
            duals[p.constraints[ci].name] = float(m)
    rc = res.lower.marginals + res.upper.marginals
    reduced = {name: float(r) for name, r in zip(names, rc)}
    return LpSolution(OPTIMAL, primal, duals, reduced, float(res.fun))


_MILP_STATUS = {0: OPTIMAL, 1: NODE_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED, 4: NODE_LIMIT}


def solve_milp(p: MilpProblem, tols: ToleranceSet = DEFAULT_TOLS, dump_file: str | None = None) -> LpSolution:
    """Solve a MILP to proven optimality (relative gap pinned to zero).

    Raises :class:`BigMTooSmall` when a complementarity dual sits at its
    big-M ceiling, which would silently truncate the dual polyhedron.
    """
    p.validate()
    base = p.base
    if dump_file:
        with open(dump_file, "w") as fh:
            fh.write(base.to_lp_text())
            fh.write("\\ binaries: " + " ".join(sorted(p.binaries)) + "\n")
    c, idx, (a_ub, b_ub, ub_rows), (a_eq, b_eq, eq_rows), (lb, ub) = _scipy_inputs(base)
    rows = []
    lo, hi = [], []
    for row, b in zip(a_ub, b_ub):
        rows.append(row)
        lo.append(-np.inf)
        hi.append(b)
    for row, b in zip(a_eq, b_eq):
        rows.append(row)
        lo.append(b)
        hi.append(b)
    integrality = np.zeros(len(base.variables))
    for name in p.binaries:
        integrality[idx[name]] = 1
    options = {"mip_rel_gap": 0.0, "node_limit": tols.node_limit, "presolve": True}
    if tols.time_limit is not None:
        options["time_limit"] = tols.time_limit
    res = milp(
        c=c,
        constraints=LinearConstraint(np.array(rows), np.array(lo), np.array(hi)) if rows else (),
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options=options,
    )
    status = _MILP_STATUS.get(res.status, NODE_LIMIT)
    if res.x is None and status == OPTIMAL:
        status = NODE_LIMIT
    if res.x is None:
        return LpSolution(status=status)
    names = [v.name for v in base.variables]
    primal = {name: float(x) for name, x in zip(names, res.x)}
    sol = LpSolution(status, primal, {}, {}, float(res.fun))
    if status == OPTIMAL:
        for name in p.binaries:
            if abs(primal[name] - round(primal[name])) > tols.int_tol:
                raise RuntimeError(f"binary {name!r} not integral: {primal[name]}")
        _check_big_m(p, sol, tols)
    return sol


def _big_m_offenders(p: MilpProblem, sol: LpSolution) -> list[str]:
    return [
        pair.dual_var
        for pair in p.pairs
        if pair.m_dual > 0 and sol.value(pair.dual_var) >= pair.m_dual * (1.0 - 1e-3)
    ]


def _check_big_m(p: MilpProblem, sol: LpSolution, tols: ToleranceSet) -> None:
    """Raise when a complementarity dual is genuinely pinned at its ceiling.

    Degenerate optima can park a dual pair anywhere inside its box, so a
    ceiling hit is first re-checked by fixing the integer solution, pinning
    the objective, and re-solving for the least-total-dual representation.
    Only if that polished point still touches the ceiling is the big-M
    declared too small.
    """
    if not _big_m_offenders(p, sol):
        return
    polish = p.base.clone()
    idx = polish.var_index()
    for name in p.binaries:
        v = polish.variables[idx[name]]
        v.lb = v.ub = round(sol.value(name))
    bound = sol.objective + tols.gap_tol * (1.0 + abs(sol.objective))
    polish.add_constr("polish_obj_pin", dict(polish.objective), "<=", bound)
    polish.set_objective({pair.dual_var: 1.0 for pair in p.pairs})
    refit = solve_lp(polish, tols)
    if refit.status == OPTIMAL:
        for name in refit.primal:
            sol.primal[name] = refit.primal[name]
    offenders = _big_m_offenders(p, sol)
    if offenders:
        raise BigMTooSmall(f"dual variables at their big-M ceiling: {sorted(offenders)}")


def _slack_coeffs(con: Constraint) -> tuple[dict[str, float], float]:
    """Slack of a row as (coeffs, constant) with slack >= 0 at feasibility."""
    if con.relation == "<=":
        return {k: -v for k, v in con.coeffs.items()}, con.rhs
    if con.relation == ">=":
        return dict(con.coeffs), -con.rhs
    raise ValueError(f"complementarity slack on equality row {con.name!r}")


def linearize_complementarity(
    pairs: list[ComplementarityPair],
    base: LpProblem,
    margin: float = 0.0,
    tag: str = "fa",
) -> MilpProblem:
    """Fortuny-Amat reformulation: one binary per pair, two big-M rows.

    With binary b: ``dual <= m_dual * b`` and ``slack <= m_primal * (1 - b)``.
    A positive ``margin`` additionally enforces strict complementarity
    (``dual >= margin * b`` and ``slack >= margin * (1 - b)``), which pins the
    solution away from degenerate faces where the dual is not unique.
    """
    prob = base.clone()
    idx = prob.var_index()
    out_pairs = []
    for i, pair in enumerate(pairs):
        if pair.dual_var not in idx:
            raise ValueError(f"pair references undeclared dual variable {pair.dual_var!r}")
        con = prob.constraint(pair.slack_constraint)
        if pair.m_primal < 0 or pair.m_dual < 0:
            raise ValueError("big-M values must be non-negative")
        b = prob.add_var(f"{tag}_b[{i}]", 0.0, 1.0)
        prob.add_constr(f"{tag}_dual_ub[{i}]", {pair.dual_var: 1.0, b: -pair.m_dual}, "<=", 0.0)
        slack, const = _slack_coeffs(con)
        # slack + const <= m_primal * (1 - b)
        row = dict(slack)
        row[b] = row.get(b, 0.0) + pair.m_primal
        prob.add_constr(f"{tag}_slack_ub[{i}]", row, "<=", pair.m_primal - const)
        if margin > 0.0:
            prob.add_constr(f"{tag}_dual_lb[{i}]", {pair.dual_var: 1.0, b: -margin}, ">=", 0.0)
            row2 = dict(slack)
            row2[b] = row2.get(b, 0.0) + margin
            prob.add_constr(f"{tag}_slack_lb[{i}]", row2, ">=", margin - const)
        out_pairs.append(pair)
    binaries = {f"{tag}_b[{i}]" for i in range(len(pairs))}
    return MilpProblem(base=prob, binaries=binaries, pairs=out_pairs)


@dataclass(frozen=True)
class CertificateReport:
    primal_residual: float
    dual_residual: float
    stationarity_residual: float
    complementarity_residual: float
    passed: bool


def check_kkt(p: LpProblem, s: LpSolution, tols: ToleranceSet = DEFAULT_TOLS) -> CertificateReport:
    """Residuals of the first-order optimality system for an LP solution.

    Verifies primal feasibility, dual sign feasibility, stationarity
    ``c = A^T y + r`` (r the variable-bound duals), and complementary
    slackness of both rows and bounds.
    """
    if s.status != OPTIMAL:
        raise ValueError("KKT certificate requires an optimal solution")
    x = {v.name: s.value(v.name) for v in p.variables}
    primal = 0.0
    comp = 0.0
    dual = 0.0
    for con in p.constraints:
        act = sum(coef * x[name] for name, coef in con.coeffs.items())
        y = s.duals.get(con.name, 0.0)
        if con.relation == "=":
            primal = max(primal, abs(act - con.rhs))
        elif con.relation == "<=":
            primal = max(primal, act - con.rhs)
            dual = max(dual, y)  # must be <= 0
            comp = max(comp, abs(y * (con.rhs - act)))
        else:
            primal = max(primal, con.rhs - act)
            dual = max(dual, -y)  # must be >= 0
            comp = max(comp, abs(y * (act - con.rhs)))
    for v in p.variables:
        primal = max(primal, v.lb - x[v.name], x[v.name] - v.ub)
        r = s.reduced_costs.get(v.name, 0.0)
        if r > 0 and v.lb > -INF:
            comp = max(comp, abs(r * (x[v.name] - v.lb)))
        elif r < 0 and v.ub < INF:
            comp = max(comp, abs(r * (v.ub - x[v.name])))
        elif r != 0:
            dual = max(dual, abs(r))  # nonzero rc on a free variable
    stat = 0.0
    grad = {v.name: -s.reduced_costs.get(v.name, 0.0) for v in p.variables}
    for name, coef in p.objective.items():
        grad[name] += coef
    for con in p.constraints:
        y = s.duals.get(con.name, 0.0)
        if y:
            for name, coef in con.coeffs.items():
                grad[name] -= coef * y
    for g in grad.values():
        stat = max(stat, abs(g))
    scale = 1.0 + max((abs(val) for val in x.values()), default=0.0)
    passed = (
        primal <= tols.feas_tol * scale
        and dual <= tols.feas_tol * scale
        and stat <= 1e-6 * scale
        and comp <= tols.comp_tol * scale
    )
    return CertificateReport(primal, dual, stat, comp, passed)


def dual_objective(p: LpProblem, s: LpSolution) -> float:
    """Dual objective value implied by the reported duals and reduced costs."""
    val = sum(s.duals.get(c.name, 0.0) * c.rhs for c in p.constraints)
    for v in p.variables:
        r = s.reduced_costs.get(v.name, 0.0)
        if r > 0:
            val += r * v.lb
        elif r < 0:
            val += r * v.ub
    return val


def row_activity_bounds(p: LpProblem, coeffs: dict[str, float]) -> tuple[float, float]:
    """Interval of a linear expression over the variable box (for big-M sizing)."""
    bounds = {v.name: (v.lb, v.ub) for v in p.variables}
    lo = hi = 0.0
    for name, coef in coeffs.items():
        vlo, vhi = bounds[name]
        a, b = coef * vlo, coef * vhi
        lo += min(a, b)
        hi += max(a, b)
    return lo, hi
