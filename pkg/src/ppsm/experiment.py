"""Sweep harness: mechanism x alpha x eta x stress x seed experiment grids.

One run obfuscates the (stressed) gas demand, optionally repairs it with a
fidelity phase, solves the commitment problem on the released profile and
compares objectives against the true-data baseline.  Baselines are computed
once per stress point and shared across repetitions, mirroring how the
public values would be collected from history.

Records are plain rows; re-running an identical config reproduces the CSV
byte for byte (a timestamp comment is the only non-deterministic line and
can be suppressed).
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

from .bench import get_instance
from .fidelity import FidelityParams, dual_fidelity, primal_fidelity
from .gauc import GaucResult, solve_gauc_enumerate, solve_gauc_milp
from .model import MarketInstance, stress_scale, with_gas_demand
from .privacy import PrivacyParams, obfuscate_demand
from .solver import ToleranceSet

MECHANISMS = ("laplace", "ppsm_p", "ppsm_d")

LAPLACE = "laplace"
PPSM_P = "ppsm_p"
PPSM_D = "ppsm_d"

PRICE_BAND_FLOOR = 1e-3  # $/MWh floor when converting a pct band per node

RESULT_COLUMNS = [
    "instance",
    "mechanism",
    "alpha",
    "eta",
    "eta_unit",
    "epsilon",
    "e_factor",
    "g_factor",
    "seed",
    "method",
    "feasible",
    "timeout",
    "zero_objective",
    "delta_d",
    "delta_o_uc",
    "delta_o_e",
    "delta_o_g",
    "delta_o_g_hist",
    "delta_o_total",
    "privacy_seconds",
    "fidelity_seconds",
    "gauc_seconds",
]


@dataclass(frozen=True)
class ExperimentConfig:
    instance: str
    mechanisms: tuple[str, ...] = MECHANISMS
    alphas: tuple[float, ...] = (1.0,)
    etas: tuple[float, ...] = (0.1,)
    eta_unit: str = "pct"
    epsilon: float = math.log(2.0)
    seeds: int = 30
    base_seed: int = 0
    e_factors: tuple[float, ...] = (1.0,)
    g_factors: tuple[float, ...] = (1.0,)
    time_limit: float = 60.0
    method: str = "milp"
    norm: str = "l1"

    def __post_init__(self):
        if not self.mechanisms or not self.alphas or not self.etas:
            raise ValueError("mechanism, alpha and eta lists must be non-empty")
        for m in self.mechanisms:
            if m not in MECHANISMS:
                raise ValueError(f"unknown mechanism {m!r}")
        if self.eta_unit not in ("pct", "abs"):
            raise ValueError("eta_unit must be 'pct' or 'abs'")
        if self.seeds < 1:
            raise ValueError("need at least one repetition")
        if self.time_limit <= 0:
            raise ValueError("per-run wall-clock limit must be positive")
        if self.method not in ("milp", "enumerate"):
            raise ValueError("method must be 'milp' or 'enumerate'")

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        listy = {f.name for f in fields(ExperimentConfig) if "tuple" in str(f.type)}
        kwargs = {}
        for key, val in obj.items():
            kwargs[key] = tuple(val) if key in listy and not isinstance(val, str) else val
        return ExperimentConfig(**kwargs)

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        with open(path) as fh:
            return ExperimentConfig.from_dict(json.load(fh))


@dataclass
class ExperimentRecord:
    instance: str
    mechanism: str
    alpha: float
    eta: float
    eta_unit: str
    epsilon: float
    e_factor: float
    g_factor: float
    seed: int
    method: str
    feasible: bool = False
    timeout: bool = False
    zero_objective: bool = False
    delta_d: float | None = None
    delta_o_uc: float | None = None
    delta_o_e: float | None = None
    delta_o_g: float | None = None
    # |O_hat - O*|/O* of the fidelity certificate itself (gas market under the
    # historical offtake): this is the quantity the cost band constrains.
    delta_o_g_hist: float | None = None
    delta_o_total: float | None = None
    privacy_seconds: float = 0.0
    fidelity_seconds: float = 0.0
    gauc_seconds: float = 0.0

    def row(self) -> list:
        fmt = lambda x: "" if x is None else (f"{x:.10g}" if isinstance(x, float) else x)
        return [fmt(getattr(self, col)) for col in RESULT_COLUMNS]


@dataclass
class Baseline:
    """True-data outcome at one stress point, shared by every repetition."""

    stressed: MarketInstance
    gauc: GaucResult
    hist_dispatch: dict = field(default_factory=dict)

    @property
    def gm_cost(self) -> float:
        return self.gauc.gm.objective

    @property
    def prices(self) -> dict:
        return self.gauc.gm.prices


def solve_gauc(inst: MarketInstance, method: str, tols: ToleranceSet) -> GaucResult:
    if method == "enumerate":
        return solve_gauc_enumerate(inst, tols=tols, time_limit=tols.time_limit)
    return solve_gauc_milp(inst, tols=tols)


def compute_baseline(inst: MarketInstance, e_factor: float, g_factor: float, method: str = "milp",
                     time_limit: float | None = None) -> Baseline:
    stressed = stress_scale(inst, e_factor, g_factor)
    tols = ToleranceSet(time_limit=time_limit)
    result = solve_gauc(stressed, method, tols)
    if not result.ok:
        raise RuntimeError(
            f"baseline commitment problem is {result.status} at stress ({e_factor}, {g_factor})"
        )
    links = stressed.coupling.by_supplier()
    hist = {k: v for k, v in result.em.dispatch.items() if k[0] in links}
    return Baseline(stressed, result, hist)


def eta_to_abs(eta: float, unit: str, baseline: Baseline, mode: str):
    """Convert a configured band to the absolute form the fidelity phase takes."""
    if unit == "abs":
        return eta
    if mode == PPSM_P:
        return eta / 100.0 * abs(baseline.gm_cost)
    return {k: max(eta / 100.0 * abs(y), PRICE_BAND_FLOOR) for k, y in baseline.prices.items()}


def compute_metrics(
    baseline: Baseline,
    released_demand: dict,
    released: GaucResult,
) -> dict:
    """Per-run error metrics against the baseline outcome.

    Objective errors are |O* - O~| / O* in percent; a zero baseline
    objective yields a null metric and raises the zero flag.
    """
    d_true = baseline.stressed.demand.gas
    if set(d_true) != set(released_demand):
        raise ValueError("released profile keyed differently from the true demand")
    delta_d = sum(abs(released_demand[k] - d_true[k]) for k in sorted(d_true))
    out = {"delta_d": delta_d, "zero_objective": False}

    def rel(base: float, new: float) -> float | None:
        if abs(base) < 1e-12:
            out["zero_objective"] = True
            return None
        return abs(base - new) / abs(base) * 100.0

    out["delta_o_uc"] = rel(baseline.gauc.objective, released.objective)
    out["delta_o_e"] = rel(baseline.gauc.em.objective, released.em.objective)
    out["delta_o_g"] = rel(baseline.gauc.gm.objective, released.gm.objective)
    out["delta_o_total"] = rel(
        baseline.gauc.objective + baseline.gauc.gm.objective,
        released.objective + released.gm.objective,
    )
    return out


def run_single(
    baseline: Baseline,
    cfg: ExperimentConfig,
    mechanism: str,
    alpha: float,
    eta: float,
    e_factor: float,
    g_factor: float,
    seed: int,
) -> ExperimentRecord:
    rec = ExperimentRecord(
        instance=cfg.instance,
        mechanism=mechanism,
        alpha=alpha,
        eta=eta,
        eta_unit=cfg.eta_unit,
        epsilon=cfg.epsilon,
        e_factor=e_factor,
        g_factor=g_factor,
        seed=seed,
        method=cfg.method,
    )
    inst = baseline.stressed
    tols = ToleranceSet(time_limit=cfg.time_limit)

    t0 = time.monotonic()
    profile = obfuscate_demand(inst.demand.gas, PrivacyParams(cfg.epsilon, alpha, seed))
    rec.privacy_seconds = time.monotonic() - t0

    released = dict(profile.values)
    if mechanism in (PPSM_P, PPSM_D):
        params = FidelityParams(
            eta=eta_to_abs(eta, cfg.eta_unit, baseline, mechanism),
            hist_dispatch=baseline.hist_dispatch,
            norm=cfg.norm,
        )
        t0 = time.monotonic()
        if mechanism == PPSM_P:
            fid = primal_fidelity(inst, profile, baseline.gm_cost, params, tols)
        else:
            fid = dual_fidelity(inst, profile, baseline.prices, params, tols)
        rec.fidelity_seconds = time.monotonic() - t0
        if fid.status == "unsolved" or rec.fidelity_seconds > cfg.time_limit:
            rec.timeout = True
            return rec
        if not fid.ok:
            return rec
        released = fid.demand
        if abs(baseline.gm_cost) > 1e-12:
            rec.delta_o_g_hist = abs(baseline.gm_cost - fid.gm_objective) / abs(baseline.gm_cost) * 100.0

    t0 = time.monotonic()
    try:
        result = solve_gauc(with_gas_demand(inst, released), cfg.method, tols)
    except RuntimeError:  # big-M diagnostics or enumeration caps count as unsolved runs
        rec.gauc_seconds = time.monotonic() - t0
        return rec
    rec.gauc_seconds = time.monotonic() - t0
    if result.status == "unsolved" or rec.gauc_seconds > cfg.time_limit:
        rec.timeout = True
        return rec
    if not result.ok:
        return rec
    rec.feasible = True
    for key, val in compute_metrics(baseline, released, result).items():
        setattr(rec, key, val)
    return rec


def _run_batch(args) -> list[ExperimentRecord]:
    baseline, cfg, runs = args
    return [run_single(baseline, cfg, *run) for run in runs]


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[ExperimentRecord]:
    """Execute the full grid; per-run failures are recorded, never raised."""
    inst = get_instance(cfg.instance)
    records: list[ExperimentRecord] = []
    for e_factor in cfg.e_factors:
        for g_factor in cfg.g_factors:
            baseline = compute_baseline(inst, e_factor, g_factor, cfg.method, cfg.time_limit)
            runs = [
                (mech, alpha, eta, e_factor, g_factor, cfg.base_seed + rep)
                for mech in cfg.mechanisms
                for alpha in cfg.alphas
                for eta in cfg.etas
                for rep in range(cfg.seeds)
            ]
            if workers > 1:
                chunk = max(1, len(runs) // workers)
                batches = [(baseline, cfg, runs[i : i + chunk]) for i in range(0, len(runs), chunk)]
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    for out in pool.map(_run_batch, batches):
                        records.extend(out)
            else:
                records.extend(run_single(baseline, cfg, *run) for run in runs)
    records.sort(
        key=lambda r: (r.instance, r.mechanism, r.alpha, r.eta, r.e_factor, r.g_factor, r.seed)
    )
    return records


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _mean(vals: list[float]) -> float | None:
    vals = [v for v in vals if v is not None]
    return sum(vals) / len(vals) if vals else None


def aggregate_records(records: list[ExperimentRecord]) -> list[dict]:
    """Per (mechanism, alpha, eta): satisfaction rate and means over feasible runs."""
    groups: dict[tuple, list[ExperimentRecord]] = {}
    for r in records:
        groups.setdefault((r.mechanism, r.alpha, r.eta), []).append(r)
    out = []
    for (mech, alpha, eta), rows in sorted(groups.items()):
        feas = [r for r in rows if r.feasible]
        out.append(
            {
                "mechanism": mech,
                "alpha": alpha,
                "eta": eta,
                "runs": len(rows),
                "sat_pct": 100.0 * len(feas) / len(rows),
                "mean_delta_d": _mean([r.delta_d for r in feas]),
                "mean_delta_o_uc": _mean([r.delta_o_uc for r in feas]),
                "mean_delta_o_e": _mean([r.delta_o_e for r in feas]),
                "mean_delta_o_g": _mean([r.delta_o_g for r in feas]),
            }
        )
    return out


def heatmap_records(records: list[ExperimentRecord]) -> list[dict]:
    """Per (mechanism, e_factor, g_factor): mean total objective difference."""
    groups: dict[tuple, list[ExperimentRecord]] = {}
    for r in records:
        groups.setdefault((r.mechanism, r.e_factor, r.g_factor), []).append(r)
    out = []
    for (mech, e, g), rows in sorted(groups.items()):
        feas = [r for r in rows if r.feasible]
        out.append(
            {
                "mechanism": mech,
                "e_factor": e,
                "g_factor": g,
                "runs": len(rows),
                "sat_pct": 100.0 * len(feas) / len(rows),
                "mean_delta_o_total": _mean([r.delta_o_total for r in feas]),
            }
        )
    return out


def _write_csv(path, header: list[str], rows: list[list], timestamp: bool) -> None:
    try:
        with open(path, "w", newline="") as fh:
            if timestamp:
                fh.write(f"# generated {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def emit_results(records: list[ExperimentRecord], out_dir, fmt: str = "csv", timestamp: bool = True) -> list[str]:
    """Write results.{csv,json} plus aggregate and heatmap companions."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "json":
        path = out / "results.json"
        with open(path, "w") as fh:
            json.dump([{col: getattr(r, col) for col in RESULT_COLUMNS} for r in records], fh, indent=1)
        written.append(str(path))
    elif fmt == "csv":
        path = out / "results.csv"
        _write_csv(path, RESULT_COLUMNS, [r.row() for r in records], timestamp)
        written.append(str(path))
    else:
        raise ValueError(f"unknown format {fmt!r}")

    fmt_cell = lambda v: "" if v is None else (f"{v:.10g}" if isinstance(v, float) else v)
    agg = aggregate_records(records)
    agg_header = ["mechanism", "alpha", "eta", "runs", "sat_pct", "mean_delta_d",
                  "mean_delta_o_uc", "mean_delta_o_e", "mean_delta_o_g"]
    _write_csv(out / "aggregate.csv", agg_header, [[fmt_cell(row[k]) for k in agg_header] for row in agg], timestamp)
    written.append(str(out / "aggregate.csv"))
    heat = heatmap_records(records)
    heat_header = ["mechanism", "e_factor", "g_factor", "runs", "sat_pct", "mean_delta_o_total"]
    _write_csv(out / "heatmap.csv", heat_header, [[fmt_cell(row[k]) for k in heat_header] for row in heat], timestamp)
    written.append(str(out / "heatmap.csv"))
    return written
