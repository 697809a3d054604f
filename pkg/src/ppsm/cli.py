"""Command line entry points.

Subcommands mirror the pipeline phases so each can be scripted standalone:

    ppsm gen        synthesize an instance from a spec file
    ppsm baseline   solve the commitment problem on true data, emit publics
    ppsm obfuscate  privacy phase: release a noisy profile with provenance
    ppsm fidelity   fidelity phase: repair a noisy profile
    ppsm gauc       clear the commitment problem on a given profile
    ppsm run        full mechanism x alpha x eta x stress x seed sweep
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .bench import BenchSpec, generate_instance, get_instance
from .experiment import (
    ExperimentConfig,
    compute_baseline,
    emit_results,
    eta_to_abs,
    run_experiment,
    PPSM_P,
    PPSM_D,
)
from .fidelity import FidelityParams, dual_fidelity, primal_fidelity
from .model import save_instance, stress_scale, validate_instance, with_gas_demand
from .privacy import ObfuscatedProfile, PrivacyParams, obfuscate_demand
from .solver import ToleranceSet


def _write_json(obj, path):
    if path == "-":
        json.dump(obj, sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1)
            fh.write("\n")


def _cmd_gen(args):
    with open(args.spec) as fh:
        raw = json.load(fh)
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = BenchSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
    inst = generate_instance(spec)
    report = validate_instance(inst)
    if not report.ok:
        print("generated instance failed validation:", file=sys.stderr)
        for v in report.violations:
            print(f"  {v}", file=sys.stderr)
        return 1
    save_instance(inst, args.out)
    print(f"wrote {args.out}")
    return 0


def _stressed(args):
    return stress_scale(get_instance(args.instance), args.e_factor, args.g_factor)


def _cmd_baseline(args):
    baseline = compute_baseline(
        get_instance(args.instance), args.e_factor, args.g_factor, args.method, args.time_limit
    )
    out = {
        "instance": args.instance,
        "e_factor": args.e_factor,
        "g_factor": args.g_factor,
        "uc_objective": baseline.gauc.objective,
        "em_objective": baseline.gauc.em.objective,
        "gm_objective": baseline.gm_cost,
        "prices": {f"{n}|{t}": y for (n, t), y in sorted(baseline.prices.items())},
        "hist_dispatch": {f"{j}|{b}|{t}": x for (j, b, t), x in sorted(baseline.hist_dispatch.items())},
    }
    _write_json(out, args.out)
    return 0


def _cmd_obfuscate(args):
    inst = _stressed(args)
    profile = obfuscate_demand(inst.demand.gas, PrivacyParams(args.epsilon, args.alpha, args.seed))
    _write_json(profile.to_dict(), args.out)
    return 0


def _cmd_fidelity(args):
    inst = _stressed(args)
    with open(args.profile) as fh:
        profile = ObfuscatedProfile.from_dict(json.load(fh))
    baseline = compute_baseline(
        get_instance(args.instance), args.e_factor, args.g_factor, args.method, args.time_limit
    )
    mech = PPSM_P if args.mode == "primal" else PPSM_D
    params = FidelityParams(
        eta=eta_to_abs(args.eta, args.eta_unit, baseline, mech),
        hist_dispatch=baseline.hist_dispatch,
        norm=args.norm,
    )
    tols = ToleranceSet(time_limit=args.time_limit)
    if args.mode == "primal":
        res = primal_fidelity(inst, profile, baseline.gm_cost, params, tols)
    else:
        res = dual_fidelity(inst, profile, baseline.prices, params, tols)
    out = res.to_dict()
    out["provenance"] = {"epsilon": profile.epsilon, "alpha": profile.alpha, "seed": profile.seed}
    _write_json(out, args.out)
    return 0 if res.ok else 2


def _cmd_gauc(args):
    inst = _stressed(args)
    if args.demand:
        with open(args.demand) as fh:
            obj = json.load(fh)
        values = obj.get("demand", obj.get("values", obj))
        released = {}
        for key, v in values.items():
            node, t = key.rsplit("|", 1)
            released[(node, int(t))] = float(v)
        inst = with_gas_demand(inst, released)
    tols = ToleranceSet(time_limit=args.time_limit)
    if args.method == "enumerate":
        from .gauc import solve_gauc_enumerate

        result = solve_gauc_enumerate(inst, tols=tols, time_limit=args.time_limit)
    else:
        from .gauc import solve_gauc_milp

        result = solve_gauc_milp(inst, tols=tols, dump_file=args.dump_lp)
    _write_json(result.to_dict(), args.out)
    return 0 if result.ok else 2


def _cmd_run(args):
    cfg = ExperimentConfig.from_json(args.config)
    records = run_experiment(cfg, workers=args.workers)
    written = emit_results(records, args.out, fmt=args.format, timestamp=not args.no_timestamp)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppsm", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, time_limit=60.0):
        sp.add_argument("--instance", required=True, help="catalog name or instance JSON path")
        sp.add_argument("--e-factor", type=float, default=1.0)
        sp.add_argument("--g-factor", type=float, default=1.0)
        sp.add_argument("--time-limit", type=float, default=time_limit)
        sp.add_argument("--out", default="-", help="output path, '-' for stdout")

    sp = sub.add_parser("gen", help="generate a synthetic instance")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_gen)

    sp = sub.add_parser("baseline", help="solve the true-data commitment problem")
    common(sp)
    sp.add_argument("--method", choices=("milp", "enumerate"), default="milp")
    sp.set_defaults(func=_cmd_baseline)

    sp = sub.add_parser("obfuscate", help="privacy phase")
    common(sp)
    sp.add_argument("--epsilon", type=float, default=math.log(2.0))
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_obfuscate)

    sp = sub.add_parser("fidelity", help="fidelity phase")
    common(sp)
    sp.add_argument("--profile", required=True, help="obfuscated profile JSON")
    sp.add_argument("--mode", choices=("primal", "dual"), required=True)
    sp.add_argument("--eta", type=float, required=True)
    sp.add_argument("--eta-unit", choices=("abs", "pct"), default="pct")
    sp.add_argument("--norm", choices=("l1", "l2"), default="l1")
    sp.add_argument("--method", choices=("milp", "enumerate"), default="milp")
    sp.set_defaults(func=_cmd_fidelity)

    sp = sub.add_parser("gauc", help="clear the commitment problem")
    common(sp)
    sp.add_argument("--demand", help="optional released profile JSON replacing the gas demand")
    sp.add_argument("--method", choices=("milp", "enumerate"), default="milp")
    sp.add_argument("--dump-lp", default=None, help="write the assembled problem in LP text form")
    sp.set_defaults(func=_cmd_gauc)

    sp = sub.add_parser("run", help="full experiment sweep")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--no-timestamp", action="store_true")
    sp.set_defaults(func=_cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
