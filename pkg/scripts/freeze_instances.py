"""Regenerate the packaged catalog JSON files from the builders."""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from ppsm.bench import build_med12, build_small6, build_tiny2
from ppsm.model import save_instance, validate_instance

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "ppsm" / "instances"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for builder in (build_tiny2, build_small6, build_med12):
        inst = builder()
        report = validate_instance(inst)
        if not report.ok:
            raise SystemExit(f"{inst.name}: " + "; ".join(map(str, report.violations)))
        save_instance(inst, OUT / f"{inst.name}.json")
        print(f"wrote {inst.name}.json")


if __name__ == "__main__":
    main()
