"""Run the reference verification and print a one-line summary per check.

    python3 scripts/run_reference.py [configs/reference.toml] [--workers 2]
"""

import argparse
from pathlib import Path

from ipn.harness import ExperimentConfig, verify

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default=str(ROOT / "configs" / "reference.toml"))
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", default="reference_report.json")
    args = ap.parse_args(argv)

    code, report = verify(ExperimentConfig.from_toml(args.config), output=args.out, workers=args.workers)
    for name, entry in report["checks"].items():
        print(f"{name:15s} {'pass' if entry['pass'] else 'FAIL'}")
    t = report["metadata"]["timing"]["total_s"]
    print(f"overall {'pass' if report['pass'] else 'FAIL'} in {t:.1f}s -> {args.out}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
