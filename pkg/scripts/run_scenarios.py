"""Run every bundled scenario through the CLI and print headline numbers per victim."""

import argparse
import csv
import sys
import time
from pathlib import Path

from aitf.cli import main as cli

SCENARIOS = ["scenario1", "scenario2", "scenario3", "scenario4"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--only", nargs="*", default=SCENARIOS)
    args = ap.parse_args(argv)

    for name in args.only:
        out = Path(args.out) / name
        t0 = time.perf_counter()
        code = cli(["run", "--scenario", name, "--out", str(out), "--seed", str(args.seed)])
        if code:
            return code
        with open(out / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        print(f"{name} ({time.perf_counter() - t0:.1f} s)")
        for row in rows:
            print(f"  victim {row['victim']}: restoration {row['restoration_s']} s, "
                  f"requests {row['requests_sent']}, escalations {row['escalations']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
