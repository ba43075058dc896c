#!/usr/bin/env python3
"""Forward-pass scaling study: verifies that runtime grows linearly with the
observation length and with the edge count of the road network."""

import argparse
from pathlib import Path

from hyperflow.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/scaling")
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raise SystemExit(cli_main([
        "bench", "--out", str(out / "timings.csv"),
        "--d", str(args.d), "--repeats", str(args.repeats),
    ]))


if __name__ == "__main__":
    main()
