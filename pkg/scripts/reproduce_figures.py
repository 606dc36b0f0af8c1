"""Run every shipped figure config through the CLI into one output tree."""

import argparse
import json
import sys
from pathlib import Path

from smallcost.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(out: Path, skip_solve: bool) -> int:
    failures = 0
    for cfg in sorted((ROOT / "configs").glob("*.json")):
        command = json.loads(cfg.read_text())["command"]
        if skip_solve and command == "solve" and "fig4" in cfg.stem:
            continue
        print(f"== {cfg.stem} ({command})", flush=True)
        code = main([command, "--config", str(cfg), "--out", str(out / cfg.stem)])
        failures += code != 0
    return failures


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "out")
    ap.add_argument("--skip-solve", action="store_true", help="skip the two-asset solves (slowest)")
    args = ap.parse_args()
    sys.exit(1 if run(args.out, args.skip_solve) else 0)
