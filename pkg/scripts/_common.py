"""Shared runner: call the CLI with fixed arguments, writing CSV to results/."""

import sys
from pathlib import Path

from mimodelay.cli import main

RESULTS = Path(__file__).resolve().parent.parent / "results"


def run(name: str, command: str, *args: str) -> int:
    RESULTS.mkdir(exist_ok=True)
    out = RESULTS / f"{name}.csv"
    code = main([command, *args, "--out", str(out), *sys.argv[1:]])
    print(f"{name}: exit {code} -> {out}")
    return code
