"""Simulate the queue and check each analytic bound against it."""

from _common import run

if __name__ == "__main__":
    raise SystemExit(run("validate", "validate", "--epsilon", "1e-2,1e-3", "--hops", "1,2"))
