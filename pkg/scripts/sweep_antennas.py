"""Delay bound versus number of antennas N (N x N links)."""

from _common import run

if __name__ == "__main__":
    raise SystemExit(run("sweep_antennas", "delay-bound", "--n-antennas", "2,3,4"))
