"""First-order capacity per antenna count at the calibrated SNR."""

from _common import run

if __name__ == "__main__":
    raise SystemExit(run("capacity_table", "capacity", "--n-antennas", "2,3,4"))
