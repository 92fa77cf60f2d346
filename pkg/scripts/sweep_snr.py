"""Delay bound versus SNR."""

from _common import run

if __name__ == "__main__":
    raise SystemExit(run("sweep_snr", "delay-bound", "--snr-db", "12,14,16,18,20,22"))
