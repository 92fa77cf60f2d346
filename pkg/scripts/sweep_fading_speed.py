"""Delay bound versus fading speed p_bg at a fixed block error probability."""

from _common import run

if __name__ == "__main__":
    raise SystemExit(run("sweep_fading_speed", "delay-bound",
                         "--p-bg", "0.001,0.003,0.01,0.03,0.1"))
