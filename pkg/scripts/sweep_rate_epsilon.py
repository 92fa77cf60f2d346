"""Delay bound versus arrival rate, for several violation probabilities."""

from _common import run

if __name__ == "__main__":
    for eps in ("1e-2", "1e-4", "1e-6"):
        run(f"sweep_rate_eps{eps}", "delay-bound",
            "--arrival-rate-mbps", "120,150,180,210,240,270", "--epsilon", eps)
