"""Command-line front end: capacity tables, delay-bound sweeps, validation.

    python -m mimodelay capacity --n-antennas 2,3
    python -m mimodelay delay-bound --epsilon 1e-2,1e-4,1e-6
    python -m mimodelay multihop --hops 1,2,3,4 --n-antennas 2,3
    python -m mimodelay validate --epsilon 1e-3
    python -m mimodelay calibrate

Every ExperimentConfig key is also a flag (underscores become dashes);
flags override ``--config`` file values.  Output is CSV on stdout or
``--out``.  Exit status: 0 success, 2 if every sweep point was
infeasible, 1 on error or failed validation.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import sys
from dataclasses import fields

from . import config as C
from .bound import Infeasible, NonConvergent, delay_bound
from .sim import SimConfig, run

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


class _Table:
    def __init__(self, header):
        self.buf = io.StringIO()
        self.w = csv.writer(self.buf, lineterminator="\n")
        self.w.writerow(header)

    def row(self, *vals):
        self.w.writerow([_fmt(v) for v in vals])

    def text(self) -> str:
        return self.buf.getvalue()


def _bound(cfg: C.ExperimentConfig, n, snr, p_bg, mbps, eps, hops=1):
    """(DelayBound or None, status) for one sweep point."""
    service = C.tandem(cfg, n, snr, p_bg, hops)
    try:
        return delay_bound(cfg.arrival(mbps), service, eps, slot_us=cfg.slot_us), "ok"
    except Infeasible:
        return None, "infeasible"
    except NonConvergent:
        return None, "nonconvergent"


def cmd_capacity(cfg: C.ExperimentConfig) -> tuple[str, int]:
    t = _Table([
        "n_antennas", "snr_db", "dof", "pi", "rate_bits", "rate_bits_se",
        "rate_blocks", "first_order_bits", "first_order_se",
    ])
    for n, snr in itertools.product(cfg.n_antennas, C.snr_values(cfg)):
        tab = C.capacity_table(cfg, n, snr, cfg.p_bg[0])
        for i in range(n + 1):
            t.row(
                n, snr, i, float(tab.pi[i]), float(tab.class_bits[i]),
                float(tab.class_stderr[i]), float(tab.chain.rates[i]),
                tab.first_order_bits, tab.first_order_stderr,
            )
    return t.text(), EXIT_OK


_SWEEP_KEYS = ("n_antennas", "epsilon", "arrival_rate_mbps", "snr_db", "p_bg")


def cmd_delay_bound(cfg: C.ExperimentConfig) -> tuple[str, int]:
    axes = {
        "n_antennas": cfg.n_antennas,
        "epsilon": cfg.epsilon,
        "arrival_rate_mbps": cfg.arrival_rate_mbps,
        "snr_db": C.snr_values(cfg),
        "p_bg": cfg.p_bg,
    }
    varying = [k for k in _SWEEP_KEYS if len(axes[k]) > 1] or ["n_antennas"]
    t = _Table(["sweep_var", "value", "d_slots", "d_ms", "theta_star", "feasible"])
    n_ok = 0
    for point in itertools.product(*(axes[k] for k in _SWEEP_KEYS)):
        p = dict(zip(_SWEEP_KEYS, point))
        b, status = _bound(
            cfg, p["n_antennas"], p["snr_db"], p["p_bg"],
            p["arrival_rate_mbps"], p["epsilon"],
        )
        value = "|".join(_fmt(p[k]) for k in varying)
        if b is None:
            t.row("|".join(varying), value, "", "", "", status)
        else:
            n_ok += 1
            t.row("|".join(varying), value, b.d, b.d_ms, b.theta_star, True)
    return t.text(), EXIT_OK if n_ok else EXIT_INFEASIBLE


def cmd_multihop(cfg: C.ExperimentConfig) -> tuple[str, int]:
    t = _Table(["hops", "n_antennas", "d_slots", "d_ms"])
    snr = C.snr_values(cfg)[0]
    n_ok = 0
    for n, h in itertools.product(cfg.n_antennas, cfg.hops):
        b, _ = _bound(cfg, n, snr, cfg.p_bg[0], cfg.arrival_rate_mbps[0], cfg.epsilon[0], h)
        if b is None:
            t.row(h, n, "", "")
        else:
            n_ok += 1
            t.row(h, n, b.d, b.d_ms)
    return t.text(), EXIT_OK if n_ok else EXIT_INFEASIBLE


def validate_point(cfg: C.ExperimentConfig, n, snr, p_bg, mbps, eps, hops):
    """Bound and simulation for one point: (bound, status, SimResult or None)."""
    b, status = _bound(cfg, n, snr, p_bg, mbps, eps, hops)
    if b is None:
        return b, status, None
    tab = C.capacity_table(cfg, n, snr, p_bg)
    res = run(SimConfig(
        n_slots=cfg.n_slots,
        ge=cfg.ge_params(p_bg),
        rates=tab.chain.rates,
        arrival=cfg.arrival(mbps),
        n_tx=n,
        n_rx=n,
        hops=hops,
        rng_seed=cfg.rng_seed,
        warmup_slots=cfg.warmup_slots,
    ))
    return b, status, res


def cmd_validate(cfg: C.ExperimentConfig) -> tuple[str, int]:
    t = _Table([
        "n_antennas", "hops", "epsilon", "arrival_rate_mbps", "d_slots",
        "n_blocks", "violation_freq", "ci_low", "ci_high", "status",
    ])
    snr = C.snr_values(cfg)[0]
    failed, n_ok = False, 0
    for n, h, eps, mbps in itertools.product(
        cfg.n_antennas, cfg.hops, cfg.epsilon, cfg.arrival_rate_mbps
    ):
        b, status, res = validate_point(cfg, n, snr, cfg.p_bg[0], mbps, eps, h)
        if res is None:
            t.row(n, h, eps, mbps, "", "", "", "", "", status)
            continue
        n_ok += 1
        lo, hi = res.confidence(b.d)
        # pass: the whole 99% interval is within eps; fail: it lies entirely
        # above eps; otherwise too few blocks to decide.
        status = "pass" if hi <= eps else ("fail" if lo > eps else "inconclusive")
        failed |= status == "fail"
        t.row(n, h, eps, mbps, b.d, res.n_blocks, res.violation_freq(b.d), lo, hi, status)
    if failed:
        return t.text(), EXIT_ERROR
    return t.text(), EXIT_OK if n_ok else EXIT_INFEASIBLE


def cmd_calibrate(cfg: C.ExperimentConfig) -> tuple[str, int]:
    t = _Table(["n_antennas", "target_capacity", "snr_db", "config_hash"])
    t.row(2, cfg.target_capacity, C.calibrate_snr(cfg, 2), cfg.config_hash())
    return t.text(), EXIT_OK


COMMANDS = {
    "capacity": cmd_capacity,
    "delay-bound": cmd_delay_bound,
    "multihop": cmd_multihop,
    "validate": cmd_validate,
    "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mimodelay", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("--seed", type=int, help="alias for --rng-seed")
    ap.add_argument("--out", help="output path (default stdout)")
    for f in fields(C.ExperimentConfig):
        if f.name == "output":
            continue
        ap.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar="VALUE")
    return ap


def config_from_args(args) -> C.ExperimentConfig:
    cfg = C.load_config(args.config) if args.config else C.ExperimentConfig()
    lines = [
        f"{f.name} = {getattr(args, f.name)}"
        for f in fields(cfg)
        if getattr(args, f.name, None) is not None
    ]
    if args.seed is not None:
        lines.append(f"rng_seed = {args.seed}")
    if args.out is not None:
        lines.append(f"output = {args.out}")
    return C.parse_config_text("\n".join(lines), cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        text, code = COMMANDS[args.command](cfg)
    except Exception as exc:  # noqa: BLE001 - report and map to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if cfg.output in ("", "-"):
        sys.stdout.write(text)
    else:
        with open(cfg.output, "w", newline="") as fh:
            fh.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
