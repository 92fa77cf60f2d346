"""Discrete-time fluid FIFO queue over simulated Gilbert-Elliott paths.

Each slot every path advances one step, the sub-state is reduced to its
DOF class and the server offers that class's rate in blocks.  Service is
fluid: fractional blocks may be served, and block ``k`` (the data in
``(k-1, k]``) counts as arrived/departed in the first slot where the
cumulative arrivals/departures reach ``k``.  Data arriving in a slot can
leave in the same slot, and with several hops the departures of one hop
are the next hop's arrivals in the same slot (cut-through).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta

from . import dof
from .ge import GEParams, simulate_paths
from .mgf import PeriodicSource

# Slack for comparing float cumulative sums against integer block indices.
_TOL = 1e-9


@dataclass(frozen=True)
class SimConfig:
    n_slots: int
    ge: GEParams
    rates: tuple
    arrival: PeriodicSource
    n_tx: int = 2
    n_rx: int = 2
    hops: int = 1
    rng_seed: int = 0
    warmup_slots: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if self.hops < 1:
            raise ValueError("hops must be >= 1")
        if self.n_slots <= self.warmup_slots or self.warmup_slots < 0:
            raise ValueError("need 0 <= warmup_slots < n_slots")
        if len(self.rates) != min(self.n_tx, self.n_rx) + 1:
            raise ValueError("one rate per DOF class required")


def binomial_ci(k: int, n: int, level: float = 0.99) -> tuple[float, float]:
    """Two-sided Clopper-Pearson interval for k successes in n trials."""
    if n == 0:
        return 0.0, 1.0
    a = (1.0 - level) / 2.0
    lo = 0.0 if k == 0 else float(beta.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1.0 - a, k + 1, n - k))
    return lo, hi


@dataclass
class SimResult:
    """Per-block delays of blocks arriving after warmup.

    Blocks still queued at the end are censored; they count as violations
    for every d.
    """

    delay_samples: np.ndarray
    n_censored: int
    class_counts: np.ndarray
    arrived: float
    departed: float
    backlog: float
    level: float = 0.99
    meta: dict = field(default_factory=dict)

    @property
    def n_blocks(self) -> int:
        return int(self.delay_samples.size + self.n_censored)

    def violations(self, d: int) -> int:
        return int(np.count_nonzero(self.delay_samples > d) + self.n_censored)

    def violation_freq(self, d: int) -> float:
        n = self.n_blocks
        return self.violations(d) / n if n else 0.0

    def confidence(self, d: int) -> tuple[float, float]:
        return binomial_ci(self.violations(d), self.n_blocks, self.level)

    def ccdf_csv(self, d_max: int | None = None) -> str:
        if d_max is None:
            d_max = int(self.delay_samples.max()) if self.delay_samples.size else 0
        # One pass: counts of delays above each d.
        hist = np.bincount(self.delay_samples, minlength=d_max + 2)
        above = hist[::-1].cumsum()[::-1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d_slots", "ccdf", "ci_low", "ci_high"])
        n = self.n_blocks
        for d in range(d_max + 1):
            k = int(above[d + 1]) + self.n_censored if d + 1 < above.size else self.n_censored
            lo, hi = binomial_ci(k, n, self.level)
            w.writerow([d, repr(k / n if n else 0.0), repr(lo), repr(hi)])
        return buf.getvalue()


def fifo_departures(arrivals: np.ndarray, service: np.ndarray) -> np.ndarray:
    """Cumulative departures D(t) = S(t) + min_{0<=u<=t} (A(u) - S(u)).

    Inputs are per-slot amounts for slots 1..T; output has T + 1 entries
    with D(0) = 0.
    """
    A = np.concatenate([[0.0], np.cumsum(arrivals)])
    S = np.concatenate([[0.0], np.cumsum(service)])
    return S + np.minimum.accumulate(A - S)


def periodic_arrivals(source: PeriodicSource, n_slots: int, offset: int) -> np.ndarray:
    a = np.zeros(n_slots)
    a[(np.arange(n_slots) + offset) % source.period == 0] = source.sigma
    return a


def class_sequence(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """DOF class of every slot for one hop."""
    bad = simulate_paths(cfg.ge, cfg.n_tx * cfg.n_rx, cfg.n_slots, rng)
    masks = np.zeros(cfg.n_slots, dtype=np.int32)
    for p in range(cfg.n_tx * cfg.n_rx):
        masks |= (~bad[:, p]).astype(np.int32) << p
    return dof.dof_table(cfg.n_tx, cfg.n_rx)[masks]


def run(cfg: SimConfig) -> SimResult:
    ss = np.random.SeedSequence(cfg.rng_seed)
    phase_seq, *hop_seqs = ss.spawn(cfg.hops + 1)
    src = cfg.arrival
    if not float(src.period).is_integer():
        raise ValueError("simulation needs an integer period")
    offset = int(np.random.default_rng(phase_seq).integers(int(src.period)))
    arrivals = periodic_arrivals(src, cfg.n_slots, offset)

    rates = np.asarray(cfg.rates)
    counts = np.zeros(rates.size, dtype=np.int64)
    flow = arrivals
    for seq in hop_seqs:
        classes = class_sequence(cfg, np.random.default_rng(seq))
        counts += np.bincount(classes, minlength=rates.size)
        D = fifo_departures(flow, rates[classes])
        flow = np.diff(D)

    A = np.concatenate([[0.0], np.cumsum(arrivals)])
    total_in, total_out = float(A[-1]), float(D[-1])
    first = math.floor(A[cfg.warmup_slots] + _TOL) + 1
    last = math.floor(total_in + _TOL)
    k = np.arange(first, last + 1, dtype=float)
    t_arr = np.searchsorted(A, k - _TOL, side="left")
    t_dep = np.searchsorted(D, k - _TOL, side="left")
    done = t_dep <= cfg.n_slots
    delays = (t_dep[done] - t_arr[done]).astype(np.int64)
    return SimResult(
        delay_samples=delays,
        n_censored=int(np.count_nonzero(~done)),
        class_counts=counts,
        arrived=total_in,
        departed=total_out,
        backlog=total_in - total_out,
        meta={"offset": offset, "hops": cfg.hops, "n_slots": cfg.n_slots},
    )
