"""Gilbert-Elliott model of a single spatial path."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DegenerateChainError(ValueError):
    pass


class PathState(enum.IntEnum):
    GOOD = 0
    BAD = 1


@dataclass(frozen=True)
class GEParams:
    """Per-slot transition probabilities of one good/bad path."""

    p_gb: float
    p_bg: float

    def __post_init__(self):
        for name in ("p_gb", "p_bg"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")

    @property
    def omega(self) -> float:
        return block_error_prob(self)

    def transition_matrix(self) -> np.ndarray:
        """2x2 matrix indexed [from, to] with GOOD=0, BAD=1."""
        return np.array(
            [[1.0 - self.p_gb, self.p_gb], [self.p_bg, 1.0 - self.p_bg]]
        )


def block_error_prob(params: GEParams) -> float:
    """Stationary probability of the bad state, p_gb / (p_gb + p_bg)."""
    total = params.p_gb + params.p_bg
    if total <= 0.0:
        raise DegenerateChainError("p_gb + p_bg must be positive")
    return params.p_gb / total


def params_for_fading_speed(omega: float, p_bg: float) -> GEParams:
    """Return the chain with bad-state probability ``omega`` and recovery ``p_bg``.

    Smaller ``p_bg`` means longer sojourns in both states (slower fading)
    at the same stationary error probability.  The good->bad probability is
    nudged by at most a few ulps so that ``block_error_prob`` of the result
    reproduces ``omega`` bit for bit whenever such a value exists.
    """
    if not 0.0 < omega < 1.0:
        raise ValueError(f"omega={omega} must lie in (0, 1)")
    if not 0.0 < p_bg <= 1.0:
        raise ValueError(f"p_bg={p_bg} must lie in (0, 1]")
    p_gb = p_bg * omega / (1.0 - omega)
    if p_gb > 1.0:
        raise ValueError(f"implied p_gb={p_gb} exceeds 1")

    best = p_gb
    best_err = abs(p_gb / (p_gb + p_bg) - omega)
    lo = hi = p_gb
    for _ in range(8):
        if best_err == 0.0:
            break
        lo = math.nextafter(lo, 0.0)
        hi = math.nextafter(hi, 1.0)
        for cand in (lo, hi):
            if 0.0 <= cand <= 1.0:
                err = abs(cand / (cand + p_bg) - omega)
                if err < best_err:
                    best, best_err = cand, err
    return GEParams(best, p_bg)


def step(state: PathState, params: GEParams, u: float) -> PathState:
    """Advance one slot using a uniform sample ``u`` in [0, 1)."""
    if state == PathState.GOOD:
        return PathState.BAD if u < params.p_gb else PathState.GOOD
    return PathState.GOOD if u < params.p_bg else PathState.BAD


def stationary(params: GEParams) -> np.ndarray:
    w = block_error_prob(params)
    return np.array([1.0 - w, w])


def _sojourn_lengths(
    p: float, size: int, cap: int, rng: np.random.Generator
) -> np.ndarray:
    # Geometric number of slots spent in a state left with per-slot prob p,
    # clipped to ``cap`` so cumulative sums cannot overflow.
    if p <= 0.0:
        return np.full(size, cap, dtype=np.int64)
    return np.minimum(rng.geometric(p, size=size), cap).astype(np.int64)


def simulate_paths(
    params: GEParams,
    n_paths: int,
    n_slots: int,
    rng: np.random.Generator,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Sample ``n_paths`` independent trajectories as a bool array (n_slots, n_paths).

    ``True`` marks a bad slot.  Runs of identical states are drawn as
    geometric sojourns, which has the same law as iterating :func:`step`
    slot by slot.  Without ``initial`` each path starts from the stationary
    distribution.
    """
    out = np.empty((n_slots, n_paths), dtype=bool)
    if n_slots == 0:
        return out
    if initial is None:
        omega = block_error_prob(params)
        initial = rng.random(n_paths) < omega
    initial = np.asarray(initial, dtype=bool)
    for j in range(n_paths):
        out[:, j] = _trajectory(params, bool(initial[j]), n_slots, rng)
    return out


def _trajectory(
    params: GEParams, bad: bool, n_slots: int, rng: np.random.Generator
) -> np.ndarray:
    states = np.empty(n_slots, dtype=bool)
    pos = 0
    while pos < n_slots:
        # Expected run length bounds how many sojourns one batch must hold.
        mean_cycle = 0.0
        for p in (params.p_gb, params.p_bg):
            mean_cycle += 1.0 / p if p > 0 else float(n_slots)
        batch = int(2 * (n_slots - pos) / mean_cycle) + 16
        cap = n_slots - pos + 1
        leave_bad = _sojourn_lengths(params.p_bg, batch, cap, rng)
        leave_good = _sojourn_lengths(params.p_gb, batch, cap, rng)
        if bad:
            runs = np.column_stack([leave_bad, leave_good]).ravel()
        else:
            runs = np.column_stack([leave_good, leave_bad]).ravel()
        ends = np.minimum(np.cumsum(runs), n_slots - pos)
        starts = np.concatenate(([0], ends[:-1]))
        flags = np.zeros(runs.size, dtype=bool)
        flags[0::2] = bad
        flags[1::2] = not bad
        lengths = ends - starts
        chunk = np.repeat(flags, lengths)
        states[pos : pos + chunk.size] = chunk
        pos += chunk.size
        if pos < n_slots:
            # Batch ran out mid-way: resume from the opposite of the last run.
            bad = not bool(flags[-1])
    return states
