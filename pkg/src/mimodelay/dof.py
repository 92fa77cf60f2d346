"""Degrees-of-freedom aggregation of the product Gilbert-Elliott chain.

A sub-state assigns good/bad to all N*M paths.  It is stored as an integer
mask whose bit ``m * n_tx + n`` is set when path (rx m, tx n) is good, so
for 2x2 the bits run h11, h12, h21, h22 and ``"gbbg"`` is mask 0b1001.
Sub-states are grouped by the size of a maximum matching between transmit
and receive antennas over good paths, giving K = min(N, M) + 1 classes.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .channel import GainPool, MimoConfig
from .ge import GEParams, block_error_prob

MAX_ENUM_BITS = 20


class EnumerationCapError(ValueError):
    pass


def mask_from_string(s: str, n_tx: int, n_rx: int) -> int:
    """Parse 'gbbg'-style listings (h11, h12, ..., row-major) into a mask."""
    s = s.strip().lower()
    if len(s) != n_tx * n_rx or set(s) - {"g", "b"}:
        raise ValueError(f"bad substate string {s!r} for {n_rx}x{n_tx}")
    return sum(1 << p for p, c in enumerate(s) if c == "g")


def mask_to_string(mask: int, n_tx: int, n_rx: int) -> str:
    return "".join("g" if (mask >> p) & 1 else "b" for p in range(n_tx * n_rx))


def mask_to_matrix(mask: int, n_tx: int, n_rx: int) -> np.ndarray:
    bits = [(mask >> p) & 1 for p in range(n_tx * n_rx)]
    return np.array(bits, dtype=bool).reshape(n_rx, n_tx)


def matrix_to_mask(good: np.ndarray) -> int:
    flat = np.asarray(good, dtype=bool).ravel()
    return sum(1 << p for p, g in enumerate(flat) if g)


def max_matching(good: np.ndarray) -> int:
    """Maximum bipartite matching size between rows and columns of ``good``.

    Simple augmenting-path search (Kuhn); instances have at most a handful
    of antennas so asymptotics do not matter.
    """
    good = np.asarray(good, dtype=bool)
    n_rows, n_cols = good.shape
    adj = [np.flatnonzero(good[r]).tolist() for r in range(n_rows)]
    match_col = [-1] * n_cols

    def augment(r, seen):
        for c in adj[r]:
            if seen[c]:
                continue
            seen[c] = True
            if match_col[c] < 0 or augment(match_col[c], seen):
                match_col[c] = r
                return True
        return False

    size = 0
    for r in range(n_rows):
        if adj[r] and augment(r, [False] * n_cols):
            size += 1
    return size


def dof_of_substate(mask: int, n_tx: int, n_rx: int) -> int:
    return max_matching(mask_to_matrix(mask, n_tx, n_rx))


def _check_bits(n_tx: int, n_rx: int, max_bits: int):
    if n_tx * n_rx > max_bits:
        raise EnumerationCapError(
            f"{n_rx}x{n_tx} has {n_tx * n_rx} paths; enumeration capped at {max_bits}"
        )


@lru_cache(maxsize=None)
def _dof_table(n_tx: int, n_rx: int) -> np.ndarray:
    table = np.array(
        [dof_of_substate(m, n_tx, n_rx) for m in range(1 << (n_tx * n_rx))],
        dtype=np.int8,
    )
    table.setflags(write=False)
    return table


def dof_table(n_tx: int, n_rx: int, max_bits: int = MAX_ENUM_BITS) -> np.ndarray:
    """DOF of every mask, indexed by mask value."""
    _check_bits(n_tx, n_rx, max_bits)
    return _dof_table(n_tx, n_rx)


def popcount(masks: np.ndarray, n_bits: int) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    count = np.zeros(masks.shape, dtype=np.int64)
    for p in range(n_bits):
        count += (masks >> p) & 1
    return count


def substate_stationary(
    params: GEParams, n_tx: int, n_rx: int, max_bits: int = MAX_ENUM_BITS
) -> np.ndarray:
    """Stationary probability of every sub-state (independent paths)."""
    _check_bits(n_tx, n_rx, max_bits)
    n = n_tx * n_rx
    omega = block_error_prob(params)
    n_good = popcount(np.arange(1 << n), n)
    return np.power(1.0 - omega, n_good) * np.power(omega, n - n_good)


def _apply_product_kernel(
    vec: np.ndarray, params: GEParams, n_bits: int
) -> np.ndarray:
    # (P_path ⊗ ... ⊗ P_path) @ vec over bit values {0: bad, 1: good}.
    T = np.array([[1.0 - params.p_bg, params.p_bg], [params.p_gb, 1.0 - params.p_gb]])
    t = vec.reshape((2,) * n_bits)
    for axis in range(n_bits):
        t = np.moveaxis(np.tensordot(T, t, axes=([1], [axis])), 0, axis)
    return t.reshape(-1)


@dataclass(frozen=True, eq=False)
class DofChain:
    """Aggregated K-state service chain.

    ``rates[i]`` is the service (data blocks per slot) in DOF class ``i``;
    ``Q[i, j]`` is the stationary-weighted probability of moving from class
    ``i`` to class ``j`` in one slot.
    """

    pi: np.ndarray
    Q: np.ndarray
    rates: np.ndarray
    empty_classes: tuple = field(default=())

    def __post_init__(self):
        for name in ("pi", "Q", "rates"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        k = self.pi.size
        if self.Q.shape != (k, k) or self.rates.shape != (k,):
            raise ValueError("pi, Q, rates dimensions disagree")
        if np.any(self.rates < 0):
            raise ValueError("rates must be nonnegative")

    @property
    def k_states(self) -> int:
        return self.pi.size

    @property
    def first_order_capacity(self) -> float:
        return float(self.rates @ self.pi)

    def with_rates(self, rates) -> "DofChain":
        return DofChain(self.pi, self.Q, np.asarray(rates, float), self.empty_classes)

    def to_text(self) -> str:
        k = self.k_states
        header = "state pi rate " + " ".join(f"q{j}" for j in range(k))
        rows = [header]
        for i in range(k):
            vals = [repr(float(self.pi[i])), repr(float(self.rates[i]))]
            vals += [repr(float(q)) for q in self.Q[i]]
            rows.append(" ".join([str(i)] + vals))
        return "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DofChain":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        body = [ln.split() for ln in lines[1:]]
        pi = [float(r[1]) for r in body]
        rates = [float(r[2]) for r in body]
        Q = [[float(x) for x in r[3:]] for r in body]
        return cls(np.array(pi), np.array(Q), np.array(rates))


def lump(
    params: GEParams, n_tx: int, n_rx: int, max_bits: int = MAX_ENUM_BITS
) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Class stationary vector and lumped transition matrix.

    Returns ``(pi, Q, empty_classes)``; classes with zero stationary mass
    get an identity row in ``Q``.
    """
    dofs = dof_table(n_tx, n_rx, max_bits).astype(np.int64)
    n_bits = n_tx * n_rx
    k = min(n_tx, n_rx) + 1
    pi_sub = substate_stationary(params, n_tx, n_rx, max_bits)
    pi = np.bincount(dofs, weights=pi_sub, minlength=k)

    flow = np.zeros((k, k))
    for j in range(k):
        to_j = _apply_product_kernel((dofs == j).astype(float), params, n_bits)
        flow[:, j] = np.bincount(dofs, weights=pi_sub * to_j, minlength=k)

    Q = np.zeros((k, k))
    empty = []
    for i in range(k):
        if pi[i] > 0:
            Q[i] = flow[i] / pi[i]
        else:
            Q[i, i] = 1.0
            empty.append(i)
    return pi, Q, tuple(empty)


def build_chain(
    params: GEParams,
    class_rates,
    n_tx: int,
    n_rx: int | None = None,
    max_bits: int = MAX_ENUM_BITS,
) -> DofChain:
    n_rx = n_tx if n_rx is None else n_rx
    rates = np.asarray(class_rates, dtype=float)
    k = min(n_tx, n_rx) + 1
    if rates.shape != (k,):
        raise ValueError(f"need {k} class rates, got {rates.shape}")
    if rates[0] != 0.0:
        raise ValueError("class 0 (no DOF) must have rate 0")
    if np.any(np.diff(rates) < 0):
        warnings.warn(f"class rates not nondecreasing in DOF: {rates}", stacklevel=2)
    pi, Q, empty = lump(params, n_tx, n_rx, max_bits)
    return DofChain(pi, Q, rates, empty)


def _path_permutations(n_tx: int, n_rx: int):
    for rp in itertools.permutations(range(n_rx)):
        for cp in itertools.permutations(range(n_tx)):
            yield [rp[m] * n_tx + cp[n] for m in range(n_rx) for n in range(n_tx)]


@lru_cache(maxsize=None)
def _canonical(n_tx: int, n_rx: int) -> np.ndarray:
    n = n_tx * n_rx
    masks = np.arange(1 << n, dtype=np.int64)
    bits = [(masks >> p) & 1 for p in range(n)]
    canon = masks.copy()
    for perm in _path_permutations(n_tx, n_rx):
        permuted = np.zeros_like(masks)
        for p, q in enumerate(perm):
            permuted |= bits[p] << q
        np.minimum(canon, permuted, out=canon)
    canon.setflags(write=False)
    return canon


def canonical_masks(n_tx: int, n_rx: int, max_bits: int = 16) -> np.ndarray:
    """Smallest mask in each sub-state's (rx-permutation x tx-permutation) orbit."""
    _check_bits(n_tx, n_rx, max_bits)
    return _canonical(n_tx, n_rx)


def class_members(
    n_tx: int, n_rx: int, use_orbits: bool = True, max_bits: int = MAX_ENUM_BITS
) -> list[list[int]]:
    """Sub-state masks per DOF class; one per symmetry orbit if ``use_orbits``."""
    dofs = dof_table(n_tx, n_rx, max_bits)
    if use_orbits:
        masks = np.unique(canonical_masks(n_tx, n_rx))
    else:
        masks = np.arange(1 << (n_tx * n_rx))
    k = min(n_tx, n_rx) + 1
    return [[int(m) for m in masks if dofs[m] == i] for i in range(k)]


@dataclass(frozen=True)
class ClassCapacity:
    """Minimum mean capacity (bits/s/Hz) over the sub-states of one class."""

    dof: int
    capacity: float
    stderr: float
    argmin_mask: int
    per_substate: dict


def class_capacities(
    config: MimoConfig,
    pool: GainPool | None = None,
    use_orbits: bool = True,
    rho: float | None = None,
) -> list[ClassCapacity]:
    pool = GainPool(config) if pool is None else pool
    rho = config.rho if rho is None else rho
    n_tx, n_rx = config.n_tx, config.n_rx
    out = []
    for i, members in enumerate(class_members(n_tx, n_rx, use_orbits)):
        if i == 0:
            out.append(ClassCapacity(0, 0.0, 0.0, 0, {0: (0.0, 0.0)}))
            continue
        est = {}
        for m in members:
            e = pool.mean_capacity(mask_to_matrix(m, n_tx, n_rx), rho)
            est[m] = (e.mean, e.stderr)
        best = min(est, key=lambda m: est[m][0])
        out.append(ClassCapacity(i, est[best][0], est[best][1], best, est))
    return out


def class_rate(
    class_index: int,
    config: MimoConfig,
    bandwidth_hz: float = 40e6,
    slot_us: float = 31.0,
    block_bytes: int = 2312,
    pool: GainPool | None = None,
) -> tuple[float, float]:
    """Rate of one DOF class in blocks/slot, with its Monte-Carlo standard error."""
    from .config import rate_conversion

    caps = class_capacities(config, pool)
    c = caps[class_index]
    conv = rate_conversion(1.0, bandwidth_hz, slot_us, block_bytes)
    return c.capacity * conv, c.stderr * conv
