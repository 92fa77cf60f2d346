"""Moment generating functions of arrivals and of (multi-hop) service.

Every service model is represented by a nonnegative linear system
``(C, A, B, D)`` whose impulse response is the MGF sequence:

    Mbar_S(theta, 0) = D,    Mbar_S(theta, t) = C A^(t-1) B   (t >= 1).

For a Markov-modulated server C = pi R, A = Q R, B = 1 and D = 1 with
R = diag(exp(-theta r_i)).  A tandem of independent hops is the series
connection of the per-hop systems, whose impulse response is the discrete
convolution of the per-hop sequences.  Sequences are produced in the log
domain by block powers of A normalized by its spectral radius, so horizons
of millions of slots stay cheap and never under- or overflow.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .dof import DofChain

_BLOCK = 256
_CACHE_ENTRIES = 8


@dataclass(frozen=True)
class Envelope:
    """Upper bound Mbar(t) <= exp(log_c) * C(t + degree, degree) * lam^t for t >= start."""

    log_c: float
    log_lam: float
    degree: int = 0
    start: int = 0


def log_binom(n, k):
    return gammaln(np.asarray(n) + 1.0) - gammaln(k + 1.0) - gammaln(np.asarray(n) - k + 1.0)


# --------------------------------------------------------------------------
# Arrivals


@dataclass(frozen=True)
class PeriodicSource:
    """``sigma`` blocks every ``period`` slots with a uniformly random phase."""

    sigma: float
    period: float

    def __post_init__(self):
        if self.sigma < 0 or self.period < 1:
            raise ValueError("need sigma >= 0 and period >= 1")

    @property
    def rate(self) -> float:
        return self.sigma / self.period

    def log_mgf(self, theta: float, t):
        t = np.asarray(t, dtype=float)
        x = t / self.period
        k = np.floor(x)
        frac = x - k
        a = theta * self.sigma
        # log(1 + f (e^a - 1)) = log((1 - f) + f e^a), stable for large a.
        with np.errstate(divide="ignore"):
            mix = np.logaddexp(np.log1p(-frac), np.log(frac) + a)
        return a * k + mix

    def mgf(self, theta: float, t):
        return np.exp(self.log_mgf(theta, t))

    def log_envelope(self, theta: float) -> tuple[float, float]:
        """(log c, g) with M_A(theta, u) <= exp(log c + g u) for all u >= 0."""
        return theta * self.sigma, theta * self.rate

    def lagged_log_sums(self, theta: float, log_b: np.ndarray) -> np.ndarray:
        """log sum_{u=0}^{S-tau} M_A(theta, u) b(tau + u) for tau = 0..S.

        ``log_b`` holds log b(0..S).  For an integer period the sum over u
        is split by residue modulo the period, giving O(S * period) work.
        """
        p = self.period
        if float(p).is_integer():
            return self._lagged_periodic(theta, np.asarray(log_b, float), int(p))
        return self._lagged_direct(theta, np.asarray(log_b, float))

    def _lagged_periodic(self, theta, log_b, p):
        n = log_b.size
        a = theta * self.sigma
        rows = -(-n // p) + 1
        pad = np.full(rows * p, -np.inf)
        pad[:n] = log_b
        grid = pad.reshape(rows, p)
        m = np.arange(rows)[:, None]
        x = grid + a * m
        rev = np.logaddexp.accumulate(x[::-1], axis=0)[::-1]
        log_g = (rev - a * m).reshape(-1)
        # G(s) = sum_k e^{a k} b(s + k p); log_g[s] valid for s < n, -inf beyond.
        log_g[n:] = -np.inf
        j = np.arange(p)
        log_w = self.log_mgf(theta, j)
        terms = np.stack([log_w[i] + log_g[i : i + n] for i in range(p)])
        m = terms.max(axis=0)
        safe = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            return safe + np.log(np.exp(terms - safe).sum(axis=0))

    def _lagged_direct(self, theta, log_b):
        n = log_b.size
        log_a = self.log_mgf(theta, np.arange(n))
        out = np.empty(n)
        for tau in range(n):
            out[tau] = logsumexp(log_a[: n - tau] + log_b[tau:])
        return out


# --------------------------------------------------------------------------
# Service


class ServiceModel:
    """Base class: subclasses provide ``system`` and ``envelope``."""

    n_hops = 1

    def __init__(self):
        self._cache: OrderedDict = OrderedDict()

    def system(self, theta: float):
        raise NotImplementedError

    def envelope(self, theta: float) -> Envelope:
        raise NotImplementedError

    def first_order_capacity(self) -> float:
        raise NotImplementedError

    # -- evaluation --------------------------------------------------------

    def _seq(self, theta: float) -> "_Sequence":
        key = float(theta)
        seq = self._cache.get(key)
        if seq is None:
            seq = _Sequence(*self.system(theta))
            self._cache[key] = seq
            if len(self._cache) > _CACHE_ENTRIES:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(key)
        return seq

    def log_mgf_sequence(self, theta: float, n: int) -> np.ndarray:
        """log Mbar_S(theta, t) for t = 0..n (read-only view)."""
        if theta <= 0:
            raise ValueError("theta must be positive")
        return self._seq(theta).upto(n)

    def log_mgf(self, theta: float, t: int) -> float:
        return float(self.log_mgf_sequence(theta, int(t))[int(t)])

    def mgf(self, theta: float, t: int) -> float:
        return math.exp(self.log_mgf(theta, t))

    def tail_envelope(self, theta: float, n: int) -> Envelope:
        """Envelope valid for t >= some start <= n; sharper than the global one when available."""
        return self._seq(theta).tail_envelope(n) or self.envelope(theta)


class ConstantRateService(ServiceModel):
    def __init__(self, rate: float):
        super().__init__()
        if rate < 0:
            raise ValueError("rate must be nonnegative")
        self.rate = float(rate)

    def system(self, theta):
        e = math.exp(-theta * self.rate)
        return np.array([e]), np.array([[e]]), np.array([1.0]), 1.0

    def envelope(self, theta):
        return Envelope(0.0, -theta * self.rate)

    def first_order_capacity(self):
        return self.rate

    def __repr__(self):
        return f"ConstantRateService({self.rate})"


class MarkovService(ServiceModel):
    """Markov-modulated server: state drawn from pi, then Q between slots."""

    def __init__(self, chain: DofChain):
        super().__init__()
        self.chain = chain
        # States with zero stationary mass are never visited (the support of
        # pi is closed under Q); dropping them keeps the envelope honest.
        self._support = np.flatnonzero(chain.pi > 0)

    def system(self, theta):
        keep = self._support
        r = np.exp(-theta * self.chain.rates[keep])
        Q = self.chain.Q[np.ix_(keep, keep)]
        return self.chain.pi[keep] * r, Q * r[None, :], np.ones(r.size), 1.0

    def envelope(self, theta):
        C, A, B, D = self.system(theta)
        env = _perron_envelope(C, A, B, D)
        if env is not None:
            return env
        # Reducible chain: fall back to the max row sum of A.
        lam = float(A.sum(axis=1).max())
        c = max(D, float(C @ B) / lam) if lam > 0 else max(D, float(C @ B))
        return Envelope(math.log(c), math.log(lam) if lam > 0 else -np.inf)

    def first_order_capacity(self):
        return self.chain.first_order_capacity

    def __repr__(self):
        return f"MarkovService(K={self.chain.k_states})"


class TandemService(ServiceModel):
    """Independent hops in series; the MGF bound is the convolution over hops."""

    def __init__(self, hops: Sequence[ServiceModel]):
        super().__init__()
        self.hops = list(hops)
        self.n_hops = sum(h.n_hops for h in self.hops)

    def system(self, theta):
        return _series(*(h.system(theta) for h in self.hops))

    def envelope(self, theta):
        envs = [h.envelope(theta) for h in self.hops]
        degree = sum(e.degree + 1 for e in envs) - 1
        return Envelope(
            sum(e.log_c for e in envs), max(e.log_lam for e in envs), degree
        )

    def tail_envelope(self, theta, n):
        return self.envelope(theta)

    def first_order_capacity(self):
        return min(h.first_order_capacity() for h in self.hops)

    def __repr__(self):
        return f"TandemService({self.hops!r})"


def compose_hops(models: Sequence[ServiceModel]) -> ServiceModel:
    models = list(models)
    if not models:
        raise ValueError("need at least one hop")
    if len(models) == 1:
        return models[0]
    out = TandemService(models[:2])
    for m in models[2:]:
        out = TandemService([out, m])
    return out


def _series(*systems):
    """Series connection of (C, A, B, D) systems, left to right."""
    C, A, B, D = systems[0]
    C = np.atleast_1d(C).astype(float)
    B = np.atleast_1d(B).astype(float)
    A = np.atleast_2d(A).astype(float)
    for C2, A2, B2, D2 in systems[1:]:
        C2 = np.atleast_1d(C2).astype(float)
        B2 = np.atleast_1d(B2).astype(float)
        A2 = np.atleast_2d(A2).astype(float)
        k1, k2 = A.shape[0], A2.shape[0]
        # Column-vector convention: x' = A x + B u, y = C x + D u.
        A_new = np.zeros((k1 + k2, k1 + k2))
        A_new[:k1, :k1] = A
        A_new[k1:, :k1] = np.outer(B2, C)
        A_new[k1:, k1:] = A2
        B_new = np.concatenate([B, B2 * D])
        C_new = np.concatenate([D2 * C, C2])
        A, B, C, D = A_new, B_new, C_new, D2 * D
    return C, A, B, D


def _perron(A: np.ndarray):
    vals, vecs = np.linalg.eig(A)
    i = int(np.argmax(vals.real))
    lam = float(vals[i].real)
    v = np.real(vecs[:, i])
    if v.sum() < 0:
        v = -v
    return lam, v


def _perron_envelope(C, A, B, D) -> Envelope | None:
    lam, v = _perron(A)
    if lam <= 0 or np.any(v <= 1e-12 * np.abs(v).max()):
        return None
    if np.linalg.norm(A @ v - lam * v) > 1e-9 * lam * np.abs(v).max():
        return None
    beta = float(np.max(B / v))
    c = max(D, beta * float(C @ v) / lam)
    return Envelope(math.log(c), math.log(lam))


class _Sequence:
    """Lazily extended log impulse response of one (C, A, B, D) system."""

    def __init__(self, C, A, B, D):
        self.A = np.atleast_2d(np.asarray(A, float))
        self.B = np.atleast_1d(np.asarray(B, float))
        C = np.atleast_1d(np.asarray(C, float))
        k = self.A.shape[0]
        lam = float(np.max(np.abs(np.linalg.eigvals(self.A)))) if k else 0.0
        if not lam > 0:
            lam = float(self.A.sum(axis=1).max()) or 1.0
        self.log_lam = math.log(lam)
        An = self.A / lam
        ys = [self.B]
        for _ in range(_BLOCK - 1):
            ys.append(An @ ys[-1])
        self.Y = np.array(ys)  # Y[j] = An^j B
        P = np.eye(k)
        for _ in range(_BLOCK):
            P = P @ An
        self.P_block = P

        self.log_b = np.empty(1 + _BLOCK)
        self.log_b[0] = math.log(D) if D > 0 else -np.inf
        self.n = 0  # log_b valid for t = 0..n
        s = C.sum()
        # Row state w_t = C A^(t-1) at t = 1 + k * BLOCK, kept as
        # (w / sum(w), log sum(w) accumulated with the lam normalization).
        w0 = C / s if s > 0 else C
        self.states = [(w0, math.log(s) if s > 0 else -np.inf)]
        self._perron_cache = None

    def upto(self, n: int) -> np.ndarray:
        if n > self.n:
            self._extend(n)
        view = self.log_b[: n + 1]
        view.flags.writeable = False
        return view

    def _extend(self, n):
        need = n + 1 + _BLOCK
        if need > self.log_b.size:
            size = max(need, 2 * self.log_b.size)
            grown = np.empty(size)
            grown[: self.n + 1] = self.log_b[: self.n + 1]
            self.log_b = grown
        jj = np.arange(_BLOCK) * self.log_lam
        while self.n < n:
            w, scale = self.states[-1]
            t0 = 1 + (len(self.states) - 1) * _BLOCK
            with np.errstate(divide="ignore"):
                vals = scale + jj + np.log(np.maximum(self.Y @ w, 0.0))
            self.log_b[t0 : t0 + _BLOCK] = vals
            self.n = t0 + _BLOCK - 1
            w = w @ self.P_block
            s = w.sum()
            if s > 0:
                self.states.append((w / s, scale + _BLOCK * self.log_lam + math.log(s)))
            else:
                self.states.append((w, -np.inf))

    def tail_envelope(self, n: int) -> Envelope | None:
        """Bound anchored at the last block boundary <= n, if A is irreducible."""
        if self._perron_cache is None:
            lam, v = _perron(self.A)
            ok = lam > 0 and np.all(v > 1e-12 * np.abs(v).max())
            ok = ok and np.linalg.norm(self.A @ v - lam * v) <= 1e-9 * lam * np.abs(v).max()
            self._perron_cache = (lam, v) if ok else False
        if self._perron_cache is False:
            return None
        lam, v = self._perron_cache
        self.upto(max(n, 1))
        k = max(n - 1, 0) // _BLOCK
        w, scale = self.states[k]
        t_b = 1 + k * _BLOCK
        if not np.isfinite(scale):
            return Envelope(-np.inf, math.log(lam), 0, t_b)
        beta = float(np.max(self.B / v))
        # b(t_b + j) = w_{t_b} A^j B <= beta lam^j (w_{t_b} . v)
        log_c = math.log(beta * float(w @ v)) + scale - t_b * math.log(lam)
        return Envelope(log_c, math.log(lam), 0, t_b)
