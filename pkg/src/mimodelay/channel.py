"""Finite-scatterer NLOS channel realizations and log-det MIMO capacity."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Phases are drawn in float32 (6x faster trig); sums are accumulated in float64.
_CHUNK_GAINS = 1 << 14


@dataclass(frozen=True)
class MimoConfig:
    n_tx: int = 2
    n_rx: int = 2
    snr_db: float = 15.0
    n_scatterers: int = 500
    n_mc_samples: int = 100_000
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.n_tx, self.n_rx, self.n_scatterers, self.n_mc_samples) < 1:
            raise ValueError("antenna, scatterer and sample counts must be >= 1")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")

    @property
    def rho(self) -> float:
        return float(10.0 ** (self.snr_db / 10.0))

    @property
    def n_paths(self) -> int:
        return self.n_tx * self.n_rx


@dataclass(frozen=True)
class CapacityEstimate:
    mean: float
    stderr: float
    n_samples: int


def sample_path_gains(
    n_scatterers: int, size, rng: np.random.Generator
) -> np.ndarray:
    """Draw NLOS path gains sum_s exp(j phi_s) / sqrt(N_s) with uniform phases.

    Each gain has E|h|^2 = 1.  ``size`` is the output shape.
    """
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape))
    out = np.empty(n, dtype=np.complex128)
    scale = 1.0 / np.sqrt(n_scatterers)
    per_chunk = max(1, (1 << 22) // n_scatterers)
    for i in range(0, n, per_chunk):
        k = min(per_chunk, n - i)
        ph = rng.random((k, n_scatterers), dtype=np.float32)
        ph *= np.float32(2.0 * np.pi)
        re = np.cos(ph).sum(axis=1, dtype=np.float64)
        im = np.sin(ph).sum(axis=1, dtype=np.float64)
        out[i : i + k] = (re + 1j * im) * scale
    return out.reshape(shape)


def sample_path_gain(config: MimoConfig, rng: np.random.Generator) -> complex:
    return complex(sample_path_gains(config.n_scatterers, 1, rng)[0])


def _check_mask(good: np.ndarray, config: MimoConfig) -> np.ndarray:
    good = np.asarray(good, dtype=bool)
    if good.shape != (config.n_rx, config.n_tx):
        raise ValueError(
            f"substate shape {good.shape} != (n_rx, n_tx) = "
            f"({config.n_rx}, {config.n_tx})"
        )
    return good


def build_channel_matrix(
    good: np.ndarray, config: MimoConfig, rng: np.random.Generator
) -> np.ndarray:
    """One M x N realization; entries on bad paths are exactly zero."""
    good = _check_mask(good, config)
    H = np.zeros(good.shape, dtype=np.complex128)
    k = int(good.sum())
    if k:
        H[good] = sample_path_gains(config.n_scatterers, k, rng)
    return H


def log_det_capacity(H: np.ndarray, rho: float, n_tx: int) -> np.ndarray:
    """log2 det(I + rho/N H H^H) for one matrix or a stack (..., M, N)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    H = np.asarray(H)
    m = H.shape[-2]
    gram = H @ np.conj(np.swapaxes(H, -1, -2))
    A = np.eye(m) + (rho / n_tx) * gram
    L = np.linalg.cholesky(A)
    diag = np.real(np.diagonal(L, axis1=-2, axis2=-1))
    return 2.0 * np.log2(diag).sum(axis=-1)


def capacity(H: np.ndarray, rho_linear: float, n_tx: int) -> float:
    return float(log_det_capacity(H, rho_linear, n_tx))


class GainPool:
    """Shared i.i.d. gain draws for every path, reused across substates.

    Masking one pool with different substates gives common random numbers,
    which keeps the minimum over a DOF class from chasing Monte-Carlo
    noise.  Each substate's estimate on its own is an ordinary unbiased
    Monte-Carlo mean.
    """

    def __init__(self, config: MimoConfig):
        self.config = config

    @cached_property
    def gains(self) -> np.ndarray:
        cfg = self.config
        rng = np.random.default_rng([cfg.rng_seed, cfg.n_rx, cfg.n_tx])
        return sample_path_gains(
            cfg.n_scatterers, (cfg.n_mc_samples, cfg.n_rx, cfg.n_tx), rng
        )

    def capacity_samples(self, good: np.ndarray, rho: float | None = None):
        cfg = self.config
        good = _check_mask(good, cfg)
        rho = cfg.rho if rho is None else rho
        if not good.any():
            return np.zeros(cfg.n_mc_samples)
        # Only rows/columns with a good entry affect the determinant.
        rows = good.any(axis=1)
        cols = good.any(axis=0)
        sub = self.gains[:, rows][:, :, cols] * good[np.ix_(rows, cols)]
        out = np.empty(cfg.n_mc_samples)
        for i in range(0, cfg.n_mc_samples, _CHUNK_GAINS):
            out[i : i + _CHUNK_GAINS] = log_det_capacity(
                sub[i : i + _CHUNK_GAINS], rho, cfg.n_tx
            )
        return out

    def mean_capacity(self, good: np.ndarray, rho: float | None = None):
        return _summarize(self.capacity_samples(good, rho))


def _summarize(samples: np.ndarray) -> CapacityEstimate:
    n = samples.size
    se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return CapacityEstimate(float(samples.mean()), se, n)


def mean_substate_capacity(
    good: np.ndarray, config: MimoConfig, rng: np.random.Generator | None = None
) -> CapacityEstimate:
    """Monte-Carlo mean of the capacity over ``n_mc_samples`` fresh realizations."""
    good = _check_mask(good, config)
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    if not good.any():
        return CapacityEstimate(0.0, 0.0, config.n_mc_samples)
    k = int(good.sum())
    out = np.empty(config.n_mc_samples)
    for i in range(0, config.n_mc_samples, _CHUNK_GAINS):
        n = min(_CHUNK_GAINS, config.n_mc_samples - i)
        H = np.zeros((n, config.n_rx, config.n_tx), dtype=np.complex128)
        H[:, good] = sample_path_gains(config.n_scatterers, (n, k), rng)
        out[i : i + n] = log_det_capacity(H, config.rho, config.n_tx)
    return _summarize(out)
