"""Experiment configuration, unit conversion and model assembly.

Config files are flat ``key = value`` text, one key per line, ``#`` starts
a comment.  List-valued keys take comma-separated values.  Every key is
optional; defaults follow an 802.11n 40 MHz parameterization with 31 us
slots and 2312-byte blocks.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import dof
from .channel import GainPool, MimoConfig
from .ge import GEParams, block_error_prob, params_for_fading_speed
from .mgf import MarkovService, PeriodicSource, compose_hops


def rate_conversion(
    c_bits_per_s_per_hz: float,
    bandwidth_hz: float = 40e6,
    slot_us: float = 31.0,
    block_bytes: float = 2312,
) -> float:
    """Spectral efficiency (bits/s/Hz) -> data blocks per slot."""
    return c_bits_per_s_per_hz * bandwidth_hz * (slot_us * 1e-6) / (block_bytes * 8)


def blocks_to_bits_per_hz(blocks_per_slot, bandwidth_hz=40e6, slot_us=31.0, block_bytes=2312):
    return blocks_per_slot * (block_bytes * 8) / (bandwidth_hz * slot_us * 1e-6)


def mbps_to_blocks_per_slot(mbps, slot_us=31.0, block_bytes=2312):
    return mbps * 1e6 * (slot_us * 1e-6) / (block_bytes * 8)


_LIST_KEYS = {
    "n_antennas": int,
    "snr_db": float,
    "p_bg": float,
    "epsilon": float,
    "arrival_rate_mbps": float,
    "hops": int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    bandwidth_hz: float = 40e6
    slot_us: float = 31.0
    block_bytes: int = 2312
    n_antennas: tuple = (2,)
    # Empty means: calibrate once at N = 2 to ``target_capacity``.
    snr_db: tuple = ()
    target_capacity: float = 7.25
    p_gb: float = 0.01
    p_bg: tuple = (0.1,)
    # With hold_omega, omega = p_gb / (p_gb + p_bg_ref) stays fixed while p_bg
    # sweeps the fading speed; otherwise each p_bg pairs with p_gb as given.
    hold_omega: bool = True
    p_bg_ref: float = 0.1
    epsilon: tuple = (1e-6,)
    arrival_rate_mbps: tuple = (240.0,)
    period_slots: int = 10
    hops: tuple = (1,)
    n_scatterers: int = 500
    n_mc_samples: int = 100_000
    rng_seed: int = 1
    n_slots: int = 10_000_000
    warmup_slots: int = 10_000
    output: str = "-"

    def __post_init__(self):
        for key in _LIST_KEYS:
            val = getattr(self, key)
            if np.isscalar(val):
                object.__setattr__(self, key, (val,))
            else:
                object.__setattr__(self, key, tuple(val))

    @property
    def omega(self) -> float:
        ref = self.p_bg_ref if self.hold_omega else self.p_bg[0]
        return block_error_prob(GEParams(self.p_gb, ref))

    def ge_params(self, p_bg: float) -> GEParams:
        """Per-path chain for one p_bg value; at fixed omega unless hold_omega is off."""
        if self.hold_omega and 0.0 < self.omega < 1.0:
            return params_for_fading_speed(self.omega, p_bg)
        return GEParams(self.p_gb, p_bg)

    def to_blocks(self, bits_per_hz):
        return rate_conversion(bits_per_hz, self.bandwidth_hz, self.slot_us, self.block_bytes)

    def arrival(self, mbps: float) -> PeriodicSource:
        nu = mbps_to_blocks_per_slot(mbps, self.slot_us, self.block_bytes)
        return PeriodicSource(sigma=nu * self.period_slots, period=self.period_slots)

    def mimo(self, n: int, snr_db: float) -> MimoConfig:
        return MimoConfig(
            n_tx=n,
            n_rx=n,
            snr_db=snr_db,
            n_scatterers=self.n_scatterers,
            n_mc_samples=self.n_mc_samples,
            rng_seed=self.rng_seed,
        )

    def canonical_text(self) -> str:
        """Every setting except the output path, in a form parse_config_text reads back."""
        lines = []
        for f in fields(self):
            if f.name == "output":
                continue
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(repr(v) for v in val)
            else:
                val = repr(val)
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def _parse_value(key: str, raw: str, default):
    raw = raw.strip()
    if key in _LIST_KEYS:
        conv = _LIST_KEYS[key]
        return tuple(conv(float(x)) if conv is int else conv(x) for x in raw.split(",") if x.strip())
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(float(raw))
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = ExperimentConfig() if base is None else base
    known = {f.name: getattr(base, f.name) for f in fields(base)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _parse_value(key, raw, known[key])
    return base.replace(**updates)


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), base)


# --------------------------------------------------------------------------
# Model assembly


@dataclass(frozen=True)
class CapacityTable:
    n: int
    snr_db: float
    class_bits: np.ndarray
    class_stderr: np.ndarray
    pi: np.ndarray
    chain: dof.DofChain = field(repr=False)

    @property
    def first_order_bits(self) -> float:
        return float(self.class_bits @ self.pi)

    @property
    def first_order_stderr(self) -> float:
        # Class minima are each a single Monte-Carlo mean; combine conservatively.
        return float(np.abs(self.pi) @ self.class_stderr)


@lru_cache(maxsize=16)
def _pool(mimo: MimoConfig) -> GainPool:
    return GainPool(mimo)


@lru_cache(maxsize=256)
def class_bits(mimo: MimoConfig) -> tuple:
    """(capacities, stderrs) of the DOF classes in bits/s/Hz, cached per config."""
    caps = dof.class_capacities(mimo, _pool_key(mimo))
    return (
        tuple(c.capacity for c in caps),
        tuple(c.stderr for c in caps),
    )


def _pool_key(mimo: MimoConfig) -> GainPool:
    # Gains do not depend on the SNR; share one pool across SNR values.
    return _pool(dataclasses.replace(mimo, snr_db=0.0))


def capacity_table(cfg: ExperimentConfig, n: int, snr_db: float, p_bg: float) -> CapacityTable:
    mimo = cfg.mimo(n, snr_db)
    bits, se = class_bits(mimo)
    bits = np.array(bits)
    chain = dof.build_chain(cfg.ge_params(p_bg), cfg.to_blocks(bits), n, n)
    return CapacityTable(n, snr_db, bits, np.array(se), chain.pi, chain)


def markov_service(cfg: ExperimentConfig, n: int, snr_db: float, p_bg: float) -> MarkovService:
    return MarkovService(capacity_table(cfg, n, snr_db, p_bg).chain)


def tandem(cfg: ExperimentConfig, n: int, snr_db: float, p_bg: float, hops: int):
    # Independent hops with identical statistics share the chain but not sample paths.
    return compose_hops([markov_service(cfg, n, snr_db, p_bg) for _ in range(hops)])


@lru_cache(maxsize=32)
def _calibrate(cfg_key: tuple, target: float, n: int, omega: float) -> float:
    cfg = ExperimentConfig(**dict(cfg_key))
    # pi depends on omega only, so any fading speed gives the same target.
    params = GEParams(omega, 1.0 - omega) if 0 < omega < 1 else GEParams(cfg.p_gb, cfg.p_bg[0])
    pi, _, _ = dof.lump(params, n, n)
    pool = _pool_key(cfg.mimo(n, 0.0))

    def excess(snr_db):
        rho = 10.0 ** (snr_db / 10.0)
        caps = dof.class_capacities(cfg.mimo(n, snr_db), pool, rho=rho)
        return float(np.array([c.capacity for c in caps]) @ pi) - target

    lo, hi = -10.0, 60.0
    if excess(lo) > 0 or excess(hi) < 0:
        raise ValueError(
            f"target capacity {target} not reachable for SNR in [{lo}, {hi}] dB "
            f"at omega={omega:.6g}"
        )
    return float(brentq(excess, lo, hi, xtol=1e-6))


def calibrate_snr(cfg: ExperimentConfig, n: int = 2) -> float:
    """SNR (dB) at which the first-order capacity at N = n hits ``cfg.target_capacity``."""
    key = tuple(
        (f.name, getattr(cfg, f.name))
        for f in fields(cfg)
        if f.name in ("n_scatterers", "n_mc_samples", "rng_seed")
    )
    return _calibrate(key, cfg.target_capacity, n, cfg.omega)


def snr_values(cfg: ExperimentConfig) -> tuple:
    return cfg.snr_db if cfg.snr_db else (calibrate_snr(cfg),)
