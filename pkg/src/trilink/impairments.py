"""Dirty-RF layer: per-branch additive transmit/receive distortion, common
phase error per transmitter branch, and thermal noise.

The additive distortion is an EVM-style model: each antenna branch adds
complex Gaussian noise whose power sits a fixed number of dB below that
branch's average signal power in the current frame (-34 dB at the
transmitters, -40 dB at the receivers).  Each transmitter branch also
applies a common phase error: one Gaussian rotation (sigma = 0.6 degrees)
per frame per branch, constant across the frame and affecting payload and
training alike, re-randomized between frames and independent across all
six branches.  Receiver oscillator frequency offsets are deliberately not
modeled (the impairment model is additive noise + common phase error only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, cgauss

N_SUBCARRIERS = 38
BRANCHES_PER_NODE = 2


@dataclass(frozen=True)
class ImpairmentConfig:
    """Dirty-RF and thermal-noise parameters.

    sigma2_nominal is the wideband nominal noise power per receive antenna;
    the per-subcarrier noise variance is sigma2_nominal / 38.
    """

    tx_evm_db: float = -34.0
    rx_evm_db: float = -40.0
    phase_std_deg: float = 0.6
    sigma2_nominal: float = float(N_SUBCARRIERS)
    thermal_jitter_db: float = 1.0
    tx_noise_enabled: bool = True
    rx_noise_enabled: bool = True
    phase_enabled: bool = True
    thermal_enabled: bool = True

    def __post_init__(self):
        if self.sigma2_nominal < 0 or self.thermal_jitter_db < 0:
            raise ValueError("noise powers must be >= 0")
        if self.phase_std_deg < 0:
            raise ValueError("phase_std_deg must be >= 0")

    @property
    def sigma2_subcarrier(self) -> float:
        return self.sigma2_nominal / N_SUBCARRIERS

    def disabled(self) -> "ImpairmentConfig":
        """Copy with every dirty-RF effect off (thermal untouched)."""
        return ImpairmentConfig(
            tx_evm_db=self.tx_evm_db, rx_evm_db=self.rx_evm_db,
            phase_std_deg=self.phase_std_deg, sigma2_nominal=self.sigma2_nominal,
            thermal_jitter_db=self.thermal_jitter_db,
            tx_noise_enabled=False, rx_noise_enabled=False,
            phase_enabled=False, thermal_enabled=self.thermal_enabled)


def _branch_noise(signals: np.ndarray, evm_db: float, rng: RngStream,
                  active_only: bool) -> np.ndarray:
    """Additive noise per leading-axis branch, power = branch power * 10^(evm/10).

    With active_only, the branch power is averaged over (and the noise added
    to) only the samples the branch actually transmits, so a branch that is
    silent outside its pilot slot is not diluted.
    """
    out = signals.copy()
    factor = 10.0 ** (evm_db / 10.0)
    for b in range(signals.shape[0]):
        x = signals[b]
        mask = np.abs(x) > 0 if active_only else np.ones(x.shape, dtype=bool)
        n_active = mask.sum()
        if n_active == 0:
            continue
        power = (np.abs(x[mask]) ** 2).mean()
        noise = cgauss(rng.child("branch", b), x.shape, power * factor)
        out[b] = x + np.where(mask, noise, 0.0)
    return out


def apply_tx_dirty(branch_signals: np.ndarray, cfg: ImpairmentConfig,
                   rng: RngStream) -> tuple:
    """Distort one frame's per-branch transmit grids (6, n_symbols, n_sc).

    Adds per-branch Gaussian distortion at tx_evm_db below the branch's
    average transmitted power, and rotates the whole branch (payload and
    pilots) by a per-frame phase drawn from N(0, phase_std_deg^2),
    independently per branch.  Returns (signals, phases_rad).
    """
    x = np.asarray(branch_signals, dtype=complex)
    n_branches = x.shape[0]
    if cfg.phase_enabled and cfg.phase_std_deg > 0:
        g = rng.child("phase").generator()
        phases = g.standard_normal(n_branches) * np.deg2rad(cfg.phase_std_deg)
    else:
        phases = np.zeros(n_branches)
    out = x * np.exp(1j * phases).reshape((-1,) + (1,) * (x.ndim - 1))
    if cfg.tx_noise_enabled:
        out = _branch_noise(out, cfg.tx_evm_db, rng.child("noise"), active_only=True)
    return out, phases


def apply_rx_dirty(received: np.ndarray, cfg: ImpairmentConfig,
                   rng: RngStream) -> np.ndarray:
    """Receiver-side additive distortion, rx_evm_db below each branch's power.

    received is (n_branches, n_symbols, n_sc); no phase rotation here (the
    model places the common phase error at the transmitters).
    """
    y = np.asarray(received, dtype=complex)
    if not cfg.rx_noise_enabled:
        return y.copy()
    return _branch_noise(y, cfg.rx_evm_db, rng.child("noise"), active_only=False)


def thermal_jitter_factors(rng: RngStream, n_nodes: int, jitter_db: float) -> np.ndarray:
    """Per-node linear noise-variance factors, 10^(u/10), u ~ U(-j, +j).

    Drawn once per node per batch: the node's receiver noise floor deviates
    from nominal by up to jitter_db and stays there for the whole batch.
    """
    if jitter_db == 0:
        return np.ones(n_nodes)
    u = rng.generator().uniform(-jitter_db, jitter_db, size=n_nodes)
    return 10.0 ** (u / 10.0)


def apply_thermal(received: np.ndarray, noise_var, rng: RngStream,
                  jitter_db: float = 0.0) -> np.ndarray:
    """Add thermal noise per receive branch.

    received is (n_branches, n_symbols, n_sc); noise_var is the
    per-subcarrier variance, scalar or per-branch array.  When jitter_db is
    nonzero a per-node factor (nodes = consecutive branch pairs) is drawn
    from this call's stream, suiting one-call-per-batch usage.
    """
    y = np.asarray(received, dtype=complex)
    n_branches = y.shape[0]
    var = np.broadcast_to(np.asarray(noise_var, dtype=float), (n_branches,)).copy()
    if np.any(var < 0):
        raise ValueError("noise variance must be >= 0")
    if jitter_db:
        factors = thermal_jitter_factors(rng.child("jitter"),
                                         n_branches // BRANCHES_PER_NODE, jitter_db)
        var *= np.repeat(factors, BRANCHES_PER_NODE)
    out = y.copy()
    for b in range(n_branches):
        if var[b] == 0:
            continue
        out[b] = y[b] + cgauss(rng.child("noise", b), y[b].shape, var[b])
    return out
