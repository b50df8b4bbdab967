"""Link-budget primitives: power laws, pathloss, SNR, initial assignment.

Configuration values live in dBm (matching the usual radio conventions);
computation happens in linear milliwatts with explicit conversions at the
API boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DepletedEnergyError(ValueError):
    """Remaining energy is zero or negative."""


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(np.asarray(mw, dtype=float))


@dataclass(frozen=True)
class PowerConfig:
    """Radio and optimization constants.

    Defaults follow the usual evaluation setup: pathloss exponent 2,
    27 dBm transmit cap, -63 dBm receiver sensitivity, -50 dBm noise
    power, Lyapunov weight 2.5.  ``zeta`` is the minimum detectable
    linear SNR, defaulting to the sensitivity-over-noise ratio.
    """

    nu: float = 2.0                  # pathloss exponent
    kappa1: float = 1.0              # device-type constant, mW per m^nu
    kappa2: float = 0.0              # link-quality constant, mW
    rho_tmax_dbm: float = 27.0       # max transmit power
    rho_rmin_dbm: float = -63.0      # receiver sensitivity
    noise_dbm: float = -50.0         # noise power
    zeta: float = 10.0 ** ((-63.0 + 50.0) / 10.0)   # min detectable linear SNR
    beta: float = 2.5                # Lyapunov topology weight
    gamma_db: float = 0.0            # pathloss intercept
    p_tmin_dbm: float = 0.0          # min transmit power
    r_max_m: float = 4000.0          # max link range considered
    link_gain: float = 1.0           # per-link gain h (flat by default)
    code_rate: float = 1.0           # bits/symbol for the error proxy
    proxy_c: float = 1.0             # decay constant of the error proxy
    initial_energy_mj: float = 1000.0

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("pathloss exponent must be positive")
        if self.rho_tmax_dbm <= self.rho_rmin_dbm:
            raise ValueError("rho_tmax must exceed rho_rmin")

    @property
    def noise_mw(self):
        return float(dbm_to_mw(self.noise_dbm))


def required_transmit_power(r, cfg: PowerConfig):
    """Transmit-power cost kappa1 * r^nu + kappa2 (linear mW) for range r."""
    if np.any(np.asarray(r) <= 0):
        raise ValueError("range must be positive")
    return cfg.kappa1 * np.asarray(r, dtype=float) ** cfg.nu + cfg.kappa2


def received_power(p_r_at_d0, d0, d, nu):
    """Inverse power-law extrapolation from the far-field reference d0.

    d < d0 is near-field extrapolation: computed anyway, caller beware.
    """
    if d0 <= 0 or np.any(np.asarray(d) <= 0):
        raise ValueError("distances must be positive")
    return p_r_at_d0 * (d0 ** nu) / np.asarray(d, dtype=float) ** nu


def pathloss_db(d, nu, gamma_db=0.0):
    """Log-distance pathloss 10 nu log10(d) + gamma."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return 10.0 * nu * np.log10(d) + gamma_db


def link_snr(p_t_dbm, d, cfg: PowerConfig, gain=None):
    """Linear SNR h * P_T * d^-nu / N for transmit power in dBm."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    h = cfg.link_gain if gain is None else gain
    return h * dbm_to_mw(p_t_dbm) * d ** (-cfg.nu) / cfg.noise_mw


def snr_detectable(q, cfg: PowerConfig):
    return np.asarray(q) >= cfg.zeta


def nearest_gateway(distance_matrix):
    """Argmin per row of the l x s node-gateway distance matrix."""
    return np.argmin(np.asarray(distance_matrix, dtype=float), axis=1)


def initial_power_assignment(end_coords, gateway_coords, cfg: PowerConfig):
    """Distance-based minimum initial powers (dBm).

    Each node targets its nearest gateway: the pathloss there plus the
    sensitivity floor gives the minimum viable transmit power, floored at
    p_tmin and capped at rho_tmax.  Returns (powers_dbm, capped_mask);
    capped nodes cannot reach any gateway at the allowed maximum.
    """
    end_coords = np.asarray(end_coords, dtype=float)
    gateway_coords = np.asarray(gateway_coords, dtype=float)
    if len(gateway_coords) == 0:
        raise ValueError("every node needs at least one gateway")
    D = np.linalg.norm(end_coords[:, None, :] - gateway_coords[None, :, :], axis=2)
    D = np.maximum(D, 1e-12)
    nearest = nearest_gateway(D)
    pl = pathloss_db(D[np.arange(len(D)), nearest], cfg.nu, cfg.gamma_db)
    required = cfg.rho_rmin_dbm + pl
    capped = required > cfg.rho_tmax_dbm
    powers = np.clip(required, cfg.p_tmin_dbm, cfg.rho_tmax_dbm)
    return powers, capped


def remaining_energy(range_m, cfg: PowerConfig, duration=1.0):
    """Energy left after transmitting at the Eq-21 cost for ``duration``."""
    cost = required_transmit_power(range_m, cfg) * duration * 1e-3   # mW -> mJ/ms scale
    return cfg.initial_energy_mj - cost
