"""U2U uplink channel: LoS pathloss, Rician fading, fractional power control,
received power, interference, SINR and Shannon rate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8
RHO_COMP_LEVELS = (0.0, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
POWER_LEVELS_DBM = (23.0, 25.0, 30.0)
# kappa at or above this is treated as a pure LoS link
KAPPA_LOS_LIMIT = 1e6


class ChannelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelParams:
    carrier_hz: float = 2e9
    light_speed: float = SPEED_OF_LIGHT
    eta_los_db: float = 0.1
    alpha: float = 2.0
    gain_db: float = -31.5
    bandwidth_hz: float = 3e6
    noise_dbm: float = -96.0
    rice_kappa: float = 10 ** 1.2
    rho_comp: float = 0.6

    def __post_init__(self):
        if self.carrier_hz <= 0:
            raise ChannelDomainError("carrier_hz must be positive")
        if self.bandwidth_hz <= 0:
            raise ChannelDomainError("bandwidth_hz must be positive")
        if self.alpha < 2:
            raise ChannelDomainError("alpha must be >= 2")
        if self.rice_kappa < 0:
            raise ChannelDomainError("rice_kappa must be non-negative")
        if not any(abs(self.rho_comp - r) < 1e-12 for r in RHO_COMP_LEVELS):
            raise ChannelDomainError(f"rho_comp must be one of {RHO_COMP_LEVELS}")

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.noise_dbm)


def dbm_to_mw(p_dbm):
    if np.ndim(p_dbm):
        return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)
    return 10.0 ** (p_dbm / 10.0)


def mw_to_dbm(p_mw):
    if np.ndim(p_mw):
        return 10.0 * np.log10(p_mw)
    return 10.0 * math.log10(p_mw)


def distance_3d(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def pathloss_los(d, p: ChannelParams):
    """Free-space LoS pathloss in dB plus the excess LoS attenuation."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ChannelDomainError("pathloss needs a positive distance")
    pl = 20.0 * np.log10(4.0 * math.pi * p.carrier_hz * d / p.light_speed) + p.eta_los_db
    return float(pl) if pl.ndim == 0 else pl


def rician_scales(kappa: float) -> tuple[float, float]:
    """(rho, sigma0) for Rice factor ``kappa`` with unit mean power rho^2 + 2 sigma0^2 = 1."""
    sigma0 = math.sqrt(1.0 / (2.0 * (kappa + 1.0)))
    rho = math.sqrt(kappa / (kappa + 1.0))
    return rho, sigma0


def sample_rician_fading(p: ChannelParams, rng: np.random.Generator, size=None):
    """Draw Rician amplitudes and the matching fading loss in dB.

    Returns ``(amplitude, fading_db)`` with ``fading_db = -10 log10(amplitude^2)``,
    so ``10**(-fading_db/10)`` scales received power by ``amplitude^2``.
    """
    kappa = p.rice_kappa
    if kappa >= KAPPA_LOS_LIMIT:
        amp = np.ones(size) if size is not None else 1.0
        return amp, (np.zeros(size) if size is not None else 0.0)
    rho, s0 = rician_scales(kappa)
    re = rng.normal(rho, s0, size)
    im = rng.normal(0.0, s0, size)
    amp = np.hypot(re, im)
    return amp, -10.0 * np.log10(amp * amp)


def tx_power_fpc(p_max_dbm, pathloss_db, p: ChannelParams):
    """Fractional power control: min(p_max, 10 log10(B) + rho_u * PL), in dBm."""
    return np.minimum(p_max_dbm, 10.0 * math.log10(p.bandwidth_hz) + p.rho_comp * np.asarray(pathloss_db))


def received_power(p_tx_dbm, d, fading_db, p: ChannelParams):
    """Received power in mW for P_tx * G * d^-alpha * 10^(-fading/10)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ChannelDomainError("received power needs a positive distance")
    rx_dbm = p_tx_dbm + p.gain_db - 10.0 * p.alpha * np.log10(d) - fading_db
    return 10.0 ** (rx_dbm / 10.0)


def sinr_and_rate(p_rx_mw: float, interferers_mw, p: ChannelParams) -> tuple[float, float]:
    interference = float(np.sum(interferers_mw)) if len(interferers_mw) else 0.0
    sinr = p_rx_mw / (p.noise_mw + interference)
    return sinr, p.bandwidth_hz * math.log2(1.0 + sinr)


@dataclass
class LinkBudget:
    """Per-UE link quantities for one TTI (arrays aligned with the UE order)."""
    d_3d: np.ndarray
    pathloss: np.ndarray
    fading_db: np.ndarray
    p_tx: np.ndarray
    p_rx: np.ndarray
    interference: np.ndarray
    sinr: np.ndarray
    rate: np.ndarray


def link_budgets(bs, ues, p_max_dbm, fading_db, p: ChannelParams, active=None,
                 min_distance: float = 0.0) -> LinkBudget:
    """All uplink budgets at once; every active UE interferes with every other.

    ``ues`` is an (n, 3) array of positions and ``active`` the psi indicator
    (defaults to all ones).  Inactive UEs still get a budget but contribute
    no interference.  Distances below ``min_distance`` are raised to it.
    """
    ues = np.asarray(ues, dtype=float).reshape(-1, 3)
    n = len(ues)
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    d = np.sqrt(np.sum((ues - np.asarray(bs, dtype=float)) ** 2, axis=1))
    if min_distance > 0:
        d = np.maximum(d, min_distance)
    pl = pathloss_los(d, p) if n else np.zeros(0)
    p_tx = tx_power_fpc(np.broadcast_to(np.asarray(p_max_dbm, dtype=float), (n,)), pl, p)
    fading = np.broadcast_to(np.asarray(fading_db, dtype=float), (n,)).copy()
    p_rx = received_power(p_tx, d, fading, p) if n else np.zeros(0)
    contrib = np.where(active, p_rx, 0.0)
    # explicit sum over m != k (no total-minus-self cancellation)
    interference = (np.ones((n, n)) - np.eye(n)) @ contrib
    sinr = p_rx / (p.noise_mw + interference)
    rate = p.bandwidth_hz * np.log2(1.0 + sinr)
    return LinkBudget(d, np.atleast_1d(pl), fading, p_tx, p_rx, interference, sinr, rate)
