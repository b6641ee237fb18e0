"""Doubly selective TDL-A fading applied per resource element, plus AWGN.

Each tap is a complex sum-of-sinusoids process (Clarke/Jakes angles with the
Zheng-Xiao dithering) sampled once per OFDM symbol, so the ensemble time
autocorrelation is exactly J0(2 pi f_D dt).  The per-RE gain is the DFT of
the tap gains at the subcarrier frequencies:

    H[k, l] = sum_p g_p(t_l) * exp(-2j pi f_k tau_p),   f_k = (k - 36) * df

The cyclic prefix at 30 kHz spacing (~2.3 us) dwarfs the 100 ns delay
spread, and 162 Hz Doppler against 30 kHz spacing keeps ICI below -45 dB,
so the multiplicative per-RE model is used; no time-domain waveform is built.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .phy_frame import N_SUBCARRIERS, N_SYMBOLS, TtiGrid

SPEED_OF_LIGHT = 299_792_458.0
SUBCARRIER_SPACING_HZ = 30_000.0
CARRIER_HZ = 3.5e9
CP_FRACTION = 288.0 / 4096.0  # normal cyclic prefix overhead
DEFAULT_DELAY_SPREAD_S = 100e-9
DEFAULT_SPEED_KMH = 50.0

# 3GPP TR 38.901 Table 7.7.2-1 (TDL-A): normalized delays and powers in dB.
_TDLA_NORMALIZED_DELAYS = np.array([
    0.0000, 0.3819, 0.4025, 0.5868, 0.4610, 0.5375, 0.6708, 0.5750,
    0.7618, 1.5375, 1.8978, 2.2242, 2.1718, 2.4942, 2.5119, 3.0582,
    4.0810, 4.4579, 4.5695, 4.7966, 5.0066, 5.3043, 9.6586,
])
_TDLA_POWERS_DB = np.array([
    -13.4, 0.0, -2.2, -4.0, -6.0, -8.2, -9.9, -10.5, -7.5, -15.9,
    -6.6, -16.7, -12.4, -15.2, -10.8, -11.3, -12.7, -16.2, -18.3,
    -18.9, -16.6, -19.9, -29.7,
])


@dataclass(frozen=True)
class TdlProfile:
    tap_delays: np.ndarray  # seconds, sorted ascending
    tap_powers: np.ndarray  # linear, sums to 1

    @property
    def tap_count(self) -> int:
        return int(self.tap_delays.size)

    def rms_delay_spread(self) -> float:
        mean = float(np.sum(self.tap_powers * self.tap_delays))
        return float(np.sqrt(np.sum(self.tap_powers * (self.tap_delays - mean) ** 2)))


@dataclass(frozen=True)
class DopplerSpec:
    speed_ms: float
    carrier_hz: float
    max_doppler_hz: float
    oscillator_count: int = 32

    def __post_init__(self):
        if self.oscillator_count < 8:
            raise ContractError("need at least 8 oscillators per tap")


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray  # complex128 (72, 14)
    noise_variance: float  # E|n|^2 per RE
    seed: int


def tdl_a_profile(delay_spread_s: float = DEFAULT_DELAY_SPREAD_S) -> TdlProfile:
    if delay_spread_s <= 0:
        raise ContractError(f"delay spread must be positive, got {delay_spread_s}")
    order = np.argsort(_TDLA_NORMALIZED_DELAYS, kind="stable")
    delays = _TDLA_NORMALIZED_DELAYS[order]
    powers = 10.0 ** (_TDLA_POWERS_DB[order] / 10.0)
    powers = powers / powers.sum()
    # the published normalized delays have rms spread ~1 up to table rounding;
    # rescale so the realized rms delay spread equals delay_spread_s exactly
    mean = np.sum(powers * delays)
    rms = np.sqrt(np.sum(powers * (delays - mean) ** 2))
    return TdlProfile(delays * (delay_spread_s / rms), powers)


def doppler_from_speed(speed_kmh: float, carrier_hz: float = CARRIER_HZ,
                       oscillator_count: int = 32) -> DopplerSpec:
    if speed_kmh < 0 or carrier_hz <= 0:
        raise ContractError("speed must be >= 0 and carrier positive")
    speed_ms = speed_kmh / 3.6
    return DopplerSpec(speed_ms, carrier_hz, speed_ms * carrier_hz / SPEED_OF_LIGHT,
                       oscillator_count)


def symbol_duration_s(spacing_hz: float = SUBCARRIER_SPACING_HZ) -> float:
    return (1.0 + CP_FRACTION) / spacing_hz


def generate_realization(profile: TdlProfile, doppler: DopplerSpec, seed: int,
                         spacing_hz: float = SUBCARRIER_SPACING_HZ,
                         noise_variance: float = 0.0) -> ChannelRealization:
    rng = np.random.default_rng(seed)
    p, m = profile.tap_count, doppler.oscillator_count
    # Zheng-Xiao angle dithering: alpha_m = (2 pi m - pi + theta) / (4M) makes the
    # arrival angles collectively uniform, so E[g(t) g*(t+dt)] = P * J0(2 pi fD dt)
    theta = rng.uniform(-np.pi, np.pi, size=(p, 1))
    phi = rng.uniform(-np.pi, np.pi, size=(p, m))
    psi = rng.uniform(-np.pi, np.pi, size=(p, m))
    mm = np.arange(1, m + 1)
    alpha = (2.0 * np.pi * mm - np.pi + theta) / (4.0 * m)
    omega = 2.0 * np.pi * doppler.max_doppler_hz * np.cos(alpha)  # (p, m)

    t = np.arange(N_SYMBOLS) * symbol_duration_s(spacing_hz)
    arg = omega[:, :, None] * t[None, None, :]
    scale = np.sqrt(profile.tap_powers / m)
    g = scale[:, None] * (np.cos(arg + phi[:, :, None]).sum(axis=1)
                          + 1j * np.sin(arg + psi[:, :, None]).sum(axis=1))  # (p, 14)

    f_k = (np.arange(N_SUBCARRIERS) - N_SUBCARRIERS // 2) * spacing_hz
    steering = np.exp(-2j * np.pi * np.outer(f_k, profile.tap_delays))  # (72, p)
    h = steering @ g
    return ChannelRealization(h, float(noise_variance), int(seed))


def apply(grid: TtiGrid, ch: ChannelRealization, noise_seed: int) -> TtiGrid:
    """Y = H * X + n with n i.i.d. circular complex Gaussian, E|n|^2 = N0."""
    if grid.symbols.shape != ch.h.shape:
        raise ContractError("grid and channel shapes differ")
    rng = np.random.default_rng(noise_seed)
    sigma = np.sqrt(ch.noise_variance / 2.0)
    noise = sigma * (rng.standard_normal(grid.symbols.shape)
                     + 1j * rng.standard_normal(grid.symbols.shape))
    return TtiGrid(ch.h * grid.symbols + noise, grid.pattern_name)


def esno_db_to_n0(esno_db: float) -> float:
    """Per-data-RE noise variance at unit symbol power."""
    return 10.0 ** (-esno_db / 10.0)
