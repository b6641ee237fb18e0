"""Classic receiver: LS pilot estimation, nearest-pilot interpolation, ZF
equalization, exact Gaussian soft demapping.

Conventions shared with the rest of the package:
  - LLR = log P(bit=1)/P(bit=0), clipped to +-30
  - effective post-equalization noise variance N0 / |H_hat|^2
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DegenerateInputError
from .phy_frame import (
    N_SUBCARRIERS,
    N_SYMBOLS,
    Constellation,
    PilotPattern,
    TtiGrid,
    TtiPlan,
)

LLR_CLIP = 30.0

# symbol spacing counts ~14/12 as much as subcarrier spacing when picking the
# nearest pilot; ties resolve toward lower subcarrier, then earlier symbol
_SYMBOL_WEIGHT = 14.0 / 12.0


def ls_estimate(grid: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Least-squares channel estimates at the pilot REs: Y / X."""
    if grid.shape != (N_SUBCARRIERS, N_SYMBOLS):
        raise ContractError(f"grid shape {grid.shape} != (72, 14)")
    return grid[pattern.pilot_k, pattern.pilot_l] / pattern.pilot_values


def _nearest_pilot_index(pattern: PilotPattern) -> np.ndarray:
    """(72, 14) map of which pilot RE serves each grid position."""
    k = np.arange(N_SUBCARRIERS)[:, None, None]
    l = np.arange(N_SYMBOLS)[None, :, None]
    d = np.abs(k - pattern.pilot_k[None, None, :]) + _SYMBOL_WEIGHT * np.abs(
        l - pattern.pilot_l[None, None, :]
    )
    # lexsort-style tie break: lower subcarrier wins, then earlier symbol
    tie = (pattern.pilot_k[None, None, :] * N_SYMBOLS + pattern.pilot_l[None, None, :]) * 1e-9
    return np.argmin(d + tie, axis=-1)


def nearest_pilot_equalize(
    grid: np.ndarray,
    pattern: PilotPattern,
    noise_variance: float,
):
    """Spread LS estimates to the whole grid, then zero-force.

    Returns (x_hat, h_hat, sigma2_eff), each shaped (72, 14).  REs whose
    interpolated estimate is exactly zero are flagged with infinite effective
    noise so the demapper produces zero LLRs instead of NaN.
    """
    h_pilot = ls_estimate(grid, pattern)
    h_hat = h_pilot[_nearest_pilot_index(pattern)]
    safe = h_hat != 0.0
    x_hat = np.zeros_like(grid)
    np.divide(grid, h_hat, out=x_hat, where=safe)
    sigma2 = np.full(grid.shape, np.inf)
    np.divide(noise_variance, np.abs(h_hat) ** 2, out=sigma2, where=safe)
    return x_hat, h_hat, sigma2


def gaussian_llr_demap(
    x_hat: np.ndarray,
    sigma2_eff: np.ndarray,
    constellation: Constellation,
) -> np.ndarray:
    """Exact per-bit LLRs under a circular Gaussian error model.

    llr_i = log sum_{c: bit_i(c)=1} exp(-|x-c|^2/s2) - log sum_{c: bit_i(c)=0} ...
    computed with the max-shift trick and clipped; output shape (..., m).
    """
    x = np.asarray(x_hat)
    s2 = np.broadcast_to(np.asarray(sigma2_eff, dtype=np.float64), x.shape)
    if np.any(s2 <= 0.0):
        raise DegenerateInputError("sigma2_eff must be positive")
    pts = constellation.points
    m = constellation.bits_per_symbol
    labels = np.arange(pts.size)
    bit_is_one = ((labels[:, None] >> (m - 1 - np.arange(m))) & 1).astype(bool)

    d2 = np.abs(x[..., None] - pts) ** 2  # (..., M)
    metric = np.where(np.isfinite(s2)[..., None], -d2 / s2[..., None], 0.0)

    llr = np.empty(x.shape + (m,))
    for i in range(m):
        llr[..., i] = _logsumexp(metric, bit_is_one[:, i]) - _logsumexp(
            metric, ~bit_is_one[:, i]
        )
    llr[~np.isfinite(s2)] = 0.0  # erased REs carry no information
    return np.clip(llr, -LLR_CLIP, LLR_CLIP)


def _logsumexp(metric: np.ndarray, mask: np.ndarray) -> np.ndarray:
    sel = metric[..., mask]
    peak = sel.max(axis=-1)
    return peak + np.log(np.exp(sel - peak[..., None]).sum(axis=-1))


def perfect_csi_receive(
    grid: TtiGrid,
    h: np.ndarray,
    noise_variance: float,
    plan: TtiPlan,
    constellation: Constellation,
) -> np.ndarray:
    """Genie-aided bound: equalize with the true channel, demap data REs."""
    y = grid.symbols
    if y.shape != h.shape:
        raise ContractError("grid/channel shape mismatch")
    safe = h != 0.0
    x_hat = np.zeros_like(y)
    np.divide(y, h, out=x_hat, where=safe)
    sigma2 = np.full(y.shape, np.inf)
    np.divide(noise_variance, np.abs(h) ** 2, out=sigma2, where=safe)
    llr = gaussian_llr_demap(
        x_hat[plan.data_k, plan.data_l], sigma2[plan.data_k, plan.data_l], constellation
    )
    return llr.reshape(-1)


def baseline_receive(
    grid: TtiGrid,
    pattern: PilotPattern,
    noise_variance: float,
    plan: TtiPlan,
    constellation: Constellation,
) -> np.ndarray:
    """Full classic chain: LS -> nearest-pilot -> ZF -> Gaussian demap.

    Returns the flat LLR stream over the plan's data REs (bit slots).
    """
    if grid.pattern_name != plan.pattern_name:
        raise ContractError(
            f"grid pattern {grid.pattern_name!r} does not match plan {plan.pattern_name!r}")
    x_hat, _, sigma2 = nearest_pilot_equalize(grid.symbols, pattern, noise_variance)
    llr = gaussian_llr_demap(
        x_hat[plan.data_k, plan.data_l], sigma2[plan.data_k, plan.data_l], constellation
    )
    return llr.reshape(-1)
