"""Constellations, pilot patterns, and TTI resource-grid assembly.

The resource grid is 72 subcarriers by 14 OFDM symbols.  The baseline pilot
pattern places pilots on every even subcarrier of symbols 2 and 11 (0-based),
72 pilot REs total; the pilotless pattern has none.  Data REs are ordered
frequency-first within each symbol, symbols in time order.  Each TTI packs 5
codewords of 1024 coded bits; remaining bit slots carry seeded filler bits
that are excluded from error statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateInputError
from .numerics import Tensor, div, index_select, reshape, sqrt, square, tmean, tsum

N_SUBCARRIERS = 72
N_SYMBOLS = 14
PILOT_SYMBOLS = (2, 11)  # 0-based "third and twelfth"
CODEWORDS_PER_TTI = 5
CODEWORD_BITS = 1024

# fixed seed for the pilot sequence; the receiver knows it too
_PILOT_SEED = 0x51E9


@dataclass(frozen=True)
class Constellation:
    order: int
    points: np.ndarray  # complex128, shape (order,); index = integer bit label
    bits_per_symbol: int

    def __post_init__(self):
        if self.order < 2 or self.order & (self.order - 1):
            raise ContractError(f"constellation order {self.order} is not a power of two")
        if self.points.shape != (self.order,):
            raise ContractError("points array must have one entry per label")


@dataclass(frozen=True)
class PilotPattern:
    name: str
    pilot_k: np.ndarray  # subcarrier indices
    pilot_l: np.ndarray  # symbol indices
    pilot_values: np.ndarray  # complex, unit modulus

    @property
    def count(self) -> int:
        return int(self.pilot_k.size)

    def mask(self) -> np.ndarray:
        m = np.zeros((N_SUBCARRIERS, N_SYMBOLS), dtype=bool)
        m[self.pilot_k, self.pilot_l] = True
        return m


@dataclass(frozen=True)
class TtiPlan:
    pattern_name: str
    data_k: np.ndarray
    data_l: np.ndarray
    codewords_per_tti: int
    codeword_bits: int
    filler_bit_count: int

    @property
    def data_re_count(self) -> int:
        return int(self.data_k.size)

    @property
    def bit_slots(self) -> int:
        return self.data_re_count * 6

    @property
    def coded_bit_count(self) -> int:
        return self.codewords_per_tti * self.codeword_bits


@dataclass
class TtiGrid:
    symbols: np.ndarray  # complex128 (72, 14)
    pattern_name: str

    def __post_init__(self):
        if self.symbols.shape != (N_SUBCARRIERS, N_SYMBOLS):
            raise ContractError(f"grid must be {N_SUBCARRIERS}x{N_SYMBOLS}, got {self.symbols.shape}")


def build_qam64_gray() -> Constellation:
    """Gray-labeled 64-QAM per the TS 38.211 modulation mapper.

    x(b0..b5) = [(1-2b0)(4-(1-2b2)(2-(1-2b4))) + j(1-2b1)(4-(1-2b3)(2-(1-2b5)))] / sqrt(42)
    """
    labels = np.arange(64)
    b = ((labels[:, None] >> (5 - np.arange(6))) & 1).astype(np.float64)
    s = 1.0 - 2.0 * b  # bit 0 -> +1, bit 1 -> -1
    i_part = s[:, 0] * (4.0 - s[:, 2] * (2.0 - s[:, 4]))
    q_part = s[:, 1] * (4.0 - s[:, 3] * (2.0 - s[:, 5]))
    points = (i_part + 1j * q_part) / np.sqrt(42.0)
    return Constellation(order=64, points=points, bits_per_symbol=6)


def normalize_constellation(raw_points: np.ndarray) -> Constellation:
    """Center to zero mean and scale to unit average power."""
    raw = np.asarray(raw_points, dtype=np.complex128)
    if raw.size < 2:
        raise ContractError("need at least 2 points")
    centered = raw - raw.mean()
    power = np.mean(np.abs(centered) ** 2)
    if power < 1e-24:
        raise DegenerateInputError("all constellation points identical")
    pts = centered / np.sqrt(power)
    m = pts.size
    return Constellation(order=int(m), points=pts, bits_per_symbol=int(np.log2(m)))


def normalize_constellation_t(raw: Tensor) -> Tensor:
    """Differentiable zero-mean unit-power normalization on an (M,2) tensor."""
    if raw.ndim != 2 or raw.shape[1] != 2:
        raise ContractError(f"expected (M,2) real/imag tensor, got {raw.shape}")
    centered = raw - tmean(raw, axis=0, keepdims=True)
    power = tmean(tsum(square(centered), axis=1, keepdims=True), axis=0, keepdims=True)
    return div(centered, sqrt(power))


def map_bits(bits: np.ndarray, constellation: Constellation) -> np.ndarray:
    bits = np.asarray(bits)
    bps = constellation.bits_per_symbol
    if bits.size % bps:
        raise ContractError(f"bit count {bits.size} not divisible by {bps}")
    groups = bits.reshape(-1, bps).astype(np.int64)
    weights = 1 << np.arange(bps - 1, -1, -1)
    labels = groups @ weights
    return constellation.points[labels]


def map_labels_t(points_t: Tensor, labels: np.ndarray) -> Tensor:
    """Differentiable label lookup on an (M,2) constellation tensor."""
    return index_select(points_t, np.asarray(labels, dtype=np.intp), axis=0)


def hard_demap(symbols: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Nearest-point decision; returns the bit array (inverse of map_bits at zero noise)."""
    d2 = np.abs(np.asarray(symbols).reshape(-1, 1) - constellation.points[None, :]) ** 2
    labels = d2.argmin(axis=1)
    bps = constellation.bits_per_symbol
    bits = (labels[:, None] >> np.arange(bps - 1, -1, -1)) & 1
    return bits.reshape(-1).astype(np.int8)


def build_pilot_pattern(name: str) -> PilotPattern:
    if name == "pilotless":
        empty = np.zeros(0, dtype=np.intp)
        return PilotPattern(name, empty, empty, np.zeros(0, dtype=np.complex128))
    if name != "baseline":
        raise ContractError(f"unknown pilot pattern {name!r}")
    ks, ls = [], []
    for l in PILOT_SYMBOLS:
        for k in range(0, N_SUBCARRIERS, 2):
            ks.append(k)
            ls.append(l)
    rng = np.random.default_rng(_PILOT_SEED)
    qpsk = np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * rng.integers(0, 4, size=len(ks))))
    return PilotPattern(name, np.array(ks, dtype=np.intp), np.array(ls, dtype=np.intp), qpsk)


def build_tti_plan(pattern: PilotPattern,
                   codewords_per_tti: int = CODEWORDS_PER_TTI,
                   codeword_bits: int = CODEWORD_BITS) -> TtiPlan:
    mask = pattern.mask()
    ks, ls = [], []
    for l in range(N_SYMBOLS):  # time order
        for k in range(N_SUBCARRIERS):  # frequency-first within the symbol
            if not mask[k, l]:
                ks.append(k)
                ls.append(l)
    data_k = np.array(ks, dtype=np.intp)
    slots = data_k.size * 6
    payload = codewords_per_tti * codeword_bits
    if payload > slots:
        raise ContractError(f"{codewords_per_tti} codewords of {codeword_bits} bits exceed {slots} slots")
    return TtiPlan(pattern.name, data_k, np.array(ls, dtype=np.intp),
                   codewords_per_tti, codeword_bits, slots - payload)


def assemble_tti(coded_bits: np.ndarray, constellation: Constellation,
                 pattern: PilotPattern, plan: TtiPlan) -> TtiGrid:
    """Map coded+filler bits onto data REs and drop pilots into their cells."""
    if pattern.name != plan.pattern_name:
        raise ContractError(f"pattern {pattern.name!r} does not match plan {plan.pattern_name!r}")
    coded_bits = np.asarray(coded_bits)
    if coded_bits.size != plan.bit_slots:
        raise ContractError(f"expected {plan.bit_slots} bits, got {coded_bits.size}")
    grid = np.zeros((N_SUBCARRIERS, N_SYMBOLS), dtype=np.complex128)
    grid[plan.data_k, plan.data_l] = map_bits(coded_bits, constellation)
    if pattern.count:
        grid[pattern.pilot_k, pattern.pilot_l] = pattern.pilot_values
    return TtiGrid(grid, pattern.name)


def extract_data_res(grid: TtiGrid, plan: TtiPlan) -> np.ndarray:
    if grid.pattern_name != plan.pattern_name:
        raise ContractError(f"grid pattern {grid.pattern_name!r} does not match plan {plan.pattern_name!r}")
    return grid.symbols[plan.data_k, plan.data_l]
