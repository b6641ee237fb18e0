"""Link-level Monte Carlo engine.

A "TTI" run is: draw payload bits -> LDPC encode -> map onto the resource
grid -> fade + noise -> receiver produces LLRs -> BP decode -> tally errors.
Receivers are injected as callables over a generated batch, so the classic
chains and the learned schemes share the exact same randomness: channel,
noise, payload, and filler streams are keyed by (sweep point, tti index)
only, never by scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rx_classic
from ..channel import (
    ChannelRealization,
    DopplerSpec,
    apply as apply_channel,
    doppler_from_speed,
    esno_db_to_n0,
    generate_realization,
    tdl_a_profile,
)
from ..errors import ContractError
from ..fec import build_5g_code, decode_bp
from ..phy_frame import (
    Constellation,
    TtiGrid,
    assemble_tti,
    build_pilot_pattern,
    build_qam64_gray,
    build_tti_plan,
)
from .config import LinkConfig
from .seeding import (
    STREAM_BITS,
    STREAM_CHANNEL,
    STREAM_FILLER,
    STREAM_NOISE,
    tti_seed,
)


@dataclass
class LinkContext:
    """Everything fixed across a run: geometry, code, fading statistics."""
    cfg: LinkConfig
    constellation: Constellation
    pattern: object
    plan: object
    code: object
    profile: object
    doppler: DopplerSpec

    @property
    def payload_bits(self) -> int:
        return self.plan.codewords_per_tti * self.plan.codeword_bits


def build_context(cfg: LinkConfig, constellation: Constellation | None = None) -> LinkContext:
    pattern = build_pilot_pattern(cfg.pattern)
    plan = build_tti_plan(pattern)
    code = build_5g_code()
    if code.k_info != cfg.k_info or code.n_tx != cfg.n_tx:
        raise ContractError("configured code parameters do not match the built code")
    profile = tdl_a_profile(cfg.delay_spread_s)
    doppler = doppler_from_speed(cfg.speed_kmh, cfg.carrier_hz, cfg.oscillators)
    return LinkContext(
        cfg=cfg,
        constellation=constellation if constellation is not None else build_qam64_gray(),
        pattern=pattern,
        plan=plan,
        code=code,
        profile=profile,
        doppler=doppler,
    )


@dataclass
class TtiBatch:
    """A block of independently faded TTIs sharing one Es/N0."""
    esno_db: float
    noise_variance: float
    info_bits: np.ndarray   # (n, codewords, k_info)
    slot_bits: np.ndarray   # (n, bit_slots) payload + filler
    x: np.ndarray           # (n, 72, 14) transmitted grids
    h: np.ndarray           # (n, 72, 14) true channel
    y: np.ndarray           # (n, 72, 14) received grids
    pattern: object
    plan: object
    constellation: Constellation


def generate_tti_batch(ctx: LinkContext, esno_db: float, point_index: int,
                       tti_indices: range) -> TtiBatch:
    from ..fec import encode  # local to keep module import light

    cfg = ctx.cfg
    plan, pattern = ctx.plan, ctx.pattern
    n = len(tti_indices)
    n0 = esno_db_to_n0(esno_db)
    cw, k_info = plan.codewords_per_tti, ctx.code.k_info

    info = np.empty((n, cw, k_info), dtype=np.uint8)
    slot_bits = np.empty((n, plan.bit_slots), dtype=np.uint8)
    x = np.empty((n, 72, 14), dtype=np.complex128)
    h = np.empty((n, 72, 14), dtype=np.complex128)
    y = np.empty((n, 72, 14), dtype=np.complex128)

    for row, tti in enumerate(tti_indices):
        rng_bits = np.random.default_rng(tti_seed(cfg.seed_base, STREAM_BITS, point_index, tti))
        info[row] = rng_bits.integers(0, 2, size=(cw, k_info), dtype=np.uint8)
        coded = encode(info[row], ctx.code).reshape(-1)
        rng_fill = np.random.default_rng(tti_seed(cfg.seed_base, STREAM_FILLER, point_index, tti))
        filler = rng_fill.integers(0, 2, size=plan.filler_bit_count, dtype=np.uint8)
        slot_bits[row] = np.concatenate([coded, filler])

        grid = assemble_tti(slot_bits[row], ctx.constellation, pattern, plan)
        ch = generate_realization(
            ctx.profile, ctx.doppler,
            tti_seed(cfg.seed_base, STREAM_CHANNEL, point_index, tti),
            spacing_hz=cfg.spacing_hz, noise_variance=n0,
        )
        rx = apply_channel(grid, ch, tti_seed(cfg.seed_base, STREAM_NOISE, point_index, tti))
        x[row], h[row], y[row] = grid.symbols, ch.h, rx.symbols

    return TtiBatch(esno_db, n0, info, slot_bits, x, h, y, pattern, plan, ctx.constellation)


# -- batched classic receivers (vectorized equivalents of rx_classic) -----------

def baseline_llrs(batch: TtiBatch) -> np.ndarray:
    """LS + nearest-pilot + ZF + exact demap over a whole batch: (n, bit_slots)."""
    pattern, plan = batch.pattern, batch.plan
    h_pilot = batch.y[:, pattern.pilot_k, pattern.pilot_l] / pattern.pilot_values
    h_hat = h_pilot[:, rx_classic._nearest_pilot_index(pattern)]
    safe = h_hat != 0.0
    x_hat = np.zeros_like(batch.y)
    np.divide(batch.y, h_hat, out=x_hat, where=safe)
    sigma2 = np.full(batch.y.shape, np.inf)
    np.divide(batch.noise_variance, np.abs(h_hat) ** 2, out=sigma2, where=safe)
    llr = rx_classic.gaussian_llr_demap(
        x_hat[:, plan.data_k, plan.data_l],
        sigma2[:, plan.data_k, plan.data_l],
        batch.constellation,
    )
    return llr.reshape(llr.shape[0], -1)


def perfect_csi_llrs(batch: TtiBatch) -> np.ndarray:
    plan = batch.plan
    safe = batch.h != 0.0
    x_hat = np.zeros_like(batch.y)
    np.divide(batch.y, batch.h, out=x_hat, where=safe)
    sigma2 = np.full(batch.y.shape, np.inf)
    np.divide(batch.noise_variance, np.abs(batch.h) ** 2, out=sigma2, where=safe)
    llr = rx_classic.gaussian_llr_demap(
        x_hat[:, plan.data_k, plan.data_l],
        sigma2[:, plan.data_k, plan.data_l],
        batch.constellation,
    )
    return llr.reshape(llr.shape[0], -1)


@dataclass
class PointTally:
    esno_db: float
    info_bits_counted: int = 0
    bit_errors: int = 0
    blocks: int = 0
    block_errors: int = 0
    tti_count: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.info_bits_counted if self.info_bits_counted else 0.0

    @property
    def bler(self) -> float:
        return self.block_errors / self.blocks if self.blocks else 0.0


def run_point(ctx: LinkContext, esno_db: float, point_index: int, receiver) -> PointTally:
    """Monte Carlo at one Es/N0 until the stop rule fires.

    `receiver(batch) -> (n, bit_slots)` LLRs.  Counting is strictly TTI-ordered,
    so results are identical for any batch size or worker layout.
    """
    cfg = ctx.cfg
    plan = ctx.plan
    cw, k_info = plan.codewords_per_tti, ctx.code.k_info
    tally = PointTally(esno_db=esno_db)

    tti = 0
    while tti < cfg.stop_max_ttis and tally.block_errors < cfg.stop_block_errors:
        n = min(cfg.batch_ttis, cfg.stop_max_ttis - tti)
        batch = generate_tti_batch(ctx, esno_db, point_index, range(tti, tti + n))
        llr = receiver(batch)
        if llr.shape != (n, plan.bit_slots):
            raise ContractError(f"receiver returned {llr.shape}, expected {(n, plan.bit_slots)}")
        payload = llr[:, : ctx.payload_bits].reshape(n * cw, ctx.code.n_tx)
        decoded, _, _ = decode_bp(payload, ctx.code, max_iters=cfg.max_iters)
        errs = decoded != batch.info_bits.reshape(n * cw, k_info)
        cw_bit_errors = errs.sum(axis=1)

        for row in range(n):
            seg = cw_bit_errors[row * cw : (row + 1) * cw]
            tally.info_bits_counted += cw * k_info
            tally.bit_errors += int(seg.sum())
            tally.blocks += cw
            tally.block_errors += int((seg > 0).sum())
            tally.tti_count += 1
            tti += 1
            if tally.block_errors >= cfg.stop_block_errors:
                break
    return tally
