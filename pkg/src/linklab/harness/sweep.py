"""SNR sweeps: stop-ruled Monte Carlo per point, atomic CSV emission."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..errors import ConfigError, ContractError
from .config import LinkConfig
from .sim import LinkContext, baseline_llrs, build_context, perfect_csi_llrs, run_point

CSV_SCHEMA_VERSION = 1
CSV_HEADER = ("schema_version,scheme,esno_db,ebno_db,info_bits_counted,bit_errors,"
              "ber,blocks,block_errors,bler,tti_count,seed_base")


@dataclass(frozen=True)
class BerRecord:
    scheme: str
    esno_db: float
    ebno_db: float
    info_bits_counted: int
    bit_errors: int
    ber: float
    blocks: int
    block_errors: int
    bler: float
    tti_count: int
    seed_base: int

    def csv_line(self) -> str:
        return ",".join([
            str(CSV_SCHEMA_VERSION), self.scheme,
            _fmt(self.esno_db), _fmt(self.ebno_db),
            str(self.info_bits_counted), str(self.bit_errors), _fmt(self.ber),
            str(self.blocks), str(self.block_errors), _fmt(self.bler),
            str(self.tti_count), str(self.seed_base),
        ])


def _fmt(x: float) -> str:
    return repr(float(x))


def ebno_offset_db(k_info: int = 682, n_tx: int = 1024, bits_per_symbol: int = 6) -> float:
    """Es/N0 - Eb/N0 in dB at unit symbol power: 10log10(rate * bits/symbol)."""
    return 10.0 * math.log10((k_info / n_tx) * bits_per_symbol)


def prepare_run(cfg: LinkConfig):
    """Resolve the configured scheme to (context, LLR callable).

    For end_to_end the context carries the learned constellation, so the
    transmitter in the simulator uses the trained points.
    """
    scheme = cfg.scheme
    if scheme == "baseline":
        return build_context(cfg), baseline_llrs
    if scheme == "perfect_csi":
        return build_context(cfg), perfect_csi_llrs
    # learned schemes live in rx_neural; import lazily so classic sweeps
    # don't pay for it
    from ..rx_neural import load_bundle
    path = cfg.checkpoint
    if not path:
        raise ConfigError(f"scheme {scheme!r} needs --checkpoint <path>")
    if not os.path.exists(path):
        raise ContractError(f"missing checkpoint for scheme {scheme!r}: expected {path}")
    bundle = load_bundle(scheme, path)
    ctx = build_context(cfg, bundle.constellation)
    return ctx, bundle.receiver(ctx)


def sweep_records(cfg: LinkConfig, prepared=None) -> list:
    """One BerRecord per grid point, computed points-in-parallel but
    reduced in grid order (bit-identical for any worker count)."""
    ctx, receiver = prepared if prepared is not None else prepare_run(cfg)
    grid = cfg.esno_grid_db
    offset = ebno_offset_db(ctx.code.k_info, ctx.code.n_tx,
                            ctx.constellation.bits_per_symbol)

    def _one(args):
        index, esno = args
        return run_point(ctx, esno, index, receiver)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            tallies = list(pool.map(_one, enumerate(grid)))
    else:
        tallies = [_one(item) for item in enumerate(grid)]

    return [
        BerRecord(
            scheme=cfg.scheme,
            esno_db=t.esno_db,
            ebno_db=t.esno_db - offset,
            info_bits_counted=t.info_bits_counted,
            bit_errors=t.bit_errors,
            ber=t.ber,
            blocks=t.blocks,
            block_errors=t.block_errors,
            bler=t.bler,
            tti_count=t.tti_count,
            seed_base=cfg.seed_base,
        )
        for t in tallies
    ]


def write_csv(records: list, path: str) -> None:
    """Atomic whole-file write: header plus one line per record."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        for rec in records:
            f.write(rec.csv_line() + "\n")
    os.replace(tmp, path)


def read_csv(path: str) -> list:
    """Parse a sweep CSV back into BerRecords; errors cite the line number."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ContractError(f"{path}:1: unrecognized CSV header")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 12:
            raise ContractError(f"{path}:{lineno}: expected 12 fields, got {len(parts)}")
        try:
            if int(parts[0]) != CSV_SCHEMA_VERSION:
                raise ContractError(f"{path}:{lineno}: schema version {parts[0]} unsupported")
            records.append(BerRecord(
                scheme=parts[1],
                esno_db=float(parts[2]), ebno_db=float(parts[3]),
                info_bits_counted=int(parts[4]), bit_errors=int(parts[5]),
                ber=float(parts[6]),
                blocks=int(parts[7]), block_errors=int(parts[8]),
                bler=float(parts[9]),
                tti_count=int(parts[10]), seed_base=int(parts[11]),
            ))
        except ValueError as e:
            raise ContractError(f"{path}:{lineno}: {e}") from e
    return records


def ber_std_error(rec: BerRecord) -> float:
    """Monte-Carlo standard error of the BER estimate.

    Treats codewords as the independent unit: var(BER) ~ var over blocks of
    the per-block bit-error fraction.  With only aggregate counts available,
    approximate via the BLER binomial error scaled by mean bit errors per
    errored block.
    """
    if rec.blocks == 0 or rec.block_errors == 0:
        return 0.0
    k = rec.info_bits_counted // rec.blocks
    if rec.block_errors >= rec.blocks:
        # every block errored: the BLER term vanishes, but the per-block
        # fraction still varies; bound it by the Bernoulli-bit variance
        # with blocks (not bits) as the independent unit
        return math.sqrt(max(rec.ber * (1.0 - rec.ber), 0.0) / rec.blocks)
    bler_se = math.sqrt(rec.bler * (1.0 - rec.bler) / rec.blocks)
    bits_per_errored_block = rec.bit_errors / rec.block_errors
    return bler_se * bits_per_errored_block / k


def interpolate_esno_at_ber(records: list, target_ber: float) -> float:
    """Log-linear interpolation of the Es/N0 where the BER curve crosses target."""
    pts = sorted((r.esno_db, r.ber) for r in records)
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        if (y0 - target_ber) * (y1 - target_ber) <= 0 and y0 != y1:
            if y0 <= 0 or y1 <= 0:  # cannot interpolate a log of zero
                continue
            t = (math.log10(y0) - math.log10(target_ber)) / (math.log10(y0) - math.log10(y1))
            return x0 + t * (x1 - x0)
    raise ContractError(f"BER curve never crosses {target_ber}")
