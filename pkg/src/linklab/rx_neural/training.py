"""Training loops and inference plumbing for the learned receivers.

All four schemes minimize bce_with_logits against the transmitted slot bits,
rephrasing demapping as 6 binary classifications per resource element.  Data
is generated on the fly from the same seeded simulator used for evaluation
(training streams live at disjoint seed indices), with Es/N0 drawn uniformly
over the configured sweep range per step.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from ..errors import ContractError, TrainingError
from ..harness.config import LinkConfig, TrainConfig
from ..harness.seeding import STREAM_TRAIN, seed_derive
from ..harness.sim import LinkContext, TtiBatch, build_context, generate_tti_batch
from ..numerics import Adam, Tensor, bce_with_logits, index_select, load_tensors, save_tensors
from ..phy_frame import Constellation
from ..rx_classic import _nearest_pilot_index
from .models import (
    NOISE_FEATURE_SCALE,
    PerReDemapper,
    ResNetBackbone,
    TrainableConstellation,
    clip_llrs,
    gather_re_logits,
    stack_channel_planes,
)

_TRAIN_POINT_BASE = 10_000  # keeps training streams clear of sweep points
_LOG_CLIP = 30.0


# -- feature builders (shared by training and inference) ------------------------

def equalized_features(batch: TtiBatch) -> np.ndarray:
    """Per-data-RE (x̂ re, x̂ im, log σ²_eff): classic front end, shape (N, n_re, 3)."""
    pattern, plan = batch.pattern, batch.plan
    h_pilot = batch.y[:, pattern.pilot_k, pattern.pilot_l] / pattern.pilot_values
    h_hat = h_pilot[:, _nearest_pilot_index(pattern)]
    safe = h_hat != 0.0
    x_hat = np.zeros_like(batch.y)
    np.divide(batch.y, h_hat, out=x_hat, where=safe)
    sigma2 = np.full(batch.y.shape, np.inf)
    np.divide(batch.noise_variance, np.abs(h_hat) ** 2, out=sigma2, where=safe)
    xd = x_hat[:, plan.data_k, plan.data_l]
    sd = sigma2[:, plan.data_k, plan.data_l]
    log_s2 = np.clip(np.log(sd, out=np.full_like(sd, np.inf), where=sd > 0), -_LOG_CLIP, _LOG_CLIP)
    # shrunk toward the +-1.08 dynamic range of the symbol features;
    # unbalanced inputs starve the symbol weights of gradient
    return np.stack([xd.real, xd.imag, NOISE_FEATURE_SCALE * log_s2], axis=-1)


def equalized_planes(batch: TtiBatch) -> np.ndarray:
    """Full-grid equalized symbols as 2 channels, pilot REs zero-filled: (N,2,72,14)."""
    pattern = batch.pattern
    h_pilot = batch.y[:, pattern.pilot_k, pattern.pilot_l] / pattern.pilot_values
    h_hat = h_pilot[:, _nearest_pilot_index(pattern)]
    safe = h_hat != 0.0
    x_hat = np.zeros_like(batch.y)
    np.divide(batch.y, h_hat, out=x_hat, where=safe)
    x_hat[:, pattern.pilot_k, pattern.pilot_l] = 0.0
    return np.stack([x_hat.real, x_hat.imag], axis=1)


def received_planes(batch: TtiBatch) -> np.ndarray:
    """Raw received grid + constant log-N0 plane: (N, 3, 72, 14)."""
    n0_plane = np.full(batch.y.shape, math.log(batch.noise_variance)
                       if batch.noise_variance > 0 else -_LOG_CLIP)
    return np.stack([batch.y.real, batch.y.imag, np.clip(n0_plane, -_LOG_CLIP, _LOG_CLIP)], axis=1)


def _bits_as_re_groups(batch: TtiBatch) -> np.ndarray:
    n = batch.slot_bits.shape[0]
    return batch.slot_bits.reshape(n, -1, 6).astype(np.float64)


def _labels(batch: TtiBatch) -> np.ndarray:
    groups = batch.slot_bits.reshape(batch.slot_bits.shape[0], -1, 6).astype(np.int64)
    weights = 1 << np.arange(5, -1, -1)
    return groups @ weights  # (N, n_re)


def _awgn_override(batch: TtiBatch) -> None:
    """Replace fading with H=1 while keeping the exact noise draw."""
    noise = batch.y - batch.h * batch.x
    batch.h[:] = 1.0
    batch.y[:] = batch.x + noise


# -- the shared optimization loop ------------------------------------------------

def _run_training(ctx: LinkContext, tcfg: TrainConfig, seed: int, loss_of_batch,
                  params: list, per_step=None, awgn: bool = False) -> list:
    opt = Adam(params, lr=tcfg.lr)
    rng = np.random.default_rng(seed_derive(seed, STREAM_TRAIN, 0))
    lo, hi = ctx.cfg.snr_start_db, ctx.cfg.snr_stop_db
    losses = []
    steps = tcfg.budget
    for step in range(steps):
        # cosine decay to 10% of the base rate; the low-rate tail is what
        # settles LLR calibration after the decision boundaries are in place
        opt.lr = tcfg.lr * (0.55 + 0.45 * math.cos(math.pi * step / max(steps - 1, 1)))
        esno = float(rng.uniform(lo, hi))
        batch = generate_tti_batch(ctx, esno, _TRAIN_POINT_BASE + step,
                                   range(tcfg.batch_ttis))
        if awgn:
            _awgn_override(batch)
        loss = loss_of_batch(batch)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingError(
                f"loss diverged at step {step} (esno {esno:.2f} dB): {value}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(value)
        if per_step is not None:
            per_step(step)
    return losses


# -- per-scheme training entry points --------------------------------------------

def train_per_re_demapper(link_cfg: LinkConfig, tcfg: TrainConfig, seed: int,
                          out_path: str, awgn: bool = False):
    ctx = build_context(link_cfg)
    n_re = ctx.plan.data_k.size
    model = PerReDemapper(n_re, hidden=tcfg.channels, seed=seed_derive(seed, STREAM_TRAIN, 1))

    def loss_of_batch(batch):
        feats = Tensor(equalized_features(batch))
        logits = model.forward(feats)
        return bce_with_logits(logits, _bits_as_re_groups(batch))

    losses = _run_training(ctx, tcfg, seed, loss_of_batch, model.params(), awgn=awgn)
    _save(out_path, model.state(), "per_re_demapper", link_cfg, tcfg, seed, losses,
          extra={"n_re": n_re, "hidden": tcfg.channels})
    model.load_state(load_tensors(out_path))  # snap to the stored f32 values
    return model, losses


def train_conv_demapper(link_cfg: LinkConfig, tcfg: TrainConfig, seed: int,
                        out_path: str, awgn: bool = False):
    ctx = build_context(link_cfg)
    model = ResNetBackbone(2, blocks=tcfg.blocks, channels=tcfg.channels,
                           seed=seed_derive(seed, STREAM_TRAIN, 1))
    plan = ctx.plan

    def loss_of_batch(batch):
        planes = Tensor(equalized_planes(batch))
        logits = gather_re_logits(model.forward(planes), plan.data_k, plan.data_l)
        return bce_with_logits(logits, _bits_as_re_groups(batch))

    losses = _run_training(ctx, tcfg, seed, loss_of_batch, model.params(), awgn=awgn)
    _save(out_path, model.state(), "conv_demapper", link_cfg, tcfg, seed, losses)
    model.load_state(load_tensors(out_path))
    return model, losses


def train_neural_receiver(link_cfg: LinkConfig, tcfg: TrainConfig, seed: int,
                          out_path: str, awgn: bool = False):
    ctx = build_context(link_cfg)
    model = ResNetBackbone(3, blocks=tcfg.blocks, channels=tcfg.channels,
                           seed=seed_derive(seed, STREAM_TRAIN, 1))
    plan = ctx.plan

    def loss_of_batch(batch):
        planes = Tensor(received_planes(batch))
        logits = gather_re_logits(model.forward(planes), plan.data_k, plan.data_l)
        return bce_with_logits(logits, _bits_as_re_groups(batch))

    losses = _run_training(ctx, tcfg, seed, loss_of_batch, model.params(), awgn=awgn)
    _save(out_path, model.state(), "neural_receiver", link_cfg, tcfg, seed, losses)
    model.load_state(load_tensors(out_path))
    return model, losses


def train_end_to_end(link_cfg: LinkConfig, tcfg: TrainConfig, seed: int, out_path: str):
    """Joint constellation + pilotless receiver training.

    The payload is re-mapped differentiably through the current constellation
    and pushed through the known channel realization inside the graph, so
    gradients reach the transmitter.
    """
    if link_cfg.pattern != "pilotless":
        raise ContractError("end-to-end training requires the pilotless pattern")
    ctx = build_context(link_cfg)
    plan = ctx.plan
    const = TrainableConstellation(seed=seed_derive(seed, STREAM_TRAIN, 2))
    model = ResNetBackbone(3, blocks=tcfg.blocks, channels=tcfg.channels,
                           seed=seed_derive(seed, STREAM_TRAIN, 1))
    n_re = plan.data_k.size
    flat_idx = plan.data_k * 14 + plan.data_l

    def loss_of_batch(batch):
        n = batch.y.shape[0]
        points = const.forward()                     # (64, 2), normalized
        pts = points.data
        emitted = pts[:, 0] + 1j * pts[:, 1]
        if abs(emitted.mean()) >= 1e-6 or abs((np.abs(emitted) ** 2).mean() - 1.0) >= 1e-6:
            raise TrainingError("constellation normalization invariant violated")
        # keep the numpy-side snapshot in sync so generate_tti_batch maps
        # the next batch with the current constellation
        labels = _labels(batch).reshape(-1)
        x = index_select(points, labels, axis=0).reshape(n, n_re, 2)
        xr = index_select(x, np.array([0]), axis=2).reshape(n, n_re)
        xi = index_select(x, np.array([1]), axis=2).reshape(n, n_re)
        hd = batch.h[:, plan.data_k, plan.data_l]
        noise = batch.y - batch.h * batch.x
        nd = noise[:, plan.data_k, plan.data_l]
        yr = xr * hd.real - xi * hd.imag + nd.real
        yi = xr * hd.imag + xi * hd.real + nd.imag
        # plan order is time-major frequency-first: index = l*72 + k
        yr_grid = yr.reshape(n, 14, 72).transpose((0, 2, 1))
        yi_grid = yi.reshape(n, 14, 72).transpose((0, 2, 1))
        n0_plane = Tensor(np.full((n, 72, 14), max(math.log(batch.noise_variance), -_LOG_CLIP)))
        planes = stack_channel_planes([yr_grid, yi_grid, n0_plane])
        logits = gather_re_logits(model.forward(planes), plan.data_k, plan.data_l)
        return bce_with_logits(logits, _bits_as_re_groups(batch))

    def per_step(step):
        ctx.constellation = Constellation(64, const.points(), 6)

    ctx.constellation = Constellation(64, const.points(), 6)
    state = dict(model.state())
    state.update(const.state())
    losses = _run_training(ctx, tcfg, seed, loss_of_batch, model.params() + const.params(),
                           per_step=per_step)
    _save(out_path, state, "end_to_end", link_cfg, tcfg, seed, losses)
    arrays = load_tensors(out_path)
    model.load_state(arrays)
    const.load_state(arrays)
    return (const, model), losses


def _save(path: str, state: dict, scheme: str, link_cfg: LinkConfig, tcfg: TrainConfig,
          seed: int, losses: list, extra: dict | None = None) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    save_tensors(path, state)
    meta = {
        "model": scheme,
        "pattern": link_cfg.pattern,
        "blocks": tcfg.blocks,
        "channels": tcfg.channels,
        "steps": tcfg.budget,
        "batch_ttis": tcfg.batch_ttis,
        "lr": tcfg.lr,
        "seed": seed,
        "snr_start_db": link_cfg.snr_start_db,
        "snr_stop_db": link_cfg.snr_stop_db,
        "loss_first": losses[0],
        "loss_last": losses[-1],
    }
    meta.update(extra or {})
    tmp = path + ".json.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    os.replace(tmp, path + ".json")


def read_sidecar(path: str) -> dict:
    sidecar = path + ".json"
    if not os.path.exists(sidecar):
        raise ContractError(f"missing checkpoint sidecar: expected {sidecar}")
    with open(sidecar, "r", encoding="utf-8") as f:
        return json.load(f)


TRAINERS = {
    "per_re_demapper": train_per_re_demapper,
    "conv_demapper": train_conv_demapper,
    "neural_receiver": train_neural_receiver,
    "end_to_end": train_end_to_end,
}


# -- inference --------------------------------------------------------------------

class InferenceBundle:
    """A loaded checkpoint turned into a batch-LLR callable."""

    def __init__(self, scheme: str, model, constellation: Constellation | None):
        self.scheme = scheme
        self.model = model
        self.constellation = constellation

    def receiver(self, ctx: LinkContext):
        plan = ctx.plan
        scheme, model = self.scheme, self.model

        def _llrs(batch: TtiBatch) -> np.ndarray:
            if scheme == "per_re_demapper":
                logits = model.forward(Tensor(equalized_features(batch)))
            elif scheme == "conv_demapper":
                grid = model.forward(Tensor(equalized_planes(batch)))
                logits = gather_re_logits(grid, plan.data_k, plan.data_l)
            else:  # neural_receiver or end_to_end (same receiver input contract)
                grid = model.forward(Tensor(received_planes(batch)))
                logits = gather_re_logits(grid, plan.data_k, plan.data_l)
            out = clip_llrs(logits.data)
            return out.reshape(out.shape[0], -1)

        return _llrs


def load_bundle(scheme: str, path: str) -> InferenceBundle:
    if scheme not in TRAINERS:
        raise ContractError(f"{scheme!r} is not a learned scheme")
    meta = read_sidecar(path)
    if meta.get("model") != scheme:
        raise ContractError(
            f"checkpoint at {path} holds model {meta.get('model')!r}, expected {scheme!r}")
    arrays = load_tensors(path)
    constellation = None
    if scheme == "per_re_demapper":
        model = PerReDemapper(int(meta["n_re"]), hidden=int(meta["hidden"]))
        model.load_state(arrays)
    elif scheme == "conv_demapper":
        model = ResNetBackbone(2, blocks=int(meta["blocks"]), channels=int(meta["channels"]))
        model.load_state(arrays)
    elif scheme == "neural_receiver":
        model = ResNetBackbone(3, blocks=int(meta["blocks"]), channels=int(meta["channels"]))
        model.load_state(arrays)
    else:  # end_to_end
        model = ResNetBackbone(3, blocks=int(meta["blocks"]), channels=int(meta["channels"]))
        model.load_state(arrays)
        const = TrainableConstellation()
        const.load_state(arrays)
        constellation = Constellation(64, const.points(), 6)
    return InferenceBundle(scheme, model, constellation)


def load_inference(scheme: str, path: str, ctx: LinkContext):
    """Convenience: checkpoint path -> receiver callable bound to ctx."""
    return load_bundle(scheme, path).receiver(ctx)
