"""Learned receiver models built on the in-package autodiff engine.

Four schemes share plumbing:
  - per-RE demapper: one small MLP per data RE over (x̂ re, x̂ im, log σ²_eff)
  - conv demapper: residual conv net over the 2-channel equalized grid
  - neural receiver: same backbone over (Y re, Y im, log N0) raw grids
  - end-to-end: trainable constellation + pilotless neural receiver

All of them emit 6 LLR logits per resource element, positive = bit 1.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..numerics import (
    ConvSpec,
    ConvWeights,
    Tensor,
    concat,
    conv2d,
    index_select,
    mul,
    relu,
    residual_add,
)
from ..phy_frame import N_SUBCARRIERS, N_SYMBOLS, build_qam64_gray, normalize_constellation_t

LLR_CLIP = 30.0
N_BIT_CHANNELS = 6
# the noise feature is log sigma^2 shrunk to the symbol features' range
NOISE_FEATURE_SCALE = 0.25

# (freq, time) dilation pairs, cycled when the block count isn't 4
_DILATIONS = ((1, 1), (2, 3), (3, 6), (2, 3))


def _he_normal(rng, shape, fan_in):
    return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape), requires_grad=True)


class ResNetBackbone:
    """stem conv -> B x (sep-dilated conv -> ReLU -> sep-dilated conv + skip) -> 1x1 head."""

    def __init__(self, in_channels: int, blocks: int = 4, channels: int = 32, seed: int = 0):
        if blocks < 1:
            raise ContractError("need at least one residual block")
        rng = np.random.default_rng(seed)
        c = channels
        self.in_channels = in_channels
        self.blocks = blocks
        self.channels = channels

        self.stem_spec = ConvSpec(in_channels, c)
        self.stem = ConvWeights(
            full=_he_normal(rng, (c, in_channels, 3, 3), in_channels * 9),
            bias=Tensor(np.zeros(c), requires_grad=True),
        )
        self.block_specs = []
        self.block_weights = []
        for b in range(blocks):
            dh, dw = _DILATIONS[b % len(_DILATIONS)]
            spec = ConvSpec(c, c, dilation_h=dh, dilation_w=dw, separable=True)
            pair = []
            for k in range(2):
                # second conv of each branch starts at zero so every block
                # begins as identity; otherwise the residual stack compounds
                # He-scale activations into saturated logits and training
                # wastes its budget shrinking them back
                pw = (Tensor(np.zeros((c, c, 1, 1)), requires_grad=True) if k == 1
                      else _he_normal(rng, (c, c, 1, 1), c))
                pair.append(ConvWeights(
                    depthwise=_he_normal(rng, (c, 1, 3, 3), 9),
                    pointwise=pw,
                    bias=Tensor(np.zeros(c), requires_grad=True),
                ))
            self.block_specs.append(spec)
            self.block_weights.append(pair)
        self.head_spec = ConvSpec(c, N_BIT_CHANNELS, kernel_h=1, kernel_w=1)
        # zero head: the net opens with exactly uninformative (0) logits
        self.head = ConvWeights(
            full=Tensor(np.zeros((N_BIT_CHANNELS, c, 1, 1)), requires_grad=True),
            bias=Tensor(np.zeros(N_BIT_CHANNELS), requires_grad=True),
        )

    def params(self) -> list:
        out = list(self.stem.params())
        for pair in self.block_weights:
            for w in pair:
                out.extend(w.params())
        out.extend(self.head.params())
        return out

    def forward(self, x: Tensor) -> Tensor:
        """(N, in_channels, 72, 14) -> (N, 6, 72, 14) logits."""
        if x.shape[-3] != self.in_channels or x.shape[-2:] != (N_SUBCARRIERS, N_SYMBOLS):
            raise ContractError(f"backbone input shape {x.shape} unexpected")
        h = relu(conv2d(x, self.stem_spec, self.stem))
        for spec, (w1, w2) in zip(self.block_specs, self.block_weights):
            inner = conv2d(relu(conv2d(h, spec, w1)), spec, w2)
            h = residual_add(h, inner)
        return conv2d(h, self.head_spec, self.head)

    # checkpoint (de)serialization -------------------------------------------

    def state(self) -> dict:
        out = {"stem.w": self.stem.full, "stem.b": self.stem.bias}
        for b, (w1, w2) in enumerate(self.block_weights):
            for tag, w in (("a", w1), ("b", w2)):
                out[f"block{b}.{tag}.dw"] = w.depthwise
                out[f"block{b}.{tag}.pw"] = w.pointwise
                out[f"block{b}.{tag}.bias"] = w.bias
        out["head.w"] = self.head.full
        out["head.b"] = self.head.bias
        return out

    def load_state(self, arrays: dict) -> None:
        state = self.state()
        missing = sorted(set(state) - set(arrays))
        if missing:
            raise ContractError(f"checkpoint missing tensors: {missing[:4]}")
        for name, tensor in state.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != tensor.shape:
                raise ContractError(
                    f"checkpoint tensor {name} has shape {arr.shape}, expected {tensor.shape}")
            tensor.data[...] = arr


def gather_re_logits(grid_logits: Tensor, data_k: np.ndarray, data_l: np.ndarray) -> Tensor:
    """(N, 6, 72, 14) -> (N, n_re, 6) in plan data-RE order."""
    n = grid_logits.shape[0]
    flat = grid_logits.reshape(n, N_BIT_CHANNELS, N_SUBCARRIERS * N_SYMBOLS)
    idx = np.asarray(data_k) * N_SYMBOLS + np.asarray(data_l)
    picked = index_select(flat, idx, axis=2)  # (N, 6, n_re)
    return picked.transpose((0, 2, 1))


class PerReDemapper:
    """An independent 3->H->H->6 MLP for every data RE, evaluated batched.

    The head carries a fixed inverse-noise gain, mirroring the metric/σ²
    structure of the closed-form demapper: the network learns a bounded
    decision metric while the gain supplies the several-decade LLR dynamic
    range that cross-entropy gradients alone cannot grow (they vanish like
    exp(-|llr|) once a logit is confident).
    """

    N_FEATURES = 3  # x̂ re, x̂ im, scaled log σ²_eff
    GAIN_CAP = 30.0  # matches the LLR clip

    def __init__(self, n_re: int, hidden: int = 32, seed: int = 0):
        rng = np.random.default_rng(seed)
        f, h = self.N_FEATURES, hidden
        self.n_re = n_re
        self.hidden = hidden
        self.w1 = _he_normal(rng, (n_re, f, h), f)
        self.b1 = Tensor(np.zeros((n_re, 1, h)), requires_grad=True)
        self.w2 = _he_normal(rng, (n_re, h, h), h)
        self.b2 = Tensor(np.zeros((n_re, 1, h)), requires_grad=True)
        self.w3 = _he_normal(rng, (n_re, h, N_BIT_CHANNELS), h)
        self.b3 = Tensor(np.zeros((n_re, 1, N_BIT_CHANNELS)), requires_grad=True)

    def params(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def forward(self, feats: Tensor) -> Tensor:
        """(N, n_re, 3) -> (N, n_re, 6)."""
        if feats.shape[1:] != (self.n_re, self.N_FEATURES):
            raise ContractError(f"per-RE features shape {feats.shape} unexpected")
        x = feats.transpose((1, 0, 2))          # (n_re, N, 3)
        h = relu((x @ self.w1) + self.b1)       # (n_re, N, hidden)
        h = relu((h @ self.w2) + self.b2)
        out = (h @ self.w3) + self.b3           # (n_re, N, 6)
        sigma2 = np.exp(feats.data[..., 2:3] / NOISE_FEATURE_SCALE)
        gain = np.minimum(1.0 / np.maximum(sigma2, 1e-12), self.GAIN_CAP)
        return mul(out.transpose((1, 0, 2)), Tensor(gain))

    def state(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "w3": self.w3, "b3": self.b3}

    def load_state(self, arrays: dict) -> None:
        for name, tensor in self.state().items():
            if name not in arrays:
                raise ContractError(f"checkpoint missing tensor {name}")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != tensor.shape:
                raise ContractError(
                    f"checkpoint tensor {name} has shape {arr.shape}, expected {tensor.shape}")
            tensor.data[...] = arr


class TrainableConstellation:
    """64 free complex points, renormalized to zero mean / unit power on
    every forward pass, so the emitted constellation always satisfies the
    invariants regardless of raw parameter drift."""

    def __init__(self, order: int = 64, seed: int = 0, init_spread: float = 0.05):
        rng = np.random.default_rng(seed)
        base = build_qam64_gray().points if order == 64 else (
            rng.normal(size=order) + 1j * rng.normal(size=order))
        raw = np.stack([base.real, base.imag], axis=1)
        raw = raw + rng.normal(0.0, init_spread, size=raw.shape)  # break lattice symmetry
        self.order = order
        self.raw = Tensor(raw, requires_grad=True)

    def params(self) -> list:
        return [self.raw]

    def forward(self) -> Tensor:
        """Normalized (order, 2) point tensor."""
        return normalize_constellation_t(self.raw)

    def points(self) -> np.ndarray:
        p = self.forward().data
        return p[:, 0] + 1j * p[:, 1]

    def state(self) -> dict:
        return {"constellation.raw": self.raw}

    def load_state(self, arrays: dict) -> None:
        if "constellation.raw" not in arrays:
            raise ContractError("checkpoint missing tensor constellation.raw")
        arr = np.asarray(arrays["constellation.raw"], dtype=np.float64)
        if arr.shape != self.raw.shape:
            raise ContractError(f"constellation shape {arr.shape} != {self.raw.shape}")
        self.raw.data[...] = arr


def stack_channel_planes(planes: list) -> Tensor:
    """List of (N, 72, 14) tensors -> (N, C, 72, 14)."""
    expanded = [p.reshape(p.shape[0], 1, N_SUBCARRIERS, N_SYMBOLS) for p in planes]
    return concat(expanded, axis=1)


def clip_llrs(llr: np.ndarray) -> np.ndarray:
    return np.clip(llr, -LLR_CLIP, LLR_CLIP)
