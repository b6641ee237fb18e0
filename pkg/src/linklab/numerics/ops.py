"""Convolution and training-loss ops for the autodiff engine.

Convolutions are 2-D, stride 1, zero "same" padding, odd kernels, with
optional dilation.  ``separable=True`` runs a depthwise pass followed by a
1x1 pointwise pass.  Inputs may be (C,H,W) or batched (N,C,H,W).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .tensor import Tensor, _as_tensor, add, reshape


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_h: int = 3
    kernel_w: int = 3
    dilation_h: int = 1
    dilation_w: int = 1
    separable: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ContractError("channel counts must be positive")
        if self.kernel_h % 2 == 0 or self.kernel_w % 2 == 0:
            raise ContractError("kernels must be odd for symmetric same padding")
        if self.dilation_h < 1 or self.dilation_w < 1:
            raise ContractError("dilation must be >= 1")


@dataclass
class ConvWeights:
    """Parameter bundle for one conv layer.

    Full conv: ``full`` of shape (C_out, C_in, kh, kw).
    Separable: ``depthwise`` (C_in, 1, kh, kw) and ``pointwise`` (C_out, C_in, 1, 1).
    ``bias`` (C_out,) is optional in both cases.
    """

    full: Tensor | None = None
    depthwise: Tensor | None = None
    pointwise: Tensor | None = None
    bias: Tensor | None = None

    def params(self) -> list:
        out = [t for t in (self.full, self.depthwise, self.pointwise, self.bias) if t is not None]
        return out


def _conv2d_raw(x: Tensor, w: Tensor, dilation: tuple, groups: int) -> Tensor:
    """stride-1 same-padding conv; groups is 1 (full) or C_in (depthwise)."""
    x, w = _as_tensor(x), _as_tensor(w)
    n, c, h, wd = x.shape
    c_out, c_in_g, kh, kw = w.shape
    dh, dw = dilation
    ph, pw = dh * (kh // 2), dw * (kw // 2)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    # col[n,c,i,j,h,w] = padded input at kernel tap (i,j); built by slicing so
    # the backward pass can scatter with the mirrored slice-adds
    col = np.empty((n, c, kh, kw, h, wd), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            col[:, :, i, j] = xp[:, :, i * dh : i * dh + h, j * dw : j * dw + wd]
    if groups == 1:
        col2 = col.reshape(n, c * kh * kw, h * wd)
        out = np.matmul(w.data.reshape(c_out, -1)[None], col2).reshape(n, c_out, h, wd)
    else:  # depthwise: groups == c, c_out == c, c_in_g == 1
        out = np.einsum("ncijhw,cij->nchw", col, w.data[:, 0], optimize=True)

    def backward(g):
        if w.requires_grad or w._parents:
            if groups == 1:
                g2 = g.reshape(n, c_out, h * wd)
                col2b = col.reshape(n, c * kh * kw, h * wd)
                gw = np.matmul(g2, col2b.swapaxes(1, 2)).sum(axis=0)
                w._accum(gw.reshape(w.shape))
            else:
                w._accum(np.einsum("ncijhw,nchw->cij", col, g, optimize=True)[:, None])
        if x.requires_grad or x._parents:
            if groups == 1:
                g2 = g.reshape(n, c_out, h * wd)
                gcol = np.matmul(w.data.reshape(c_out, -1).T[None], g2).reshape(n, c, kh, kw, h, wd)
            else:
                gcol = np.einsum("nchw,cij->ncijhw", g, w.data[:, 0], optimize=True)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i * dh : i * dh + h, j * dw : j * dw + wd] += gcol[:, :, i, j]
            x._accum(gxp[:, :, ph : ph + h, pw : pw + wd])

    return Tensor._from_op(out, (x, w), backward)


def conv2d(x: Tensor, spec: ConvSpec, weights: ConvWeights) -> Tensor:
    """Same-padding 2-D convolution per `spec`; accepts (C,H,W) or (N,C,H,W)."""
    x = _as_tensor(x)
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise ContractError(f"conv2d input must be 3-D or 4-D, got {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ContractError(f"conv2d: input has {x.shape[1]} channels, spec wants {spec.in_channels}")
    dil = (spec.dilation_h, spec.dilation_w)
    if spec.separable:
        dwt, pwt = weights.depthwise, weights.pointwise
        if dwt is None or pwt is None:
            raise ContractError("separable conv needs depthwise and pointwise weights")
        if dwt.shape != (spec.in_channels, 1, spec.kernel_h, spec.kernel_w):
            raise ContractError(f"depthwise weight shape {dwt.shape} does not match spec")
        if pwt.shape != (spec.out_channels, spec.in_channels, 1, 1):
            raise ContractError(f"pointwise weight shape {pwt.shape} does not match spec")
        out = _conv2d_raw(x, dwt, dil, groups=spec.in_channels)
        out = _conv2d_raw(out, pwt, (1, 1), groups=1)
    else:
        wt = weights.full
        if wt is None:
            raise ContractError("non-separable conv needs full weights")
        if wt.shape != (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w):
            raise ContractError(f"conv weight shape {wt.shape} does not match spec")
        out = _conv2d_raw(x, wt, dil, groups=1)
    if weights.bias is not None:
        if weights.bias.shape != (spec.out_channels,):
            raise ContractError(f"bias shape {weights.bias.shape} != ({spec.out_channels},)")
        out = add(out, reshape(weights.bias, (spec.out_channels, 1, 1)))
    if squeeze:
        out = reshape(out, out.shape[1:])
    return out


def bce_with_logits(logits: Tensor, bits) -> Tensor:
    """Mean binary cross-entropy on logits; positive logit means bit 1.

    Stable form: softplus(z) - b*z with softplus(z) = max(z,0) + log1p(exp(-|z|)).
    Targets must be exactly 0 or 1.  No gradient flows to the targets.
    """
    logits = _as_tensor(logits)
    b = bits.data if isinstance(bits, Tensor) else np.asarray(bits, dtype=np.float64)
    if b.shape != logits.shape:
        raise ContractError(f"bce_with_logits shape mismatch: {logits.shape} vs {b.shape}")
    if not np.all((b == 0.0) | (b == 1.0)):
        raise ContractError("bce_with_logits targets must be binary")
    z = logits.data
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    data = np.asarray((softplus - b * z).mean(), dtype=np.float64)
    inv_n = 1.0 / z.size

    def backward(g):
        # d/dz [softplus(z) - b z] = sigmoid(z) - b
        sig = 0.5 * (1.0 + np.tanh(0.5 * z))
        logits._accum(g * (sig - b) * inv_n)

    return Tensor._from_op(data, (logits,), backward)
