"""Lifted LDPC code: systematic encoding, rate matching, BP decoding.

Construction (documented so results are reproducible):
  - base graph per :mod:`linklab.fec.basegraph`, lifting size Z = 72
  - K = 10 * Z = 720 systematic positions; info length k = 682; the last 38
    systematic bits are shortened (known zeros, never transmitted)
  - the first 2Z = 144 systematic bits are punctured
  - circular-buffer selection starting right after the punctured bits,
    skipping filler, takes exactly n = 1024 transmitted bits
    (538 systematic + 486 parity), rate 682/1024

Decoding is flooding sum-product over the "live" subgraph (rows and columns
that can influence transmitted or punctured bits; extension rows whose parity
column is entirely untransmitted exchange only zero messages and are pruned).
LLR convention: positive means bit 1.  Intrinsic LLRs are clipped to +-30;
check messages are limited only by the tanh clamp, so saturated single-bit
errors remain correctable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError
from .basegraph import (
    LIFT_Z,
    N_BASE_COLS,
    N_BASE_ROWS,
    N_CORE_ROWS,
    N_INFO_COLS,
    build_base_graph,
)

K_INFO = 682
N_TX = 1024
LLR_CLIP = 30.0
_TANH_CLAMP = 1.0 - 1e-15


def _gf2_inv(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    a = np.concatenate([mat.astype(np.uint8), np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        piv = np.nonzero(a[col:, col])[0]
        if piv.size == 0:
            raise ContractError("parity core is singular over GF(2)")
        piv = piv[0] + col
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
        hits = np.nonzero(a[:, col])[0]
        hits = hits[hits != col]
        a[hits] ^= a[col]
    return a[:, n:]


@dataclass
class LdpcCode:
    z: int
    k_info: int
    n_tx: int
    base_rows: list
    k_systematic: int = field(init=False)
    n_full: int = field(init=False)

    def __post_init__(self):
        z = self.z
        self.k_systematic = N_INFO_COLS * z  # 720
        self.n_full = N_BASE_COLS * z  # 3744
        self.filler_lo = self.k_info  # 682
        self.filler_hi = self.k_systematic  # 720
        self.punctured = 2 * z  # 144

        # circular buffer: everything after the punctured bits, minus filler
        order = np.concatenate([
            np.arange(self.punctured, self.filler_lo),
            np.arange(self.filler_hi, self.n_full),
        ])
        if order.size < self.n_tx:
            raise ContractError("buffer shorter than requested transmit length")
        self.tx_idx = order[: self.n_tx]

        self._build_encoder()
        self._build_full_h()
        self._build_decoder()

    # -- construction ---------------------------------------------------------

    def _build_encoder(self):
        z = self.z
        b = np.zeros((N_CORE_ROWS * z, N_CORE_ROWS * z), dtype=np.uint8)
        i = np.arange(z)
        for r in range(N_CORE_ROWS):
            for c, s in self.base_rows[r]:
                if c >= N_INFO_COLS:
                    b[r * z + i, (c - N_INFO_COLS) * z + (i + s) % z] ^= 1
        self._b_inv = _gf2_inv(b)
        check = (b.astype(np.int64) @ self._b_inv.astype(np.int64)) % 2
        if not np.array_equal(check, np.eye(N_CORE_ROWS * z, dtype=np.int64)):
            raise ContractError("parity core inverse failed verification")

    def _build_full_h(self):
        z = self.z
        i = np.arange(z)
        rows, cols = [], []
        for r, entries in enumerate(self.base_rows):
            for c, s in entries:
                rows.append(r * z + i)
                cols.append(c * z + (i + s) % z)
        data = np.ones(len(rows) * z, dtype=np.int8)
        self.h_full = sp.csr_matrix(
            (data, (np.concatenate(rows), np.concatenate(cols))),
            shape=(N_BASE_ROWS * z, self.n_full),
        )

    def _build_decoder(self):
        z = self.z
        last_col = int(self.tx_idx.max()) // z  # highest base column carrying tx bits
        self.live_cols = last_col + 1
        self.live_rows = [r for r in range(N_BASE_ROWS)
                          if r < N_CORE_ROWS or 14 + r - N_CORE_ROWS < self.live_cols]
        self.n_dec = self.live_cols * z

        i = np.arange(z)
        check_ids, var_ids = [], []
        for local_r, r in enumerate(self.live_rows):
            entries = [(c, s) for c, s in self.base_rows[r] if c < self.live_cols]
            for c, s in entries:
                check_ids.append(local_r * z + i)
                var_ids.append(c * z + (i + s) % z)
        checks = np.concatenate(check_ids)
        vars_ = np.concatenate(var_ids)
        order = np.lexsort((vars_, checks))  # check-major edge order
        self.edge_check = checks[order]
        self.edge_var = vars_[order]
        self.n_edges = self.edge_var.size
        self.n_checks = len(self.live_rows) * z
        # reduceat segment starts (every check has >= 2 edges by construction)
        deg = np.bincount(self.edge_check, minlength=self.n_checks)
        if deg.min() < 2:
            raise ContractError("live graph has a degenerate check")
        self.check_starts = np.concatenate([[0], np.cumsum(deg)[:-1]])
        self._edge_to_var = sp.csr_matrix(
            (np.ones(self.n_edges), (np.arange(self.n_edges), self.edge_var)),
            shape=(self.n_edges, self.n_dec),
        )
        self.h_live = sp.csr_matrix(
            (np.ones(self.n_edges, dtype=np.int8), (self.edge_check, self.edge_var)),
            shape=(self.n_checks, self.n_dec),
        )

    # -- rate / geometry helpers ------------------------------------------------

    @property
    def rate(self) -> float:
        return self.k_info / self.n_tx


def build_5g_code() -> LdpcCode:
    return LdpcCode(z=LIFT_Z, k_info=K_INFO, n_tx=N_TX, base_rows=build_base_graph())


def encode(info_bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    """Systematic encode + rate matching: (682,) -> (1024,), or batched 2-D."""
    info = np.asarray(info_bits)
    single = info.ndim == 1
    if single:
        info = info[None]
    if info.shape[-1] != code.k_info:
        raise ContractError(f"expected {code.k_info} info bits, got {info.shape[-1]}")
    x = _encode_full(info.astype(np.uint8), code)
    tx = x[:, code.tx_idx]
    return tx[0] if single else tx


def _encode_full(info: np.ndarray, code: LdpcCode) -> np.ndarray:
    """Full 3744-bit codewords for a (batch, 682) info array."""
    z = code.z
    batch = info.shape[0]
    u = np.zeros((batch, code.k_systematic), dtype=np.uint8)
    u[:, : code.k_info] = info
    blocks = u.reshape(batch, N_INFO_COLS, z)

    syn = np.zeros((batch, N_CORE_ROWS, z), dtype=np.uint8)
    for r in range(N_CORE_ROWS):
        for c, s in code.base_rows[r]:
            if c < N_INFO_COLS:
                syn[:, r] ^= np.roll(blocks[:, c], -s, axis=-1)
    p_core = (syn.reshape(batch, -1).astype(np.int64) @ code._b_inv.T.astype(np.int64)) % 2
    p_core = p_core.astype(np.uint8)

    w = np.concatenate([blocks, p_core.reshape(batch, N_CORE_ROWS, z)], axis=1)
    p_ext = np.zeros((batch, N_BASE_ROWS - N_CORE_ROWS, z), dtype=np.uint8)
    for r in range(N_CORE_ROWS, N_BASE_ROWS):
        acc = p_ext[:, r - N_CORE_ROWS]
        for c, s in code.base_rows[r]:
            if c < N_INFO_COLS + N_CORE_ROWS:
                acc ^= np.roll(w[:, c], -s, axis=-1)
    return np.concatenate([u, p_core, p_ext.reshape(batch, -1)], axis=1)


def syndrome_weight(codewords: np.ndarray, code: LdpcCode) -> np.ndarray:
    """Number of violated checks per codeword (0 = valid), pre-rate-matching."""
    x = np.atleast_2d(np.asarray(codewords, dtype=np.int8))
    s = code.h_full.dot(x.T) % 2
    return np.asarray(s.sum(axis=0)).reshape(-1)


def noiseless_llrs(tx_bits: np.ndarray, magnitude: float = 20.0) -> np.ndarray:
    """Saturated LLRs for known bits (positive = bit 1)."""
    return magnitude * (2.0 * np.asarray(tx_bits, dtype=np.float64) - 1.0)


def decode_bp(llrs: np.ndarray, code: LdpcCode, max_iters: int = 40):
    """Flooding sum-product decode.

    Accepts (1024,) or (batch, 1024) received-bit LLRs; returns
    (info_bits, converged, iterations_used) with matching leading shape.
    Convergence = zero syndrome on the live graph with every decision
    nonzero-confident; failure is signaled via converged=False.
    """
    if max_iters < 1:
        raise ContractError("max_iters must be >= 1")
    llr_in = np.asarray(llrs, dtype=np.float64)
    single = llr_in.ndim == 1
    if single:
        llr_in = llr_in[None]
    if llr_in.shape[-1] != code.n_tx:
        raise ContractError(f"expected {code.n_tx} LLRs, got {llr_in.shape[-1]}")
    batch = llr_in.shape[0]

    # intrinsic LLRs over the live columns; internal sign convention is
    # lam = log P(0)/P(1) so the parity (tanh) rule applies directly
    lam = np.zeros((batch, code.n_dec), dtype=np.float64)
    lam[:, code.tx_idx] = np.clip(llr_in, -LLR_CLIP, LLR_CLIP)
    lam[:, code.filler_lo : code.filler_hi] = -LLR_CLIP  # filler = known zeros
    lam *= -1.0

    ev, starts = code.edge_var, code.check_starts
    m_cv = np.zeros((batch, code.n_edges), dtype=np.float64)
    total = lam.copy()

    out_bits = np.zeros((batch, code.n_dec), dtype=np.int8)
    conv = np.zeros(batch, dtype=bool)
    iters = np.full(batch, max_iters, dtype=np.int64)

    for it in range(1, max_iters + 1):
        m_vc = total[:, ev] - m_cv
        t = np.tanh(0.5 * m_vc)
        sign = t < 0.0
        erased = t == 0.0
        mag = np.clip(np.abs(t), 1e-30, _TANH_CLAMP)
        logs = np.log(mag)
        log_sum = np.add.reduceat(logs, starts, axis=1)
        neg_sum = np.add.reduceat(sign.astype(np.int64), starts, axis=1)
        era_sum = np.add.reduceat(erased.astype(np.int64), starts, axis=1)
        deg = np.diff(np.append(starts, code.n_edges))
        log_ext = np.repeat(log_sum, deg, axis=1) - logs
        par_ext = np.repeat(neg_sum, deg, axis=1) - sign
        # a check whose other inputs include an exact erasure says nothing
        era_ext = np.repeat(era_sum, deg, axis=1) - erased
        prod = np.clip(np.exp(log_ext), 0.0, _TANH_CLAMP)
        m_cv = np.where(par_ext % 2 == 1, -1.0, 1.0) * 2.0 * np.arctanh(prod)
        m_cv[era_ext > 0] = 0.0
        total = lam + np.asarray(m_cv @ code._edge_to_var)

        bits = (total < 0.0).astype(np.int8)  # lam<0 means P(1)>P(0)
        synd = code.h_live.dot(bits.T) % 2
        ok = (np.asarray(synd.sum(axis=0)).reshape(-1) == 0) & (np.abs(total).min(axis=1) > 0.0)
        newly = ok & ~conv
        if newly.any():
            out_bits[newly] = bits[newly]
            iters[newly] = it
            conv |= newly
        if conv.all():
            break

    out_bits[~conv] = (total[~conv] < 0.0).astype(np.int8)
    info = out_bits[:, : code.k_info]
    if single:
        return info[0], bool(conv[0]), int(iters[0])
    return info, conv, iters


def received_to_full_llrs(llr_tx: np.ndarray, code: LdpcCode) -> np.ndarray:
    """Expand transmitted-bit LLRs to the full codeword (diagnostics only)."""
    llr_tx = np.atleast_2d(np.asarray(llr_tx, dtype=np.float64))
    full = np.zeros((llr_tx.shape[0], code.n_full))
    full[:, code.tx_idx] = llr_tx
    full[:, code.filler_lo : code.filler_hi] = -LLR_CLIP
    return full


def export_alist(code: LdpcCode, path: str) -> None:
    """Write the full parity structure in alist text format (1-based indices)."""
    h = code.h_full.tocsc()
    n_checks, n_vars = code.h_full.shape
    col_lists = [h.indices[h.indptr[c] : h.indptr[c + 1]] + 1 for c in range(n_vars)]
    hr = code.h_full.tocsr()
    row_lists = [hr.indices[hr.indptr[r] : hr.indptr[r + 1]] + 1 for r in range(n_checks)]
    col_deg = [len(c) for c in col_lists]
    row_deg = [len(r) for r in row_lists]
    lines = [
        f"{n_vars} {n_checks}",
        f"{max(col_deg)} {max(row_deg)}",
        " ".join(map(str, col_deg)),
        " ".join(map(str, row_deg)),
    ]
    lines += [" ".join(map(str, sorted(c))) for c in col_lists]
    lines += [" ".join(map(str, sorted(r))) for r in row_lists]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
