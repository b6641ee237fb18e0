"""Forward error correction: lifted LDPC encode / BP decode / rate matching."""

from .basegraph import (
    LIFT_Z,
    N_BASE_COLS,
    N_BASE_ROWS,
    N_CORE_ROWS,
    N_INFO_COLS,
    build_base_graph,
)
from .ldpc import (
    K_INFO,
    LLR_CLIP,
    N_TX,
    LdpcCode,
    build_5g_code,
    decode_bp,
    encode,
    export_alist,
    noiseless_llrs,
    received_to_full_llrs,
    syndrome_weight,
)

__all__ = [
    "LIFT_Z",
    "N_BASE_COLS",
    "N_BASE_ROWS",
    "N_CORE_ROWS",
    "N_INFO_COLS",
    "build_base_graph",
    "K_INFO",
    "LLR_CLIP",
    "N_TX",
    "LdpcCode",
    "build_5g_code",
    "decode_bp",
    "encode",
    "export_alist",
    "noiseless_llrs",
    "received_to_full_llrs",
    "syndrome_weight",
]
