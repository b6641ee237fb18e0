"""Base-graph construction for the rate-2/3 LDPC code.

Geometry follows the TS 38.212 BG2 scheme: 42 check rows by 52 variable
columns, 10 systematic columns (k_b = 10), a 4-column double-diagonal parity
core (one anchor circulant with shift 1, the rest identity blocks), and 38
raptor-like extension rows that each add one degree-1 parity column.  The
first two systematic columns are high-degree: they correspond to the 2Z
punctured bits and need the extra check support to be recoverable.

The circulant shift values are NOT the published 38.212 Table 5.3.2-3
entries (no authoritative copy was available to this build); they are a
deterministic in-repo assignment, post-processed so that no pair of base
rows lifts to a 4-cycle at Z = 72, which keeps the lifted girth >= 6.  All
rate-matching arithmetic (shortening, puncturing, circular buffer) and the
encoder/decoder structure are unaffected by the particular shift values.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError

N_BASE_ROWS = 42
N_BASE_COLS = 52
N_INFO_COLS = 10
N_CORE_ROWS = 4
LIFT_Z = 72

# core rows: (column, shift) pairs.  Parity columns 10..13 form the
# double-diagonal; column 10 appears in rows {0,1,3} with shifts {1,0,0} so
# the block parity core B is invertible (summing the four block rows leaves
# a single shift-1 circulant acting on the first parity column).
_CORE_ROWS = [
    [(0, 57), (1, 13), (2, 44), (3, 29), (6, 8), (9, 66), (10, 1), (11, 0)],
    [(0, 5), (2, 70), (4, 23), (5, 61), (7, 38), (8, 16), (10, 0), (11, 0), (12, 0)],
    [(1, 47), (3, 9), (4, 58), (6, 31), (8, 3), (9, 22), (12, 0), (13, 0)],
    [(0, 40), (1, 62), (4, 11), (5, 27), (7, 50), (8, 35), (10, 0), (13, 0)],
]


def _extension_rows() -> list:
    """38 extension rows; row r adds identity parity column 14+(r-4).

    Each row connects its parity bit to one of the punctured columns {0,1}
    plus two or three further columns cycled deterministically over the
    systematic and core-parity range.  Shifts come from a small LCG.
    """
    state = 19

    def next_shift():
        nonlocal state
        state = (state * 41 + 17) % LIFT_Z
        return state

    rows = []
    for r in range(N_CORE_ROWS, N_BASE_ROWS):
        cols = [0 if r % 2 == 0 else 1]
        for stride, mod in ((3 * r + 1, 8), (5 * r + 3, 12)):
            c = 2 + (stride % mod)
            while c in cols:
                c = 2 + ((c - 1) % mod)
            cols.append(c)
        if r < 8:  # the rows that stay live after rate matching get an extra edge
            c = 2 + ((7 * r + 5) % 8)
            while c in cols:
                c = 2 + ((c - 1) % 8)
            cols.append(c)
        entries = [(c, next_shift()) for c in sorted(cols)]
        entries.append((14 + r - N_CORE_ROWS, 0))
        rows.append(entries)
    return rows


def _break_lifted_4cycles(rows: list, z: int) -> list:
    """Nudge shifts until no two rows sharing two columns lift to a 4-cycle.

    Rows i and j sharing columns a and b lift to a length-4 cycle iff
    (s_ia - s_ib) == (s_ja - s_jb) mod z.  Structural shifts (parity core in
    rows 0..3 and the identity extension columns) are never touched.
    """
    rows = [list(r) for r in rows]

    def frozen(r, c):
        return (r < N_CORE_ROWS and c >= N_INFO_COLS) or c >= N_INFO_COLS + N_CORE_ROWS

    for _ in range(64):
        dirty = False
        for i in range(len(rows)):
            di = dict(rows[i])
            for j in range(i + 1, len(rows)):
                dj = dict(rows[j])
                shared = sorted(set(di) & set(dj))
                for a_i in range(len(shared)):
                    for b_i in range(a_i + 1, len(shared)):
                        a, b = shared[a_i], shared[b_i]
                        if (di[a] - di[b]) % z != (dj[a] - dj[b]) % z:
                            continue
                        for rr, cc in ((j, a), (j, b), (i, a), (i, b)):
                            if not frozen(rr, cc):
                                d = dict(rows[rr])
                                d[cc] = (d[cc] + 1) % z
                                rows[rr] = sorted(d.items())
                                dirty = True
                                break
                        else:
                            raise ContractError("cannot break 4-cycle without touching core")
                        di = dict(rows[i])
                        dj = dict(rows[j])
        if not dirty:
            return [tuple(sorted(r)) for r in rows]
    raise ContractError("4-cycle fix-up did not converge")


def build_base_graph() -> list:
    """Return the 42 base rows as tuples of (column, shift) pairs."""
    rows = [sorted(r) for r in _CORE_ROWS] + _extension_rows()
    rows = _break_lifted_4cycles(rows, LIFT_Z)
    _validate(rows)
    return rows


def _validate(rows: list) -> None:
    if len(rows) != N_BASE_ROWS:
        raise ContractError("base graph must have 42 rows")
    col_deg = np.zeros(N_BASE_COLS, dtype=int)
    for r, entries in enumerate(rows):
        cols = [c for c, _ in entries]
        if len(cols) != len(set(cols)):
            raise ContractError(f"row {r} repeats a column")
        for c, s in entries:
            if not (0 <= c < N_BASE_COLS and 0 <= s < LIFT_Z):
                raise ContractError(f"row {r}: entry ({c},{s}) out of range")
            col_deg[c] += 1
        if r >= N_CORE_ROWS:
            ident = [c for c, s in entries if c >= N_INFO_COLS + N_CORE_ROWS]
            if ident != [14 + r - N_CORE_ROWS]:
                raise ContractError(f"extension row {r} lacks its identity column")
    if not np.all(col_deg[:N_INFO_COLS] >= 3):
        raise ContractError("every systematic column needs degree >= 3")
    if not np.all(col_deg[N_INFO_COLS + N_CORE_ROWS:] == 1):
        raise ContractError("extension parity columns must have degree exactly 1")
