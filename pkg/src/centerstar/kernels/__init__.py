"""Kernel backend selection.

Importing this package picks the backend once: numba-compiled (default)
or the interpreted fallback when CENTERSTAR_NO_NUMBA is set or numba is
missing. Both backends run the identical kernel source.
"""

import numpy as np

from ._impl import (
    NEG,
    NUMBA_ENABLED,
    ac_match_kernel,
    align_chunk_kernel,
    align_query_kernel,
    chain_blocks_kernel,
    merge_hits_kernel,
    nw_align_kernel,
    sw_fill_kernel,
    trie_build_kernel,
)

BACKEND = "numba" if NUMBA_ENABLED else "python"


def warmup() -> None:
    """Force JIT compilation of every kernel on tiny inputs."""
    a = np.array([0, 1, 2, 3], dtype=np.uint8)
    sub = np.full((5, 5), -1, dtype=np.int32)
    np.fill_diagonal(sub, 1)
    sub[4, 4] = -1
    sw_fill_kernel(a, a, sub, 2, 1)
    nw_align_kernel(a, a, sub, 2, 1)
    children, fail, ts, to, _n = trie_build_kernel(a, 2, 4)
    cs, qs, nh, _tr = ac_match_kernel(children, fail, ts, to, a, 2, 4)
    bc, bq, bl, nb = merge_hits_kernel(cs, qs, nh, 2, 4, 4)
    chain_blocks_kernel(bc, bq, bl, nb, 2)
    align_query_kernel(a, a, children, fail, ts, to, 2, 1, sub, 2, 1, 1, 4)
    starts = np.array([0, 4], dtype=np.int64)
    align_chunk_kernel(a, a, starts, children, fail, ts, to, 2, 1, sub, 2, 1, 1, 4)


__all__ = [
    "BACKEND",
    "NEG",
    "NUMBA_ENABLED",
    "ac_match_kernel",
    "align_chunk_kernel",
    "align_query_kernel",
    "chain_blocks_kernel",
    "merge_hits_kernel",
    "nw_align_kernel",
    "sw_fill_kernel",
    "trie_build_kernel",
    "warmup",
]
