"""Pure numpy versions of the compiled kernels.

Summation order per output element depends only on ``K``, never on how rows are
split between workers, so results are reproducible for any worker count.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# bytes of temporary product per row chunk
_CHUNK_BYTES = 32 * 2**20


def _row_chunks(n, per_row_bytes):
    step = max(1, _CHUNK_BYTES // max(per_row_bytes, 1))
    return [(s, min(s + step, n)) for s in range(0, n, step)]


def contract(G, E, workers=1):
    G = np.ascontiguousarray(G, dtype=np.float64)
    E = np.ascontiguousarray(E, dtype=np.float64)
    if G.shape[1] != E.shape[1]:
        raise ValueError("inner dimensions differ")
    nx, ny = G.shape[0], E.shape[0]
    out = np.empty((nx, ny))

    def work(span):
        s, t = span
        out[s:t] = (G[s:t, None, :] * E[None, :, :]).sum(axis=-1)

    spans = _row_chunks(nx, 8 * ny * G.shape[1])
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, spans))
    else:
        for span in spans:
            work(span)
    return out


def softmax_rows(Z, workers=1):
    Z = np.asarray(Z, dtype=np.float64)
    with np.errstate(under="ignore"):  # far-off gates flush to zero by design
        e = np.exp(Z - Z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)
