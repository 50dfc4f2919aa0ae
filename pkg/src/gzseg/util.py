"""Small shared helpers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def map_chunked(fn, n_items: int, workers: int = 1, chunk_size: int = 256) -> list:
    """Apply ``fn(start, stop)`` over contiguous index ranges and concatenate.

    Each chunk must be computed independently of the others, so the result
    is identical for any worker count; chunks are re-assembled in order.
    """
    if n_items == 0:
        return []
    bounds = [(s, min(s + chunk_size, n_items)) for s in range(0, n_items, chunk_size)]
    if workers <= 1 or len(bounds) == 1:
        pieces = [fn(s, e) for s, e in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pieces = list(pool.map(lambda b: fn(*b), bounds))
    out = []
    for piece in pieces:
        out.extend(piece)
    return out
