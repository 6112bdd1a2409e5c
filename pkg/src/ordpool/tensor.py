"""Dense tensor helpers.

Tensors are plain numpy arrays in channel-last row-major layout,
``[H, W, C]`` for one feature map stack and ``[N, H, W, C]`` for a batch.
Precision is carried by the array dtype (float32 or float64).
"""

from __future__ import annotations

from math import prod

import numpy as np

from .errors import InvalidShapeError, NonFiniteError, PartitionError

FLOAT_TYPES = (np.float32, np.float64)


def check_shape(shape) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if not dims or any(d < 1 for d in dims):
        raise InvalidShapeError(f"every extent must be >= 1, got {list(shape)}")
    return dims


def tensor_filled(shape, value: float, dtype=np.float64) -> np.ndarray:
    dims = check_shape(shape)
    if np.dtype(dtype).type not in FLOAT_TYPES:
        raise InvalidShapeError(f"unsupported precision {dtype}")
    return np.full(dims, value, dtype=dtype)


def flatten(t: np.ndarray) -> tuple[tuple[int, ...], np.ndarray]:
    return t.shape, np.ascontiguousarray(t).reshape(-1)


def unflatten(shape, data: np.ndarray) -> np.ndarray:
    dims = check_shape(shape)
    if data.size != prod(dims):
        raise InvalidShapeError(f"{data.size} values cannot fill shape {list(dims)}")
    return data.reshape(dims)


def require_finite(t: np.ndarray, what: str = "tensor") -> None:
    if not np.isfinite(t).all():
        raise NonFiniteError(f"{what} contains NaN or Inf")


def output_extent(size: int, window: int, stride: int) -> int:
    """Number of windows along one axis; raises unless they tile exactly."""
    if window < 1 or stride < 1:
        raise PartitionError(f"window and stride must be >= 1, got {window}, {stride}")
    span = size - window
    if span < 0 or span % stride:
        raise PartitionError(
            f"window {window} with stride {stride} does not tile extent {size}"
        )
    return span // stride + 1


def window_partition(t: np.ndarray, m: int, n: int, stride_h: int | None = None,
                     stride_w: int | None = None):
    """Slice ``t[H, W, C]`` into pooling regions.

    Returns ``(regions, origins)`` where ``regions`` has shape
    ``[I, m, n, C]`` in row-major window order and ``origins[i]`` is the
    ``(row, col)`` of region ``i``'s top-left element.
    """
    if t.ndim != 3:
        raise InvalidShapeError(f"expected [H, W, C], got shape {t.shape}")
    sh = m if stride_h is None else stride_h
    sw = n if stride_w is None else stride_w
    H, W, C = t.shape
    ho = output_extent(H, m, sh)
    wo = output_extent(W, n, sw)
    view = np.lib.stride_tricks.sliding_window_view(t, (m, n), axis=(0, 1))
    # view: [H-m+1, W-n+1, C, m, n]
    regions = view[::sh, ::sw].transpose(0, 1, 3, 4, 2).reshape(ho * wo, m, n, C)
    rows, cols = np.meshgrid(np.arange(ho) * sh, np.arange(wo) * sw, indexing="ij")
    origins = np.stack([rows.ravel(), cols.ravel()], axis=1)
    return regions.copy(), origins
