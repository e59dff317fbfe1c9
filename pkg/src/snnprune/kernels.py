"""Dense and 2-D convolution kernels with hand-written backward passes.

Arrays are plain ``numpy.ndarray`` in NCHW layout. Convolutions go through an
im2col view so that both directions reduce to a single matrix product.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_output_size(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - kernel) // stride + 1


def im2col(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Unfold ``x`` (N, C, H, W) into rows of shape (N*Ho*Wo, C*k*k)."""
    n, c, h, w = x.shape
    ho = conv_output_size(h, kernel, stride, padding)
    wo = conv_output_size(w, kernel, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    win = win[:, :, : stride * ho : stride, : stride * wo : stride]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kernel * kernel)


def conv2d(x: np.ndarray, weight: np.ndarray, stride: int = 1, padding: int = 0):
    """Return ``(out, cols)``; ``cols`` is kept for the backward pass."""
    n, _, h, w = x.shape
    c_out, _, k, _ = weight.shape
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    cols = im2col(x, k, stride, padding)
    out = cols @ weight.reshape(c_out, -1).T
    return out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2), cols


def conv2d_backward(
    grad_out: np.ndarray,
    cols: np.ndarray,
    x_shape: tuple,
    weight: np.ndarray,
    stride: int = 1,
    padding: int = 0,
    need_input_grad: bool = True,
):
    """Gradients of ``conv2d`` w.r.t. its input and weight.

    Returns ``(grad_x, grad_w)``; ``grad_x`` is None when not requested.
    """
    n, c, h, w = x_shape
    c_out, _, k, _ = weight.shape
    _, _, ho, wo = grad_out.shape
    g2 = grad_out.transpose(0, 2, 3, 1).reshape(-1, c_out)
    grad_w = (g2.T @ cols).reshape(weight.shape)
    if not need_input_grad:
        return None, grad_w

    dcols = (g2 @ weight.reshape(c_out, -1)).reshape(n, ho, wo, c, k, k)
    dx = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=grad_out.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    if padding:
        dx = dx[:, :, padding:-padding, padding:-padding]
    return dx, grad_w


def dense(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """``x`` (N, c_in) times ``weight`` (c_out, c_in) transposed."""
    return x @ weight.T


def dense_backward(grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray, need_input_grad=True):
    grad_w = grad_out.T @ x
    grad_x = grad_out @ weight if need_input_grad else None
    return grad_x, grad_w
