"""Differentiable image-shaped ops: convolution, resampling, MS-SSIM.

conv2d uses the cross-correlation convention over [N, C, H, W] inputs and
[F, C, k, k] kernels. downsample2 is 2x2 mean pooling; upsample2 is
bilinear x2. Both resamplers are separable linear maps applied as small
dense matrices per axis, so their backward passes are exact transposes.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .engine import Tensor, _accumulate, _as_tensor, _result, div, mean_all, mul, sub

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _im2col(x_padded: np.ndarray, k: int, stride: int):
    win = sliding_window_view(x_padded, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    n, c, oh, ow = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * k * k)
    return cols, oh, ow


def _corr_raw(x: np.ndarray, kernel: np.ndarray, stride: int, padding: int):
    """Cross-correlation on plain arrays; returns (out, im2col columns)."""
    f, c, k, _ = kernel.shape
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols, oh, ow = _im2col(x, k, stride)
    out = cols @ kernel.reshape(f, c * k * k).T  # [N, OH*OW, F]
    return out.transpose(0, 2, 1).reshape(x.shape[0], f, oh, ow), cols


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation of [N, C, H, W] with [F, C, k, k].

    Output is [N, F, H', W'] with H' = (H + 2*padding - k) / stride + 1;
    that division must be exact. Odd k with padding = k // 2 preserves the
    spatial size at stride 1.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ValueError(
            f"conv2d: expected [N,C,H,W] and [F,C,k,k], got {x.data.shape} and {kernel.data.shape}"
        )
    n, c, h, w = x.data.shape
    f, ck, k, k2 = kernel.data.shape
    if k != k2:
        raise ValueError(f"conv2d: kernel must be square, got {k}x{k2}")
    if ck != c:
        raise ValueError(f"conv2d: kernel expects {ck} input channels, input has {c}")
    if stride < 1 or padding < 0 or padding > k - 1:
        raise ValueError(f"conv2d: invalid stride {stride} or padding {padding}")
    if (h + 2 * padding - k) % stride or (w + 2 * padding - k) % stride:
        raise ValueError(
            f"conv2d: size {h}x{w} with padding {padding}, kernel {k}, stride {stride} "
            "does not tile exactly"
        )

    out, cols = _corr_raw(x.data, kernel.data, stride, padding)
    oh, ow = out.shape[2:]

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n, oh * ow, f)
        if kernel.requires_grad:
            dk = np.matmul(g2.transpose(0, 2, 1), cols).sum(axis=0).reshape(f, c, k, k)
            _accumulate(kernel, dk)
        if x.requires_grad:
            # transposed convolution: dilate the upstream gradient to undo
            # the stride, then correlate with the flipped kernel
            if stride > 1:
                dilated = np.zeros((n, f, (oh - 1) * stride + 1, (ow - 1) * stride + 1))
                dilated[:, :, ::stride, ::stride] = g
            else:
                dilated = g
            flipped = kernel.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            dx, _ = _corr_raw(dilated, flipped, 1, k - 1 - padding)
            _accumulate(x, dx)

    return _result(out, (x, kernel), backward, "conv2d")


@lru_cache(maxsize=None)
def _pool_matrix(h: int) -> np.ndarray:
    m = np.zeros((h // 2, h))
    for i in range(h // 2):
        m[i, 2 * i] = 0.5
        m[i, 2 * i + 1] = 0.5
    return m


@lru_cache(maxsize=None)
def _bilinear_matrix(h: int) -> np.ndarray:
    """Rows map 2h output samples to h inputs; pixel centers at half-integers."""
    m = np.zeros((2 * h, h))
    for o in range(2 * h):
        p = (o + 0.5) / 2.0 - 0.5
        i = int(np.floor(p))
        t = p - i
        m[o, min(max(i, 0), h - 1)] += 1.0 - t
        m[o, min(max(i + 1, 0), h - 1)] += t
    return m


def _apply_rows(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Multiply axis 2 of [N, C, H, W] by m [O, H]."""
    n, c, h, w = x.shape
    return np.matmul(m, x.reshape(n * c, h, w)).reshape(n, c, m.shape[0], w)


def _separable_resize(x, mh: np.ndarray, mw: np.ndarray, name: str) -> Tensor:
    x = _as_tensor(x)
    out = np.matmul(_apply_rows(mh, x.data), mw.T)

    def backward(g):
        _accumulate(x, np.matmul(_apply_rows(mh.T, g), mw))

    return _result(out, (x,), backward, name)


def downsample2(x) -> Tensor:
    """2x2 mean pooling of [N, C, H, W]; H and W must be even."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ValueError(f"downsample2: expected [N,C,H,W], got {x.data.shape}")
    _, _, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"downsample2: dimensions must be even, got {h}x{w}")
    return _separable_resize(x, _pool_matrix(h), _pool_matrix(w), "downsample2")


def upsample2(x) -> Tensor:
    """Bilinear x2 upsampling of [N, C, H, W]; exact inverse of downsample2
    on constants."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ValueError(f"upsample2: expected [N,C,H,W], got {x.data.shape}")
    _, _, h, w = x.data.shape
    return _separable_resize(x, _bilinear_matrix(h), _bilinear_matrix(w), "upsample2")


@lru_cache(maxsize=None)
def _box_kernel(window: int) -> Tensor:
    return Tensor(np.full((1, 1, window, window), 1.0 / (window * window)))


def _ssim_scale(a: Tensor, b: Tensor, window: int) -> Tensor:
    """Mean SSIM over the valid region, with a uniform window."""
    box = _box_kernel(window)
    mu_a = conv2d(a, box)
    mu_b = conv2d(b, box)
    var_a = sub(conv2d(mul(a, a), box), mul(mu_a, mu_a))
    var_b = sub(conv2d(mul(b, b), box), mul(mu_b, mu_b))
    cov = sub(conv2d(mul(a, b), box), mul(mu_a, mu_b))
    num = mul(2.0 * mul(mu_a, mu_b) + SSIM_C1, 2.0 * cov + SSIM_C2)
    den = mul(
        mul(mu_a, mu_a) + mul(mu_b, mu_b) + SSIM_C1,
        var_a + var_b + SSIM_C2,
    )
    return mean_all(div(num, den))


def ms_ssim(a, b, scale_weights: tuple[float, ...] = (0.9, 0.1), window: int = 7) -> Tensor:
    """Multi-scale structural similarity between two [1, 1, H, W] images.

    Per-scale mean SSIM (uniform window, unit dynamic range constants)
    combined as a weighted arithmetic mean; each extra scale halves the
    resolution with 2x2 mean pooling. Differentiable; returns a scalar
    tensor in (0, 1] that equals 1 exactly when the inputs are identical.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"ms_ssim: shape mismatch {a.data.shape} vs {b.data.shape}")
    if a.data.ndim != 4 or a.data.shape[0] != 1 or a.data.shape[1] != 1:
        raise ValueError(f"ms_ssim: expected [1, 1, H, W], got {a.data.shape}")
    h, w = a.data.shape[2:]
    min_size = window * 2 ** (len(scale_weights) - 1)
    if h < min_size or w < min_size:
        raise ValueError(
            f"ms_ssim: image {h}x{w} too small for {len(scale_weights)} scales "
            f"with window {window} (needs >= {min_size})"
        )

    total = None
    for i, weight in enumerate(scale_weights):
        if i > 0:
            a, b = downsample2(a), downsample2(b)
        term = weight * _ssim_scale(a, b, window)
        total = term if total is None else total + term
    return total
