"""Differentiable building blocks with hand-written reverse-mode gradients.

Every block comes in two flavors: a plain forward (the public contract) and
a cached forward returning whatever the matching ``*_backward`` needs. The
neighbor-axis convolution keeps centroid rows independent: it slides only
along K with 'same' zero padding, so K is preserved.

The sparse-coding update is the literal soft-thresholded residual iteration
``E <- Soft(E - W*Q*E + W*S)`` with two learnable convolutional maps and no
rectifier inside the iteration; the rectifier lives only in the init/decode
embedding layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch

_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle non-finite assertions after every layer (slow; tests only)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def _check_finite(name: str, value: np.ndarray) -> None:
    if _DEBUG_CHECKS and not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite values after {name}")


@dataclass
class ConvParams:
    """Neighbor-axis convolution kernel (width, c_in, c_out) plus bias."""

    weight: np.ndarray
    bias: np.ndarray


def _im2col(x: np.ndarray, width: int) -> np.ndarray:
    """(T, K, C) -> (T, K, width*C) window stacks with 'same' zero padding."""
    k = x.shape[1]
    pad_left = (width - 1) // 2
    xp = np.pad(x, ((0, 0), (pad_left, width - 1 - pad_left), (0, 0)))
    return np.concatenate([xp[:, dw : dw + k, :] for dw in range(width)], axis=2)


def _conv_same(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    width, c_in, c_out = weight.shape
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (T, K, C) input, got shape {x.shape}")
    if x.shape[2] != c_in:
        raise ShapeMismatch(f"input has {x.shape[2]} channels, kernel expects {c_in}")
    t_n, k = x.shape[:2]
    if width > k:
        raise ShapeMismatch(f"kernel width {width} exceeds group size {k}")
    if width == 1:
        out = x.reshape(-1, c_in) @ weight[0]
    elif width == 3:
        # shifted whole-array GEMMs on the flattened (T*K) axis; rows that
        # would leak across a centroid boundary are zeroed at the source,
        # so the result equals the per-row padded convolution exactly
        x2 = np.ascontiguousarray(x).reshape(-1, c_in)
        a = x2 @ weight[0]
        out = x2 @ weight[1]
        c = x2 @ weight[2]
        a[k - 1 :: k] = 0.0  # last neighbor slot must not feed the next row
        c[0::k] = 0.0  # first neighbor slot must not feed the previous row
        out[1:] += a[:-1]
        out[:-1] += c[1:]
    else:
        cols = _im2col(x, width)
        out = cols.reshape(-1, width * c_in) @ weight.reshape(width * c_in, c_out)
    out = out.reshape(t_n, k, c_out)
    out += bias
    return out


def _conv_same_backward(
    x: np.ndarray, weight: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    width, c_in, c_out = weight.shape
    t_n, k = x.shape[:2]
    dbias = dout.sum(axis=(0, 1))
    dout2 = np.ascontiguousarray(dout).reshape(-1, c_out)
    if width == 1:
        dweight = (x.reshape(-1, c_in).T @ dout2)[None, :, :]
        dx = (dout2 @ weight[0].T).reshape(t_n, k, c_in)
        return dx, dweight, dbias
    if width == 3:
        x2 = np.ascontiguousarray(x).reshape(-1, c_in)
        d0 = dout2.copy()
        d0[0::k] = 0.0  # k=0 rows never consumed the left-shifted source
        d2 = dout2.copy()
        d2[k - 1 :: k] = 0.0  # k=K-1 rows never consumed the right-shifted one
        dweight = np.empty_like(weight)
        dweight[0] = x2[:-1].T @ d0[1:]
        dweight[1] = x2.T @ dout2
        dweight[2] = x2[1:].T @ d2[:-1]
        dx = dout2 @ weight[1].T
        dx[:-1] += d0[1:] @ weight[0].T
        dx[1:] += d2[:-1] @ weight[2].T
        return dx.reshape(t_n, k, c_in), dweight, dbias
    cols = _im2col(x, width)
    dweight = (cols.reshape(-1, width * c_in).T @ dout2).reshape(width, c_in, c_out)
    dcols = (dout2 @ weight.reshape(width * c_in, c_out).T).reshape(t_n, k, width * c_in)
    pad_left = (width - 1) // 2
    dxp = np.zeros((t_n, k + width - 1, c_in), dtype=x.dtype)
    for dw in range(width):
        dxp[:, dw : dw + k, :] += dcols[:, :, dw * c_in : (dw + 1) * c_in]
    dx = dxp[:, pad_left : pad_left + k, :]
    return dx, dweight, dbias


def sfe_forward(x: np.ndarray, params: ConvParams, rectify: bool = True) -> np.ndarray:
    """1-D convolution along the neighbor axis, optionally rectified."""
    out, _ = sfe_forward_cached(x, params, rectify)
    return out


def sfe_forward_cached(x, params: ConvParams, rectify: bool = True):
    pre = _conv_same(x, params.weight, params.bias)
    if rectify:
        out = np.maximum(pre, 0.0)
        cache = (x, pre)
    else:
        out = pre
        cache = (x, None)
    _check_finite("sfe", out)
    return out, cache


def sfe_backward(params: ConvParams, cache, dout):
    x, pre = cache
    if pre is not None:
        dout = dout * (pre > 0)
    return _conv_same_backward(x, params.weight, dout)


def soft_threshold(x: np.ndarray, lambda_soft) -> np.ndarray:
    """Elementwise sign(x) * max(|x| - lambda, 0); lambda broadcasts on the
    channel (last) axis and must be nonnegative."""
    lam = np.asarray(lambda_soft)
    if np.any(lam < 0):
        raise ShapeMismatch("soft-threshold level must be >= 0")
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def soft_threshold_cached(x, lambda_soft):
    lam = np.asarray(lambda_soft)
    if np.any(lam < 0):
        raise ShapeMismatch("soft-threshold level must be >= 0")
    sign = np.sign(x)
    mask = np.abs(x) > lam
    out = sign * np.maximum(np.abs(x) - lam, 0.0)
    return out, (sign, mask)


def soft_threshold_backward(cache, dout):
    sign, mask = cache
    dx = dout * mask
    active = dout * sign * mask
    # lambda is per-channel: reduce every axis but the last
    dlam = -active.reshape(-1, active.shape[-1]).sum(axis=0)
    return dx, dlam


def lcsc_block(e, s, params_w: ConvParams, params_q: ConvParams, lambda_soft):
    """One sparse-coding iteration: Soft(e - W*Q*e + W*s)."""
    out, _ = lcsc_block_cached(e, s, params_w, params_q, lambda_soft)
    return out


def lcsc_block_cached(e, s, params_w: ConvParams, params_q: ConvParams, lambda_soft):
    if e.shape[:2] != s.shape[:2]:
        raise ShapeMismatch(f"code {e.shape} and signal {s.shape} grids disagree")
    qe = _conv_same(e, params_q.weight, params_q.bias)
    wqe = _conv_same(qe, params_w.weight, params_w.bias)
    ws = _conv_same(s, params_w.weight, params_w.bias)
    pre = e - wqe + ws
    out, soft_cache = soft_threshold_cached(pre, lambda_soft)
    _check_finite("lcsc", out)
    return out, (e, s, qe, soft_cache)


def lcsc_block_backward(params_w: ConvParams, params_q: ConvParams, cache, dout):
    """Returns (de, ds, dw, dbw, dq, dbq, dlam); W's gradient gathers both of
    its uses (on Q*e and on s)."""
    e, s, qe, soft_cache = cache
    dpre, dlam = soft_threshold_backward(soft_cache, dout)
    de = dpre.copy()
    dqe, dw_a, dbw_a = _conv_same_backward(qe, params_w.weight, -dpre)
    de_q, dq, dbq = _conv_same_backward(e, params_q.weight, dqe)
    de += de_q
    ds, dw_b, dbw_b = _conv_same_backward(s, params_w.weight, dpre)
    return de, ds, dw_a + dw_b, dbw_a + dbw_b, dq, dbq, dlam


@dataclass
class LevelView:
    """Parameter slices of one abstraction level."""

    init: ConvParams
    w: ConvParams
    q: ConvParams
    soft: np.ndarray


def ssfe_forward(s, level: LevelView, iterations: int = 1) -> np.ndarray:
    """Init embedding followed by ``iterations`` sparse-coding updates."""
    out, _ = ssfe_forward_cached(s, level, iterations)
    return out


def ssfe_forward_cached(s, level: LevelView, iterations: int = 1):
    if iterations < 1:
        raise ShapeMismatch(f"iterations must be >= 1, got {iterations}")
    e, init_cache = sfe_forward_cached(s, level.init, rectify=True)
    lcsc_caches = []
    for _ in range(iterations):
        e, cache = lcsc_block_cached(e, s, level.w, level.q, level.soft)
        lcsc_caches.append(cache)
    return e, (init_cache, lcsc_caches)


def ssfe_backward(level: LevelView, cache, dout):
    """Returns (ds, grads) with grads keyed init/w/q/soft."""
    init_cache, lcsc_caches = cache
    de = dout
    ds = None
    dw = np.zeros_like(level.w.weight)
    dbw = np.zeros_like(level.w.bias)
    dq = np.zeros_like(level.q.weight)
    dbq = np.zeros_like(level.q.bias)
    dlam = np.zeros_like(level.soft)
    for c in reversed(lcsc_caches):
        de, ds_i, dw_i, dbw_i, dq_i, dbq_i, dlam_i = lcsc_block_backward(
            level.w, level.q, c, de
        )
        ds = ds_i if ds is None else ds + ds_i
        dw += dw_i
        dbw += dbw_i
        dq += dq_i
        dbq += dbq_i
        dlam += dlam_i
    ds_init, dwi, dbi = sfe_backward(level.init, init_cache, de)
    ds = ds_init if ds is None else ds + ds_init
    grads = {
        "init.weight": dwi,
        "init.bias": dbi,
        "w.weight": dw,
        "w.bias": dbw,
        "q.weight": dq,
        "q.bias": dbq,
        "soft": dlam,
    }
    return ds, grads


def sum_pool(grid: np.ndarray) -> np.ndarray:
    """Sum over the neighbor axis: (T, K, D) -> (T, D)."""
    if grid.ndim != 3:
        raise ShapeMismatch(f"expected (T, K, D), got {grid.shape}")
    return grid.sum(axis=1)


def sum_pool_backward(k: int, dout: np.ndarray) -> np.ndarray:
    return np.broadcast_to(dout[:, None, :], (dout.shape[0], k, dout.shape[1])).copy()


def _stable_bce(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # log(1 + exp(-|z|)) + max(z, 0) - z*y, elementwise
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0) - z * y


def class_balance_weights(is_real: np.ndarray, balanced: bool) -> np.ndarray:
    """Per-event weights proportional to inverse label frequency, scaled so
    they sum to the event count; all ones when a class is absent."""
    n = len(is_real)
    n_real = int(np.count_nonzero(is_real))
    n_noise = n - n_real
    if not balanced or n_real == 0 or n_noise == 0:
        return np.ones(n)
    return np.where(is_real, n / (2.0 * n_real), n / (2.0 * n_noise))


def loss_bce(logits: np.ndarray, is_real: np.ndarray, balanced: bool = True) -> float:
    """Weighted mean binary cross-entropy on raw logits (Real = positive)."""
    loss, _ = bce_with_logits(logits, is_real, balanced)
    return loss


def bce_with_logits(logits, is_real, balanced: bool = True):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(is_real, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeMismatch(f"logits {z.shape} vs labels {y.shape}")
    n = len(z)
    if n == 0:
        raise ShapeMismatch("empty batch")
    u = class_balance_weights(np.asarray(is_real, dtype=bool), balanced)
    per = _stable_bce(z, y)
    loss = float((u * per).sum() / n)
    # sigmoid without overflow on large negative logits
    ez = np.exp(-np.abs(z))
    sigma = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    dlogits = u * (sigma - y) / n
    return loss, dlogits
