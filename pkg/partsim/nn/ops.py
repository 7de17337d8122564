"""
Differentiable operations.

Broadcasting is limited to three cases: identical shapes, a scalar second
operand, and a bias row whose length equals the last axis of the first
operand. Anything else is a ShapeError naming both shapes.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from partsim.errors import NumericGuardError, ShapeError
from partsim.nn.tensor import Tensor, as_tensor, emit

NORM_EPSILON = 1e-12


def _pair_mode(op, a, b):
    if a.shape == b.shape:
        return 'same'
    if b.size == 1 and b.ndim <= 1:
        return 'scalar'
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return 'bias'
    raise ShapeError(op, a.shape, b.shape)


def _reduce_to(grad, mode, b):
    if mode == 'same':
        return grad
    if mode == 'scalar':
        return np.sum(grad).reshape(b.shape)
    return grad.reshape(-1, b.shape[0]).sum(axis=0)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    mode = _pair_mode('add', a, b)
    other = b.data.reshape(()) if mode == 'scalar' else b.data
    return emit('add', a.data + other, (a, b), lambda g: (g, _reduce_to(g, mode, b)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    mode = _pair_mode('sub', a, b)
    other = b.data.reshape(()) if mode == 'scalar' else b.data
    return emit('sub', a.data - other, (a, b), lambda g: (g, -_reduce_to(g, mode, b)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    mode = _pair_mode('mul', a, b)
    other = b.data.reshape(()) if mode == 'scalar' else b.data

    def backward(g):
        return g * other, _reduce_to(g * a.data, mode, b)

    return emit('mul', a.data * other, (a, b), backward)


def neg(a):
    return emit('neg', -a.data, (a,), lambda g: (-g,))


def scale(a, factor: float):
    """Multiply by a constant (no gradient to the constant)."""
    factor = float(factor)
    return emit('scale', a.data * a.data.dtype.type(factor), (a,), lambda g: (g * factor,))


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError('matmul', a.shape, b.shape)
    return emit('matmul', a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def relu(a):
    positive = a.data > 0
    return emit('relu', np.where(positive, a.data, 0).astype(a.dtype), (a,), lambda g: (g * positive,))


def sigmoid(a):
    out = (0.5 * (1.0 + np.tanh(0.5 * a.data))).astype(a.dtype)
    return emit('sigmoid', out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a):
    out = np.exp(a.data)
    return emit('exp', out, (a,), lambda g: (g * out,))


def log(a):
    if np.any(a.data <= 0):
        raise NumericGuardError(f'log of non-positive values (min={a.data.min()!r})')
    return emit('log', np.log(a.data), (a,), lambda g: (g / a.data,))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis):
            raise ShapeError('concat', tensors[0].shape, t.shape)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return emit('concat', out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def sum(a, axis=None, keepdims=False):
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return emit('sum', out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError('reshape', a.shape, shape)
    return emit('reshape', out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    out = np.transpose(a.data, axes)
    inverse = None if axes is None else np.argsort(axes)
    return emit('transpose', out, (a,), lambda g: (np.transpose(g, inverse),))


def take(a, indices):
    """Rows of `a` selected by an integer index array (repeats allowed)."""
    indices = np.asarray(indices, dtype=np.int64)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, indices, g)
        return (grad,)

    return emit('take', a.data[indices], (a,), backward)


def segment_sum(a, segments, count):
    """out[s] = sum of rows i with segments[i] == s, accumulated in row order."""
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != (a.shape[0],):
        raise ShapeError('segment_sum', a.shape, segments.shape)
    out = np.zeros((count,) + a.shape[1:], dtype=a.dtype)
    np.add.at(out, segments, a.data)
    return emit('segment_sum', out, (a,), lambda g: (g[segments],))


def l2_norm(a, axis=-1):
    norm = np.sqrt(np.sum(a.data * a.data, axis=axis))
    if np.any(norm < NORM_EPSILON):
        raise NumericGuardError('l2 norm of a zero vector')
    return emit('l2_norm', norm, (a,), lambda g: (np.expand_dims(g / norm, axis) * a.data,))


def normalize_rows(a):
    """Each row divided by its l2 norm; zero rows raise NumericGuardError."""
    norm = np.sqrt(np.sum(a.data * a.data, axis=-1, keepdims=True))
    if np.any(norm < NORM_EPSILON):
        raise NumericGuardError('cannot normalize a zero-norm row')
    out = a.data / norm

    def backward(g):
        return ((g - out * np.sum(g * out, axis=-1, keepdims=True)) / norm,)

    return emit('normalize_rows', out, (a,), backward)


def cosine_similarity(a, b):
    """Cosine similarity of two vectors (scalar) or of all row pairs (matrix)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-1] or a.ndim > 2 or b.ndim > 2:
        raise ShapeError('cosine_similarity', a.shape, b.shape)
    if a.ndim == 1 and b.ndim == 1:
        sim = matmul(normalize_rows(reshape(a, (1, -1))), transpose(normalize_rows(reshape(b, (1, -1)))))
        return reshape(sim, ())
    return matmul(normalize_rows(a), transpose(normalize_rows(b)))


def _check_kernel(op, x, w, spatial):
    if x.ndim != spatial + 2 or w.ndim != spatial + 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(op, x.shape, w.shape)
    if any(k % 2 == 0 for k in w.shape[2:]):
        raise ShapeError(op, x.shape, w.shape)


def conv2d(x, w, b=None):
    """Stride 1, zero 'same' padding; x (N, C, H, W), w (O, C, kh, kw), odd kernels."""
    _check_kernel('conv2d', x, w, 2)
    n, c, h, wd = x.shape
    kh, kw = w.shape[2:]
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    out = np.tensordot(windows, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    inputs = (x, w)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError('conv2d', w.shape, b.shape)
        out = out + b.data[None, :, None, None]
        inputs = (x, w, b)

    def backward(g):
        dw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        dpad = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                dpad[:, :, i:i + h, j:j + wd] += np.tensordot(g, w.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
        grads = [dpad[:, :, ph:ph + h, pw:pw + wd], dw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return emit('conv2d', np.ascontiguousarray(out), inputs, backward)


def conv1d(x, w, b=None):
    """Stride 1, zero 'same' padding; x (N, C, L), w (O, C, k), odd kernels."""
    _check_kernel('conv1d', x, w, 1)
    length = x.shape[2]
    k = w.shape[2]
    p = k // 2
    padded = np.pad(x.data, ((0, 0), (0, 0), (p, p)))
    windows = sliding_window_view(padded, k, axis=2)
    out = np.tensordot(windows, w.data, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
    inputs = (x, w)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError('conv1d', w.shape, b.shape)
        out = out + b.data[None, :, None]
        inputs = (x, w, b)

    def backward(g):
        dw = np.tensordot(g, windows, axes=([0, 2], [0, 2]))
        dpad = np.zeros_like(padded)
        for i in range(k):
            dpad[:, :, i:i + length] += np.tensordot(g, w.data[:, :, i], axes=([1], [0])).transpose(0, 2, 1)
        grads = [dpad[:, :, p:p + length], dw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    return emit('conv1d', np.ascontiguousarray(out), inputs, backward)


def _bins(size, out):
    return [(math.floor(i * size / out), math.ceil((i + 1) * size / out)) for i in range(out)]


def adaptive_avg_pool2d(x, output_size):
    """Average over adaptive bins: bin i spans [floor(i*H/o), ceil((i+1)*H/o))."""
    oh, ow = (output_size, output_size) if isinstance(output_size, int) else output_size
    rows, cols = _bins(x.shape[2], oh), _bins(x.shape[3], ow)
    out = np.empty(x.shape[:2] + (oh, ow), dtype=x.dtype)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[:, :, i, j] = x.data[:, :, r0:r1, c0:c1].mean(axis=(2, 3))

    def backward(g):
        grad = np.zeros_like(x.data)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                grad[:, :, r0:r1, c0:c1] += g[:, :, i:i + 1, j:j + 1] / ((r1 - r0) * (c1 - c0))
        return (grad,)

    return emit('adaptive_avg_pool2d', out, (x,), backward)


def adaptive_avg_pool1d(x, output_size):
    bins = _bins(x.shape[2], output_size)
    out = np.empty(x.shape[:2] + (output_size,), dtype=x.dtype)
    for i, (s0, s1) in enumerate(bins):
        out[:, :, i] = x.data[:, :, s0:s1].mean(axis=2)

    def backward(g):
        grad = np.zeros_like(x.data)
        for i, (s0, s1) in enumerate(bins):
            grad[:, :, s0:s1] += g[:, :, i:i + 1] / (s1 - s0)
        return (grad,)

    return emit('adaptive_avg_pool1d', out, (x,), backward)


def dropout(a, rate, rng):
    """Inverted dropout; identity when rate is 0 or no rng is given (inference)."""
    if rate <= 0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / a.dtype.type(1.0 - rate)
    return mul(a, Tensor(keep, dtype=a.dtype))
