"""Minimal reverse-mode autodiff over float64 numpy arrays.

Provides exactly the operations the agents need: dense/conv/pool layers,
GRU cells, softmax, cross entropy, embedding lookups, and two optimizers.
Tensors record their parents and a backward closure; ``backward`` runs the
tape in reverse topological order. No broadcasting beyond what these ops
require, no GPU, no fusion.
"""

from __future__ import annotations

import struct

import numpy as np

LOG_EPS = 1e-12


class Tensor:
    """Node in the computation graph."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def backward(self):
        """Accumulate gradients of this (scalar) node into the whole tape."""
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Parameter(Tensor):
    """Trainable tensor with a persistent gradient buffer and a name."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str = "", trainable: bool = True):
        super().__init__(data)
        self.name = name
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad = t.grad + g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = bwd
    return out


def sub(a, b) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = bwd
    return out


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * c, (a,))
    out._backward = lambda g: _accum(a, g * c)
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data @ b.data, (a, b))

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    out._backward = bwd
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), (a,))
    out._backward = lambda g: _accum(a, g.reshape(a.data.shape))
    return out


def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis), (a,))

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    out._backward = bwd
    return out


def tmean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis), 1.0 / n)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0), (a,))
    out._backward = lambda g: _accum(a, g * (a.data > 0))
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(s, (a,))
    out._backward = lambda g: _accum(a, g * s * (1.0 - s))
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    out = Tensor(t, (a,))
    out._backward = lambda g: _accum(a, g * (1.0 - t * t))
    return out


def log(a) -> Tensor:
    """Natural log with values clamped at LOG_EPS before the log."""
    a = as_tensor(a)
    clamped = np.maximum(a.data, LOG_EPS)
    out = Tensor(np.log(clamped), (a,))
    out._backward = lambda g: _accum(a, g * (a.data > LOG_EPS) / clamped)
    return out


def softmax(a) -> Tensor:
    """Softmax along the last axis, with max-subtraction for stability."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p, (a,))

    def bwd(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        _accum(a, p * (g - dot))

    out._backward = bwd
    return out


def dense(x, weights, bias) -> Tensor:
    """Affine map ``x @ W + b`` for 2-D inputs (rows are samples)."""
    return add(matmul(x, weights), bias)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(B, Ho, Wo, k*k*Ci) view-based patch extraction, stride 1, valid."""
    b, h, w, ci = x.shape
    ho, wo = h - k + 1, w - k + 1
    s0, s1, s2, s3 = x.strides
    patches = np.lib.stride_tricks.as_strided(
        x, shape=(b, ho, wo, k, k, ci), strides=(s0, s1, s2, s1, s2, s3)
    )
    return patches.reshape(b, ho, wo, k * k * ci)


def conv2d(x, kernels) -> Tensor:
    """Valid, stride-1 cross-correlation.

    ``x`` is (B, H, W, Cin) or (H, W, Cin); kernels are (k, k, Cin, Cout).
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    k = kernels.data.shape[0]
    b, h, w, ci = xd.shape
    if kernels.data.shape[2] != ci:
        raise ValueError(
            f"kernel input channels {kernels.data.shape[2]} != input channels {ci}"
        )
    if k > h or k > w:
        raise ValueError(f"kernel size {k} exceeds input dims ({h}, {w})")
    co = kernels.data.shape[3]
    ho, wo = h - k + 1, w - k + 1
    cols = _im2col(xd, k)  # (B, Ho, Wo, k*k*Ci)
    wmat = kernels.data.reshape(k * k * ci, co)
    y = cols.reshape(-1, k * k * ci) @ wmat
    y = y.reshape(b, ho, wo, co)
    out = Tensor(y[0] if squeeze else y, (x, kernels))

    def bwd(g):
        gb = g[None] if squeeze else g
        gflat = gb.reshape(-1, co)
        _accum(kernels, (cols.reshape(-1, k * k * ci).T @ gflat).reshape(kernels.data.shape))
        gcols = (gflat @ wmat.T).reshape(b, ho, wo, k, k, ci)
        gx = np.zeros_like(xd)
        for di in range(k):
            for dj in range(k):
                gx[:, di : di + ho, dj : dj + wo, :] += gcols[:, :, :, di, dj, :]
        _accum(x, gx[0] if squeeze else gx)

    out._backward = bwd
    return out


def maxpool2x2(x) -> Tensor:
    """2x2 max pooling; odd trailing rows/cols are truncated.

    Gradient routes to the first occurrence of the max within each window.
    """
    x = as_tensor(x)
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    b, h, w, c = xd.shape
    ho, wo = h // 2, w // 2
    trimmed = xd[:, : 2 * ho, : 2 * wo, :]
    windows = trimmed.reshape(b, ho, 2, wo, 2, c).transpose(0, 1, 3, 2, 4, 5)
    flat = windows.reshape(b, ho, wo, 4, c)
    arg = flat.argmax(axis=3)  # first occurrence on ties
    y = np.take_along_axis(flat, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    out = Tensor(y[0] if squeeze else y, (x,))

    def bwd(g):
        gb = g[None] if squeeze else g
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, arg[:, :, :, None, :], gb[:, :, :, None, :], axis=3)
        gwin = gflat.reshape(b, ho, wo, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
        gx = np.zeros_like(xd)
        gx[:, : 2 * ho, : 2 * wo, :] = gwin.reshape(b, 2 * ho, 2 * wo, c)
        _accum(x, gx[0] if squeeze else gx)

    out._backward = bwd
    return out


def embedding_lookup(table, symbols) -> Tensor:
    """Rows of ``table`` at integer ``symbols``; gradient scatters back."""
    table = as_tensor(table)
    idx = np.asarray(symbols, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError("symbol index out of vocabulary range")
    out = Tensor(table.data[idx], (table,))

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        _accum(table, gt)

    out._backward = bwd
    return out


def gather_rows(a, idx) -> Tensor:
    """a[i, idx[i]] for each row i of a 2-D tensor."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    out = Tensor(a.data[rows, idx], (a,))

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (rows, idx), g)
        _accum(a, ga)

    out._backward = bwd
    return out


def batched_dot(a, h) -> Tensor:
    """scores[b, k] = a[b, k, :] . h[b, :] for (B, K, D) and (B, D)."""
    a, h = as_tensor(a), as_tensor(h)
    out = Tensor(np.einsum("bkd,bd->bk", a.data, h.data), (a, h))

    def bwd(g):
        _accum(a, g[:, :, None] * h.data[:, None, :])
        _accum(h, np.einsum("bk,bkd->bd", g, a.data))

    out._backward = bwd
    return out


def gru_step(x, h, params: dict) -> Tensor:
    """One GRU step: h' = (1 - z) * h + z * h~.

    ``params`` holds W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h; inputs are
    (B, d) and (B, n).
    """
    z = sigmoid(add(add(matmul(x, params["W_z"]), matmul(h, params["U_z"])), params["b_z"]))
    r = sigmoid(add(add(matmul(x, params["W_r"]), matmul(h, params["U_r"])), params["b_r"]))
    h_cand = tanh(
        add(add(matmul(x, params["W_h"]), matmul(mul(r, h), params["U_h"])), params["b_h"])
    )
    one_minus_z = add(scale(z, -1.0), Tensor(np.ones_like(z.data)))
    return add(mul(one_minus_z, h), mul(z, h_cand))


def cross_entropy(probabilities, target) -> Tensor:
    """-sum(target * log p), averaged over rows for 2-D inputs.

    Both arguments must already be distributions (rows sum to 1).
    """
    probabilities = as_tensor(probabilities)
    target_data = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if probabilities.data.shape != target_data.shape:
        raise ValueError(
            f"shape mismatch: {probabilities.data.shape} vs {target_data.shape}"
        )
    if np.any(np.abs(probabilities.data.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("probabilities do not sum to 1")
    if np.any(np.abs(target_data.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("target does not sum to 1")
    nll = scale(tsum(mul(Tensor(target_data), log(probabilities)), axis=-1), -1.0)
    if nll.data.ndim == 0:
        return nll
    return tmean(nll)


def entropy_of(probabilities) -> Tensor:
    """Shannon entropy in nats along the last axis (differentiable)."""
    probabilities = as_tensor(probabilities)
    return scale(tsum(mul(probabilities, log(probabilities)), axis=-1), -1.0)


def sample_categorical(probabilities: np.ndarray, rng: np.random.Generator):
    """Sample indices from rows of a probability array (or a single row)."""
    p = np.asarray(probabilities, dtype=np.float64)
    single = p.ndim == 1
    rows = p[None] if single else p
    if np.any(np.abs(rows.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("probabilities do not sum to 1")
    u = rng.random((rows.shape[0], 1))
    idx = (rows.cumsum(axis=-1) > u).argmax(axis=-1)
    return int(idx[0]) if single else idx


def argmax(probabilities: np.ndarray):
    """Argmax along the last axis; ties break to the lowest index."""
    p = np.asarray(probabilities)
    out = p.argmax(axis=-1)
    return int(out) if p.ndim == 1 else out


# ---------------------------------------------------------------------------
# Optimizers


def sgd_step(params: list[Parameter], lr: float) -> None:
    for p in params:
        if p.trainable:
            p.data = p.data - lr * p.grad


class AdamState:
    """Per-parameter first/second moments, keyed by parameter identity."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[int, np.ndarray] = {}
        self.v: dict[int, np.ndarray] = {}


def adam_step(params: list[Parameter], state: AdamState, lr: float) -> None:
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for p in params:
        if not p.trainable:
            continue
        key = id(p)
        if key not in state.m:
            state.m[key] = np.zeros_like(p.data)
            state.v[key] = np.zeros_like(p.data)
        state.m[key] = b1 * state.m[key] + (1 - b1) * p.grad
        state.v[key] = b2 * state.v[key] + (1 - b2) * p.grad ** 2
        m_hat = state.m[key] / (1 - b1 ** state.t)
        v_hat = state.v[key] / (1 - b2 ** state.t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def zero_grads(params: list[Parameter]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(fn, params: list[Parameter], step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` must rebuild the forward graph from the current parameter values
    and return a scalar Tensor.
    """
    zero_grads(params)
    loss = fn()
    loss.backward()
    analytic = [p.grad.copy() for p in params]
    max_rel = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(fn().data)
            flat[i] = orig - step
            down = float(fn().data)
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            # The absolute floor must sit above the noise of the central
            # difference itself (~eps*|loss|/step plus truncation), otherwise
            # entries with genuinely tiny gradients report pure roundoff as a
            # relative error.
            denom = max(abs(numeric), abs(gflat[i]), 1e-6)
            max_rel = max(max_rel, abs(numeric - gflat[i]) / denom)
    return max_rel


# ---------------------------------------------------------------------------
# Parameter checkpoints

MAGIC_WEIGHTS = b"EMRGW1"


def save_parameters(params: list[Parameter], path: str) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC_WEIGHTS)
        f.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            f.write(struct.pack("<I", len(name)))
            f.write(name)
            f.write(struct.pack("<I", p.data.ndim))
            for d in p.data.shape:
                f.write(struct.pack("<I", d))
            f.write(p.data.astype("<f8").tobytes())


def load_parameters(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:6] != MAGIC_WEIGHTS:
        raise ValueError("bad magic header, not an EMRGW1 checkpoint")
    (count,) = struct.unpack_from("<I", data, 6)
    off = 10
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(dims)
        off += 8 * size
        out[name] = arr.copy()
    if len(out) != count:
        raise ValueError("truncated checkpoint")
    return out


def assign_parameters(params: list[Parameter], values: dict[str, np.ndarray]) -> None:
    for p in params:
        if p.name not in values:
            raise KeyError(f"checkpoint missing parameter {p.name!r}")
        if values[p.name].shape != p.data.shape:
            raise ValueError(f"shape mismatch for {p.name!r}")
        p.data = values[p.name].copy()
