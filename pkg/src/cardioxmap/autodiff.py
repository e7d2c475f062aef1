"""Reverse-mode automatic differentiation over dense float64 tensors.

Implements exactly the layer set the 1D residual classifier and its
gradient-based attributors need: strided 1D convolution with optional
replication padding, channelwise batch normalization with running
statistics, global average pooling, dense projection, seeded dropout and
softmax cross-entropy. Graphs are built define-by-run: each operation
records its parent tensors and a backward closure on the output node, so
the acyclic graph is implicit in the parent links.

Everything is float64. Any operation that produces a non-finite value
raises immediately instead of letting NaNs propagate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteValue, NotScalar, ShapeMismatch

Array = np.ndarray


def _as_f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A node in the computation graph.

    `data` is a row-major float64 array (0-d for scalars). Leaves created
    with `requires_grad=True` -- trainable parameters, or inputs under
    attribution -- receive gradients in `.grad` after `backward`.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward_fn=None):
        self.data = _as_f64(data)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteValue("tensor holds NaN or infinity")
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def _needs_grad(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _node(data: Array, parents: tuple, backward_fn) -> Tensor:
    """Wrap an op result; drop graph edges when no parent tracks gradients."""
    if any(p._needs_grad() for p in parents):
        return Tensor(data, _parents=parents, _backward_fn=backward_fn)
    return Tensor(data)


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"add: {a.data.shape} vs {b.data.shape}")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"mul: {a.data.shape} vs {b.data.shape}")
    return _node(a.data * b.data, (a, b),
                 lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the time axis: [C, T] -> [C]."""
    if x.data.ndim != 2:
        raise ShapeMismatch(f"global_avg_pool expects [C, T], got {x.data.shape}")
    t = x.data.shape[1]
    return _node(x.data.mean(axis=1), (x,),
                 lambda g: (np.repeat(g[:, None], t, axis=1) / t,))


def dense(w: Tensor, b: Tensor, x: Tensor) -> Tensor:
    """Affine projection `w @ x + b` for a vector input."""
    if w.data.ndim != 2 or x.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeMismatch("dense expects w [out, in], b [out], x [in]")
    if w.data.shape[1] != x.data.shape[0] or w.data.shape[0] != b.data.shape[0]:
        raise ShapeMismatch(
            f"dense: w {w.data.shape}, b {b.data.shape}, x {x.data.shape}")

    def backward(g):
        return (np.outer(g, x.data), g, w.data.T @ g)

    return _node(w.data @ x.data + b.data, (w, b, x), backward)


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; exact identity when `train` is false or rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ShapeMismatch(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    keep = rng.random(x.data.shape) >= rate
    factor = keep / (1.0 - rate)
    return _node(x.data * factor, (x,), lambda g: (g * factor,))


def pick(x: Tensor, index: int) -> Tensor:
    """Select a single scalar entry from a vector."""
    if x.data.ndim != 1:
        raise ShapeMismatch(f"pick expects a vector, got {x.data.shape}")

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return _node(np.asarray(x.data[index]), (x,), backward)


def softmax(logits: Tensor) -> Tensor:
    if logits.data.ndim != 1:
        raise ShapeMismatch(f"softmax expects a vector, got {logits.data.shape}")
    z = logits.data - logits.data.max()
    e = np.exp(z)
    s = e / e.sum()

    def backward(g):
        return (s * (g - np.dot(g, s)),)

    return _node(s, (logits,), backward)


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Scalar cross-entropy of a single logit vector against an int label."""
    if logits.data.ndim != 1:
        raise ShapeMismatch(f"logits must be a vector, got {logits.data.shape}")
    if not 0 <= label < logits.data.shape[0]:
        raise ShapeMismatch(f"label {label} out of range for {logits.data.shape}")
    z = logits.data - logits.data.max()
    log_norm = np.log(np.exp(z).sum())
    loss = log_norm - z[label]
    probs = np.exp(z - log_norm)

    def backward(g):
        gl = probs.copy()
        gl[label] -= 1.0
        return (gl * g,)

    return _node(np.asarray(loss), (logits,), backward)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Strided cross-correlation of [C_in, T] with kernels [C_out, C_in, K].

    `padding` counts replicated edge samples added to each side (0 = none).
    Output length is floor((T + 2*padding - K) / stride) + 1. No kernel
    flip: this is the mainstream deep-learning convention.
    """
    if stride < 1:
        raise ShapeMismatch(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeMismatch(f"padding must be >= 0, got {padding}")
    if x.data.ndim != 2 or kernels.data.ndim != 3:
        raise ShapeMismatch(
            f"conv1d expects x [C_in, T] and kernels [C_out, C_in, K], "
            f"got {x.data.shape} and {kernels.data.shape}")
    c_in, t = x.data.shape
    c_out, c_in_k, k = kernels.data.shape
    if c_in_k != c_in:
        raise ShapeMismatch(f"conv1d: input has {c_in} channels, kernels expect {c_in_k}")
    t_pad = t + 2 * padding
    if k > t_pad:
        raise ShapeMismatch(f"kernel length {k} exceeds padded length {t_pad}")
    t_out = (t_pad - k) // stride + 1

    xp = np.pad(x.data, ((0, 0), (padding, padding)), mode="edge") if padding else x.data
    # windows[c, t_out, k]
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)[:, ::stride, :]
    out = np.tensordot(kernels.data, windows, axes=([1, 2], [0, 2]))

    def backward(g):
        gk = np.tensordot(g, windows, axes=([1], [1]))
        gxp = np.zeros((c_in, t_pad))
        for kk in range(k):
            gxp[:, kk:kk + stride * t_out:stride] += kernels.data[:, :, kk].T @ g
        if padding:
            gx = gxp[:, padding:t_pad - padding].copy()
            gx[:, 0] += gxp[:, :padding].sum(axis=1)
            gx[:, -1] += gxp[:, t_pad - padding:].sum(axis=1)
        else:
            gx = gxp
        return (gx, gk)

    return _node(out, (x, kernels), backward)


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

@dataclass
class RunningStats:
    """Per-channel running mean/variance, updated only in training mode."""

    mean: Array
    var: Array

    @classmethod
    def initial(cls, channels: int) -> "RunningStats":
        return cls(mean=np.zeros(channels), var=np.ones(channels))


BN_EPS = 1e-6


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, stats: RunningStats,
               train: bool, momentum: float = 0.1, eps: float = BN_EPS) -> Tensor:
    """Channelwise normalization of [C, T].

    Training mode normalizes with per-channel statistics over the time
    axis of the sample at hand and folds them into `stats`; evaluation
    mode uses the frozen running statistics so attribution sees a fixed,
    differentiable function.
    """
    if x.data.ndim != 2:
        raise ShapeMismatch(f"batch_norm expects [C, T], got {x.data.shape}")
    c, t = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeMismatch(f"batch_norm: gamma/beta must be [{c}]")

    if train:
        mu = x.data.mean(axis=1)
        var = x.data.var(axis=1)
        stats.mean = (1.0 - momentum) * stats.mean + momentum * mu
        stats.var = (1.0 - momentum) * stats.var + momentum * var
    else:
        mu, var = stats.mean, stats.var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[:, None]) * inv_std[:, None]
    out = gamma.data[:, None] * xhat + beta.data[:, None]

    if train:
        def backward(g):
            dxhat = g * gamma.data[:, None]
            dx = inv_std[:, None] * (
                dxhat
                - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
            return (dx, (g * xhat).sum(axis=1), g.sum(axis=1))
    else:
        def backward(g):
            dx = g * (gamma.data * inv_std)[:, None]
            return (dx, (g * xhat).sum(axis=1), g.sum(axis=1))

    return _node(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# batched layer variants
#
# Training normalizes with statistics shared across the minibatch, so the
# running aggregates frozen at evaluation time describe the same function
# the optimizer saw. These ops take a leading batch axis; the unbatched
# single-record contracts above stay untouched for inference/attribution.
# ---------------------------------------------------------------------------

def conv1d_batched(x: Tensor, kernels: Tensor, stride: int = 1,
                   padding: int = 0) -> Tensor:
    """conv1d over [N, C_in, T] -> [N, C_out, T_out]."""
    if x.data.ndim != 3 or kernels.data.ndim != 3:
        raise ShapeMismatch(
            f"conv1d_batched expects x [N, C_in, T], kernels [C_out, C_in, K], "
            f"got {x.data.shape} and {kernels.data.shape}")
    n, c_in, t = x.data.shape
    c_out, c_in_k, k = kernels.data.shape
    if c_in_k != c_in:
        raise ShapeMismatch(f"input has {c_in} channels, kernels expect {c_in_k}")
    t_pad = t + 2 * padding
    if k > t_pad or stride < 1 or padding < 0:
        raise ShapeMismatch(f"invalid kernel/stride/padding for length {t}")
    t_out = (t_pad - k) // stride + 1

    xp = (np.pad(x.data, ((0, 0), (0, 0), (padding, padding)), mode="edge")
          if padding else x.data)
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    # [N, C_in, T_out, K] x [C_out, C_in, K] -> [N, T_out, C_out]
    out = np.tensordot(windows, kernels.data, axes=([1, 3], [1, 2]))
    out = np.ascontiguousarray(out.transpose(0, 2, 1))

    def backward(g):
        gk = np.tensordot(g, windows, axes=([0, 2], [0, 2]))
        gxp = np.zeros((n, c_in, t_pad))
        for kk in range(k):
            contrib = np.tensordot(g, kernels.data[:, :, kk], axes=([1], [0]))
            gxp[:, :, kk:kk + stride * t_out:stride] += contrib.transpose(0, 2, 1)
        if padding:
            gx = gxp[:, :, padding:t_pad - padding].copy()
            gx[:, :, 0] += gxp[:, :, :padding].sum(axis=2)
            gx[:, :, -1] += gxp[:, :, t_pad - padding:].sum(axis=2)
        else:
            gx = gxp
        return (gx, gk)

    return _node(out, (x, kernels), backward)


def batch_norm_batched(x: Tensor, gamma: Tensor, beta: Tensor, stats: RunningStats,
                       train: bool, momentum: float = 0.1,
                       eps: float = BN_EPS) -> Tensor:
    """Channelwise normalization of [N, C, T] with stats over (N, T)."""
    if x.data.ndim != 3:
        raise ShapeMismatch(f"batch_norm_batched expects [N, C, T], got {x.data.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeMismatch(f"batch_norm_batched: gamma/beta must be [{c}]")

    if train:
        mu = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        stats.mean = (1.0 - momentum) * stats.mean + momentum * mu
        stats.var = (1.0 - momentum) * stats.var + momentum * var
    else:
        mu, var = stats.mean, stats.var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None]) * inv_std[None, :, None]
    out = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    if train:
        def backward(g):
            dxhat = g * gamma.data[None, :, None]
            dx = inv_std[None, :, None] * (
                dxhat
                - dxhat.mean(axis=(0, 2), keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=(0, 2), keepdims=True))
            return (dx, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2)))
    else:
        def backward(g):
            dx = g * (gamma.data * inv_std)[None, :, None]
            return (dx, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2)))

    return _node(out, (x, gamma, beta), backward)


def global_avg_pool_batched(x: Tensor) -> Tensor:
    """Mean over the time axis: [N, C, T] -> [N, C]."""
    if x.data.ndim != 3:
        raise ShapeMismatch(f"global_avg_pool_batched expects [N, C, T], got {x.data.shape}")
    t = x.data.shape[2]
    return _node(x.data.mean(axis=2), (x,),
                 lambda g: (np.repeat(g[:, :, None], t, axis=2) / t,))


def dense_batched(w: Tensor, b: Tensor, x: Tensor) -> Tensor:
    """Affine rows: [N, in] @ w.T + b -> [N, out]."""
    if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeMismatch("dense_batched expects w [out, in], b [out], x [N, in]")
    if w.data.shape[1] != x.data.shape[1] or w.data.shape[0] != b.data.shape[0]:
        raise ShapeMismatch(
            f"dense_batched: w {w.data.shape}, b {b.data.shape}, x {x.data.shape}")

    def backward(g):
        return (g.T @ x.data, g.sum(axis=0), g @ w.data)

    return _node(x.data @ w.data.T + b.data, (w, b, x), backward)


def softmax_cross_entropy_mean(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of logit rows [N, K] against int labels [N]."""
    if logits.data.ndim != 2:
        raise ShapeMismatch(f"logits must be [N, K], got {logits.data.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.data.shape[0]
    if labels.shape != (n,):
        raise ShapeMismatch(f"labels must be [{n}], got {labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    probs = np.exp(z - log_norm)
    losses = log_norm[:, 0] - z[np.arange(n), labels]

    def backward(g):
        gl = probs.copy()
        gl[np.arange(n), labels] -= 1.0
        return (gl * (g / n),)

    return _node(np.asarray(losses.mean()), (logits,), backward)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topo_order(output: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor, wrt: list[Tensor] | None = None) -> list[Array] | None:
    """Accumulate d(output)/d(leaf) into `.grad` for every reachable leaf.

    `output` must be scalar. When `wrt` is given, returns the gradient for
    each listed tensor in order; tensors not connected to `output` get
    zeros rather than an error.
    """
    if output.data.size != 1:
        raise NotScalar(f"backward needs a scalar output, got shape {output.data.shape}")

    order = _topo_order(output)
    for node in order:
        node.grad = None
    output.grad = np.ones_like(output.data)

    for node in reversed(order):
        if node._backward_fn is None or node.grad is None:
            continue
        parent_grads = node._backward_fn(node.grad)
        for parent, g in zip(node._parents, parent_grads):
            if g is None or not parent._needs_grad():
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteValue("gradient holds NaN or infinity")
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                parent.grad += g

    if wrt is None:
        return None
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in wrt]


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, Array], grads: dict[str, Array], state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[dict[str, Array], AdamState]:
    """One bias-corrected Adam update, applied in place to `params`."""
    state.t += 1
    t = state.t
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ShapeMismatch(f"adam_step: {name} param {p.shape} vs grad {g.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state
