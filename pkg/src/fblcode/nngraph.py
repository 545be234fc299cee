"""A small reverse-mode autodiff engine over numpy arrays.

Only the operations the convolutional autoencoder needs are provided:
1-D convolution, batch normalization, ELU/sigmoid/linear activations,
reshape, per-frame power normalization, additive constants, binary
cross-entropy, and Adam.

Activations flowing through layers have shape ``(batch, positions,
channels)``. A :class:`Tensor` records the op that produced it; calling
:meth:`Tensor.backward` on a scalar walks the graph in reverse topological
order and accumulates ``.grad`` on every tensor that requires it.
"""

from dataclasses import dataclass, field

import numpy as np


class Tensor:
    def __init__(self, value, parents=(), backward=None, requires_grad=False, name=None):
        self.value = np.asarray(value)
        self.grad = None
        self.name = name
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self._parents)

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.value)
        order, seen = [], set()

        def visit(t):
            # iterative DFS keeps deep graphs off the recursion limit
            stack = [(t, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    order.append(node)
                    continue
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                for p in node._parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def parameter(value, name=None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def _const(x, like: Tensor):
    return np.asarray(x, dtype=like.dtype)


# ---------------------------------------------------------------------------
# elementwise and structural ops

def add(x: Tensor, other) -> Tensor:
    """``x + other``; ``other`` may be a Tensor or a constant array."""
    if isinstance(other, Tensor):
        return Tensor(x.value + other.value, (x, other), lambda g: (g, g))
    return Tensor(x.value + _const(other, x), (x,), lambda g: (g,))


def mul(x: Tensor, c) -> Tensor:
    """Elementwise product with a constant array."""
    c = _const(c, x)
    return Tensor(x.value * c, (x,), lambda g: (g * c,))


def total(x: Tensor) -> Tensor:
    return Tensor(x.value.sum(), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return Tensor(x.value.reshape(shape), (x,), lambda g: (g.reshape(src),))


def linear(x: Tensor) -> Tensor:
    return x


def elu(x: Tensor) -> Tensor:
    """ELU with alpha = 1."""
    # branch-free: expm1(min(x, 0)) is zero wherever x >= 0
    neg = np.expm1(np.minimum(x.value, 0))
    out = np.maximum(x.value, 0) + neg
    slope = neg + 1
    return Tensor(out, (x,), lambda g: (g * slope,))


def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (np.tanh(0.5 * x.value) + 1)
    return Tensor(s, (x,), lambda g: (g * s * (1 - s),))


ACTIVATIONS = {"elu": elu, "sigmoid": sigmoid, "linear": linear}


def power_normalize(x: Tensor) -> Tensor:
    """Scale each frame ``(n, 2)`` of a ``(batch, n, 2)`` tensor to unit average power."""
    v = x.value
    n = v.shape[1]
    power = np.sum(v * v, axis=(1, 2), keepdims=True) / n
    if np.any(power == 0):
        raise ValueError("cannot normalize an all-zero codeword")
    s = np.sqrt(power)
    out = v / s

    def back(g):
        proj = np.sum(g * v, axis=(1, 2), keepdims=True)
        return (g / s - v * proj / (n * s**3),)

    return Tensor(out, (x,), back)


def _correlate(xp: np.ndarray, taps: np.ndarray, P: int) -> np.ndarray:
    """Valid correlation of padded frames ``xp`` (B, P + k - 1, c1) with taps (k, c1, c2).

    The batch is flattened into one long sequence so that every shift is a
    contiguous view; rows straddling two frames are computed and dropped.
    The narrow side decides the strategy: an im2col matrix of width k * c1
    when c1 < c2, otherwise one product per tap accumulated at width c2.
    """
    B, S, c1 = xp.shape
    k, _, c2 = taps.shape
    T = B * S - (k - 1)
    flat = xp.reshape(B * S, c1)
    acc = np.empty((B * S, c2), dtype=xp.dtype)
    acc[T:] = 0
    if c1 < c2 and k > 1:
        cols = np.concatenate([flat[j:j + T] for j in range(k)], axis=1)
        np.matmul(cols, taps.reshape(k * c1, c2), out=acc[:T])
    else:
        np.matmul(flat[0:T], taps[0], out=acc[:T])
        tmp = np.empty((T, c2), dtype=xp.dtype)
        for j in range(1, k):
            np.matmul(flat[j:j + T], taps[j], out=tmp)
            acc[:T] += tmp
    return acc.reshape(B, S, c2)[:, :P, :]


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Stride-1 cross-correlation with zero 'same' padding.

    ``x``: (batch, P, C_in), ``w``: (k, C_in, C_out), ``b``: (C_out,).
    The input gradient is itself a correlation of the output gradient with
    the flipped, transposed kernel.
    """
    B, P, cin = x.shape
    k, wcin, cout = w.shape
    if wcin != cin:
        raise ValueError(f"conv1d expects {wcin} input channels, got {cin}")
    left = (k - 1) // 2
    right = k - 1 - left
    xp = np.pad(x.value, ((0, 0), (left, right), (0, 0)))
    out = _correlate(xp, w.value, P) + b.value

    def back(g):
        S = P + k - 1
        T = B * S - (k - 1)
        gp = np.zeros((B, S, cout), dtype=g.dtype)
        gp[:, right:right + P, :] = g
        gx = _correlate(gp, w.value[::-1].transpose(0, 2, 1), P)
        # weight gradient: tap j pairs input row r + j with output row r
        flat_x = xp.reshape(B * S, cin)
        flat_g = np.roll(gp, -right, axis=1).reshape(B * S, cout)[:T]
        gw = np.empty_like(w.value)
        for j in range(k):
            np.matmul(flat_x[j:j + T].T, flat_g, out=gw[j])
        gb = g.reshape(-1, cout).sum(axis=0)
        return gx, gw, gb

    return Tensor(out, (x, w, b), back)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean, running_var,
               training: bool, momentum: float = 0.99, eps: float = 1e-3) -> Tensor:
    """Per-channel normalization over the (batch, positions) axes.

    In training mode the batch statistics are used and the running arrays
    are updated in place as ``running = momentum * running + (1 - momentum) * batch``.
    Channel sums are taken as products with a ones vector, which is much
    cheaper than a strided reduction for narrow channel counts.
    """
    v = x.value
    C = v.shape[-1]
    if gamma.shape != (C,):
        raise ValueError(f"batch_norm expects {gamma.shape[0]} channels, got {C}")
    M = v.size // C
    v2 = v.reshape(M, C)
    ones = np.ones(M, dtype=v.dtype)
    if not training:
        inv = (1.0 / np.sqrt(running_var + eps)).astype(v.dtype)
        xhat = (v2 - running_mean.astype(v.dtype)) * inv
        out = xhat * gamma.value + beta.value

        def back_eval(g):
            g2 = g.reshape(M, C)
            return ((g2 * (gamma.value * inv)).reshape(v.shape),
                    ones @ (g2 * xhat), ones @ g2)

        return Tensor(out.reshape(v.shape), (x, gamma, beta), back_eval)

    if v.shape[0] < 2:
        raise ValueError("batch_norm in training mode needs a batch of at least 2")
    mean = (ones @ v2) / M
    xhat = v2 - mean
    var = (ones @ (xhat * xhat)) / M
    inv = 1.0 / np.sqrt(var + v.dtype.type(eps))
    xhat *= inv
    out = xhat * gamma.value
    out += beta.value
    running_mean *= momentum
    running_mean += (1 - momentum) * mean
    running_var *= momentum
    running_var += (1 - momentum) * var

    def back(g):
        g2 = g.reshape(M, C)
        dbeta = ones @ g2
        dgamma = ones @ (g2 * xhat)
        gx = xhat * (dgamma / M)
        np.subtract(g2, gx, out=gx)
        gx -= dbeta / M
        gx *= gamma.value * inv
        return gx.reshape(v.shape), dgamma, dbeta

    return Tensor(out.reshape(v.shape), (x, gamma, beta), back)


def bce_loss(pred: Tensor, target, clamp: float = 1e-7) -> Tensor:
    """Mean binary cross-entropy (natural log) with clamped predictions."""
    t = np.asarray(target, dtype=pred.dtype)
    if t.shape != pred.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {t.shape}")
    lo, hi = pred.dtype.type(clamp), pred.dtype.type(1 - clamp)
    p = np.clip(pred.value, lo, hi)
    loss = -np.mean(t * np.log(p) + (1 - t) * np.log1p(-p))
    inside = (pred.value >= lo) & (pred.value <= hi)

    def back(g):
        d = (p - t) / (p * (1 - p)) / t.size
        return (g * d * inside,)

    return Tensor(np.asarray(loss, dtype=pred.dtype), (pred,), back)


# ---------------------------------------------------------------------------
# layers

def glorot_uniform(shape, fan_in, fan_out, rng, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv1d:
    def __init__(self, in_ch, out_ch, kernel, rng, dtype=np.float32, name="conv"):
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        self.name = name
        w = glorot_uniform((kernel, in_ch, out_ch), kernel * in_ch, kernel * out_ch, rng, dtype)
        self.weight = parameter(w, f"{name}.weight")
        self.bias = parameter(np.zeros(out_ch, dtype=dtype), f"{name}.bias")

    def __call__(self, x):
        return conv1d(x, self.weight, self.bias)

    def parameters(self):
        return [self.weight, self.bias]

    def buffers(self):
        return []

    @property
    def num_params(self):
        return self.kernel * self.in_ch * self.out_ch + self.out_ch


class BatchNorm1d:
    def __init__(self, channels, dtype=np.float32, momentum=0.99, eps=1e-3, name="bn"):
        self.channels, self.momentum, self.eps, self.name = channels, momentum, eps, name
        self.gamma = parameter(np.ones(channels, dtype=dtype), f"{name}.gamma")
        self.beta = parameter(np.zeros(channels, dtype=dtype), f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.training = True

    def __call__(self, x):
        return batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                          self.training, self.momentum, self.eps)

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    @property
    def num_params(self):
        return 2 * self.channels


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, applied in place to ``params`` (arrays)."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params


# ---------------------------------------------------------------------------
# gradient checking

def gradcheck(fn, tensors, h=1e-4, floor=1e-6):
    """Compare backprop gradients with central finite differences.

    ``fn()`` must rebuild the graph from ``tensors`` and return a scalar
    Tensor. Returns the largest normwise relative error
    ``max|analytic - numeric| / max(max|analytic|, max|numeric|, floor)``
    over the given tensors. The floor keeps gradients that are identically
    zero (a bias feeding batch normalization) from dividing round-off by
    round-off. Use float64 values.
    """
    for t in tensors:
        t.zero_grad()
    fn().backward()
    worst = 0.0
    for t in tensors:
        analytic = np.zeros_like(t.value) if t.grad is None else t.grad.copy()
        numeric = np.zeros_like(t.value)
        flat = t.value.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(fn().value)
            flat[i] = orig - h
            down = float(fn().value)
            flat[i] = orig
            nflat[i] = (up - down) / (2 * h)
        scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
        worst = max(worst, float(np.max(np.abs(analytic - numeric)) / scale))
    return worst
