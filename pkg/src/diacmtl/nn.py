"""
Small numpy neural-network engine with hand-written backward passes.

Every forward function returns ``(output, cache)``; the matching backward
takes the upstream gradient plus that cache, accumulates parameter gradients
into ``Parameter.grad`` and returns the gradient w.r.t. the input. Keeping the
activations in explicit caches (instead of on layer objects) lets one layer be
applied several times per step and lets read-only inference run concurrently.

Tensors are plain row-major ``numpy.ndarray``. Training uses float32; the
gradient checks run everything in float64.
"""
from dataclasses import dataclass

import numpy as np

from ._kernels import lstm_backward_kernel, lstm_forward_kernel
from .errors import IndexOutOfRange, InvalidProbability, ShapeMismatch

HIDDEN_INIT_STD = 0.01


class Parameter:
    """A trainable tensor with its gradient and Adam moment buffers.

    ``frozen`` parameters never receive gradient. ``trainable_rows`` makes a
    table frozen except for the listed rows (the learned UNK row of the
    pretrained word table).
    """

    def __init__(self, name, value, frozen=False, trainable_rows=None):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)
        self.frozen = frozen
        self.trainable_rows = None if trainable_rows is None else np.asarray(trainable_rows)

    @property
    def shape(self):
        return self.value.shape

    @property
    def receives_grad(self):
        return not self.frozen or self.trainable_rows is not None

    def zero_grad(self):
        self.grad.fill(0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def init_embedding(shape, rng, dtype=np.float32):
    return rng.uniform(-0.1, 0.1, size=shape).astype(dtype)


def init_hidden(shape, rng, dtype=np.float32, std=HIDDEN_INIT_STD):
    return (rng.standard_normal(size=shape) * std).astype(dtype)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- embedding ---------------------------------------------------------------

def embedding_forward(table, ids):
    ids = np.asarray(ids)
    n = table.value.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexOutOfRange(f"embedding id out of range [0, {n})")
    return table.value[ids], ids


def embedding_backward(table, dout, ids):
    if not table.receives_grad:
        return
    flat_ids = ids.reshape(-1)
    flat = dout.reshape(-1, table.value.shape[1])
    if table.frozen:
        keep = np.isin(flat_ids, table.trainable_rows)
        flat_ids, flat = flat_ids[keep], flat[keep]
    np.add.at(table.grad, flat_ids, flat)


# -- dense -------------------------------------------------------------------

def dense_forward(W, b, x):
    return x @ W.value + b.value, x


def dense_backward(W, b, dout, x):
    d = dout.reshape(-1, dout.shape[-1])
    W.grad += x.reshape(-1, x.shape[-1]).T @ d
    b.grad += d.sum(axis=0)
    return dout @ W.value.T


# -- dropout -----------------------------------------------------------------

def dropout(x, p, training, rng):
    """Inverted dropout. Returns ``(out, mask)``; mask is None when inactive."""
    if not 0.0 <= p < 1.0:
        raise InvalidProbability(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# -- softmax / cross-entropy -------------------------------------------------

def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dprobs, probs):
    return probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, target_ids, mask=None):
    """Masked mean negative log-likelihood over the leading axes.

    Returns ``(loss, probs, cache)``; pass the cache to
    :func:`softmax_cross_entropy_backward`.
    """
    C = logits.shape[-1]
    flat = logits.reshape(-1, C)
    t = np.asarray(target_ids).reshape(-1)
    if t.size and (t.min() < 0 or t.max() >= C):
        raise IndexOutOfRange(f"target id out of range [0, {C})")
    m = np.ones(t.shape, dtype=flat.dtype) if mask is None else np.asarray(mask, dtype=flat.dtype).reshape(-1)
    z = flat - flat.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=-1))
    logp_t = z[np.arange(t.size), t] - logsum
    denom = m.sum()
    loss = float(-(logp_t * m).sum() / denom) if denom > 0 else 0.0
    probs = np.exp(z - logsum[:, None])
    return loss, probs.reshape(logits.shape), (probs, t, m, denom, logits.shape)


def softmax_cross_entropy_backward(dloss, cache):
    probs, t, m, denom, shape = cache
    if denom == 0:
        return np.zeros(shape, dtype=probs.dtype)
    g = probs.copy()
    g[np.arange(t.size), t] -= 1.0
    g *= (m * (dloss / denom))[:, None]
    return g.reshape(shape)


# -- LSTM --------------------------------------------------------------------

@dataclass
class LstmCellWeights:
    """Gate order along the 4H axis: input, forget, output, candidate."""

    Wx: Parameter  # (D, 4H)
    Wh: Parameter  # (H, 4H)
    b: Parameter   # (4H,)

    @property
    def hidden(self):
        return self.Wh.value.shape[0]

    @property
    def input_dim(self):
        return self.Wx.value.shape[0]

    def parameters(self):
        return [self.Wx, self.Wh, self.b]

    @classmethod
    def create(cls, name, input_dim, hidden, rng, dtype=np.float32):
        return cls(
            Parameter(f"{name}.Wx", init_hidden((input_dim, 4 * hidden), rng, dtype)),
            Parameter(f"{name}.Wh", init_hidden((hidden, 4 * hidden), rng, dtype)),
            Parameter(f"{name}.b", np.zeros(4 * hidden, dtype=dtype)),
        )


def _gates(z, H):
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H:2 * H])
    o = sigmoid(z[:, 2 * H:3 * H])
    g = np.tanh(z[:, 3 * H:])
    return i, f, o, g


def _step(zx, h_prev, c_prev, Wh):
    H = Wh.shape[0]
    i, f, o, g = _gates(zx + h_prev @ Wh, H)
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, o, g, c_prev, tc)


def _step_backward(dh, dc, cache):
    i, f, o, g, c_prev, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * c_prev
    dz = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        do * o * (1.0 - o),
        dg * (1.0 - g * g),
    ], axis=1)
    return dz, dc * f


def lstm_cell(x_t, h_prev, c_prev, W):
    """One LSTM step. Returns ``(h_t, c_t, cache)``."""
    if x_t.shape[-1] != W.input_dim or h_prev.shape[-1] != W.hidden or c_prev.shape != h_prev.shape:
        raise ShapeMismatch(
            f"lstm_cell: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"vs D={W.input_dim} H={W.hidden}"
        )
    x2 = np.atleast_2d(x_t)
    hp = np.atleast_2d(h_prev)
    h, c, step = _step(x2 @ W.Wx.value + W.b.value, hp, np.atleast_2d(c_prev), W.Wh.value)
    return h.reshape(h_prev.shape), c.reshape(c_prev.shape), (x2, hp, step, np.shape(x_t))


def lstm_cell_backward(dh, dc, cache, W):
    """Returns ``(dx, dh_prev, dc_prev)``; weight grads go into ``W``."""
    x2, hp, step, x_shape = cache
    h_shape = np.shape(dh)
    dz, dc_prev = _step_backward(np.atleast_2d(dh), np.atleast_2d(dc), step)
    W.Wx.grad += x2.T @ dz
    W.Wh.grad += hp.T @ dz
    W.b.grad += dz.sum(axis=0)
    dx = dz @ W.Wx.value.T
    dhp = dz @ W.Wh.value.T
    return dx.reshape(x_shape), dhp.reshape(h_shape), dc_prev.reshape(h_shape)


def lstm_bank_forward(cells, X):
    """Run K independent LSTMs in lockstep.

    ``cells`` is a list of K LstmCellWeights, ``X`` has shape (K, B, T, D).
    Returns (K, B, T, H) hidden states and a cache.
    """
    K, B, T, D = X.shape
    if len(cells) != K or any(c.input_dim != D for c in cells):
        raise ShapeMismatch(f"LSTM bank expects input dim {cells[0].input_dim}, got {D}")
    H = cells[0].hidden
    dt = X.dtype
    Wx = np.stack([c.Wx.value for c in cells]).astype(dt, copy=False)
    Wh = np.ascontiguousarray(np.stack([c.Wh.value for c in cells]), dtype=dt)
    bias = np.stack([c.b.value for c in cells]).astype(dt, copy=False)
    Xt = np.ascontiguousarray(X.transpose(2, 0, 1, 3))          # time-major (T, K, B, D)
    Zx = np.matmul(Xt, Wx)
    Zx += bias[:, None, :]
    A = np.empty((T, K, B, 4 * H), dtype=dt)
    C = np.empty((T + 1, K, B, H), dtype=dt)                     # slab 0 is the zero state
    TC = np.empty((T, K, B, H), dtype=dt)
    Hs = np.empty((T + 1, K, B, H), dtype=dt)
    C[0] = 0.0
    Hs[0] = 0.0
    lstm_forward_kernel(Zx, Wh, A, C, TC, Hs)
    out = np.ascontiguousarray(Hs[1:].transpose(1, 2, 0, 3))
    return out, (Xt, Hs, A, C, TC)


def lstm_bank_backward(cells, dout, cache):
    """Gradient w.r.t. the bank input; weight grads accumulate into ``cells``."""
    Xt, Hs, A, C, TC = cache
    T, K, B, D = Xt.shape
    H = TC.shape[3]
    dt = TC.dtype
    dO = np.ascontiguousarray(dout.transpose(2, 0, 1, 3), dtype=dt)   # (T, K, B, H)
    WhT = np.ascontiguousarray(np.stack([c.Wh.value.T for c in cells]), dtype=dt)
    dZ = np.empty_like(A)
    lstm_backward_kernel(dO, A, C, TC, WhT, dZ)
    dZk = dZ.transpose(1, 0, 2, 3).reshape(K, T * B, 4 * H)
    Hk = Hs[:-1].transpose(1, 0, 2, 3).reshape(K, T * B, H)
    Xk = Xt.transpose(1, 0, 2, 3).reshape(K, T * B, D)
    dWh = np.matmul(Hk.transpose(0, 2, 1), dZk)
    dWx = np.matmul(Xk.transpose(0, 2, 1), dZk)
    db = dZk.sum(axis=1)
    WxT = np.stack([c.Wx.value.T for c in cells]).astype(dt, copy=False)
    dX = np.matmul(dZ, WxT)                                            # (T, K, B, D)
    for k, cell in enumerate(cells):
        cell.Wh.grad += dWh[k]
        cell.Wx.grad += dWx[k]
        cell.b.grad += db[k]
    return dX.transpose(1, 2, 0, 3)


def lstm_forward(W, X):
    """Left-to-right LSTM over ``X`` of shape (B, T, D), zero initial state."""
    if X.shape[2] != W.input_dim:
        raise ShapeMismatch(f"LSTM expects input dim {W.input_dim}, got {X.shape[2]}")
    out, cache = lstm_bank_forward([W], X[None])
    return out[0], cache


def lstm_backward(W, dout, cache):
    return lstm_bank_backward([W], dout[None], cache)[0]


def reverse_index(lengths, T):
    """Per-row index that reverses the first ``lengths[b]`` steps in place.

    Padding stays at the tail, so the reversed pass starts at each
    sequence's real last element. The map is its own inverse.
    """
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def bilstm_layer_forward(fw, bw, X, lengths):
    B, T, _ = X.shape
    rows = np.arange(B)[:, None]
    rev = reverse_index(lengths, T)
    both, cache = lstm_bank_forward([fw, bw], np.stack([X, X[rows, rev]]))
    out = np.concatenate([both[0], both[1][rows, rev]], axis=2)
    return out, (cache, rows, rev)


def bilstm_layer_backward(fw, bw, dout, cache):
    cache, rows, rev = cache
    H = fw.hidden
    d = np.stack([dout[:, :, :H], dout[:, :, H:][rows, rev]])
    dX = lstm_bank_backward([fw, bw], d, cache)
    return dX[0] + dX[1][rows, rev]


class BiLSTM:
    """Stacked bidirectional LSTM with dropout between layers."""

    def __init__(self, name, input_dim, hidden, layers, rng, dtype=np.float32, dropout_p=0.0):
        self.name = name
        self.hidden = hidden
        self.dropout_p = dropout_p
        self.cells = []
        dim = input_dim
        for layer in range(layers):
            self.cells.append((
                LstmCellWeights.create(f"{name}.l{layer}.fw", dim, hidden, rng, dtype),
                LstmCellWeights.create(f"{name}.l{layer}.bw", dim, hidden, rng, dtype),
            ))
            dim = 2 * hidden

    @property
    def input_dim(self):
        return self.cells[0][0].input_dim

    @property
    def output_dim(self):
        return 2 * self.hidden

    def parameters(self):
        return [p for fw, bw in self.cells for p in fw.parameters() + bw.parameters()]

    def forward(self, X, lengths, training=False, rng=None):
        if X.ndim != 3 or X.shape[2] != self.input_dim:
            raise ShapeMismatch(f"{self.name}: expected (B, T, {self.input_dim}), got {X.shape}")
        caches = []
        h = X
        for layer, (fw, bw) in enumerate(self.cells):
            h, cache = bilstm_layer_forward(fw, bw, h, lengths)
            mask = None
            if layer < len(self.cells) - 1:
                h, mask = dropout(h, self.dropout_p, training, rng)
            caches.append((cache, mask))
        return h, caches

    def backward(self, dout, caches):
        d = dout
        for (fw, bw), (cache, mask) in zip(reversed(self.cells), reversed(caches)):
            d = bilstm_layer_backward(fw, bw, dropout_backward(d, mask), cache)
        return d


def bilstm_forward(x, layers, hidden, dropout_p=0.0, training=False, rng=None, dtype=None, seed=0):
    """Run a freshly initialized stacked BiLSTM over a list of timestep vectors.

    Convenience wrapper for one unpadded sequence; returns a list of 2H vectors.
    """
    X = np.stack([np.asarray(v) for v in x])[None]
    dtype = dtype or X.dtype
    net = BiLSTM("bilstm", X.shape[2], hidden, layers, np.random.default_rng(seed), dtype, dropout_p)
    out, _ = net.forward(X.astype(dtype), [X.shape[1]], training, rng)
    return list(out[0])


# -- optimizer ---------------------------------------------------------------

class Adam:
    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
        self.params = [p for p in params if p.receives_grad]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def grad_norm(self):
        return float(np.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in self.params)))

    def step(self):
        self.t += 1
        scale = 1.0
        if self.clip_norm:
            norm = self.grad_norm()
            if norm > self.clip_norm:
                scale = self.clip_norm / norm
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        eps_t = self.eps * np.sqrt(1.0 - b2 ** self.t)
        for p in self.params:
            if p.frozen:
                rows = p.trainable_rows
                g = p.grad[rows] * scale
                p.m[rows] = b1 * p.m[rows] + (1 - b1) * g
                p.v[rows] = b2 * p.v[rows] + (1 - b2) * g * g
                p.value[rows] -= (lr_t * p.m[rows] / (np.sqrt(p.v[rows]) + eps_t)).astype(p.value.dtype)
            else:
                g = p.grad * scale if scale != 1.0 else p.grad
                p.m *= b1
                p.m += (1 - b1) * g
                p.v *= b2
                p.v += (1 - b2) * g * g
                p.value -= (lr_t * p.m / (np.sqrt(p.v) + eps_t)).astype(p.value.dtype)
            p.zero_grad()


def adam_step(params, t, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one bias-corrected Adam update at step ``t`` (1-based) and zero grads."""
    opt = Adam(params, lr, beta1, beta2, eps)
    opt.t = t - 1
    opt.step()
    return params
