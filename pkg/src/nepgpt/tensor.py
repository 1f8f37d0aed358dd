"""Minimal dense-array compute core with reverse-mode gradients.

Tensors wrap contiguous numpy arrays (float32 by default; float64 exists
for gradient checking). Each primitive records a backward closure on the
result; ``backward`` walks the recorded graph once, accumulating into
``.grad`` buffers, and the graph is discarded afterwards. No higher-order
derivatives.
"""

import math

import numpy as np

from .errors import (NonFiniteValue, NotScalarLoss, ShapeMismatch, TokenOutOfRange)

_GELU_C = math.sqrt(2.0 / math.pi)
_LN_EPS = 1e-5


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64, np.longdouble):
            arr = arr.astype(np.float32)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = arr if arr.ndim == 0 else np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _node(data, parents, backward_fn):
    out = Tensor(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# -- primitives ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}")

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatch(f"matmul: {a.shape} vs {b.shape}")

    def backward(g):
        _accum(a, _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape))
        _accum(b, _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape))

    return _node(data, (a, b), backward)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU: 0.5 x (1 + tanh(sqrt(2/pi)(x + 0.044715 x^3)))."""
    xd = x.data
    inner = _GELU_C * (xd + 0.044715 * xd ** 3)
    t = np.tanh(inner)
    data = 0.5 * xd * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * xd ** 2)
        dydx = 0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t ** 2) * dinner
        _accum(x, g * dydx)

    return _node(data, (x,), backward)


def layernorm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = _LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine.

    A zero-variance row normalizes to zeros (eps sits inside the sqrt),
    not an error.
    """
    if gain.shape != x.shape[-1:] or shift.shape != x.shape[-1:]:
        raise ShapeMismatch(f"layernorm: x {x.shape}, gain {gain.shape}, shift {shift.shape}")
    xd = x.data
    mean = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean) * inv_std
    data = xhat * gain.data + shift.data

    def backward(g):
        n = xd.shape[-1]
        dxhat = g * gain.data
        dx = inv_std / n * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        _accum(x, dx)
        reduce_axes = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=reduce_axes))
        _accum(shift, g.sum(axis=reduce_axes))

    return _node(data, (x, gain, shift), backward)


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of table by integer id; backward scatter-adds."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise TokenOutOfRange(f"id outside [0, {table.shape[0]})")
    data = table.data[ids]

    def backward(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids, g)

    return _node(data, (table,), backward)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean natural-log cross-entropy over every leading position."""
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape}, targets {targets.shape}")
    vocab = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise TokenOutOfRange(f"target outside [0, {vocab})")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    flat_logp = logp.reshape(-1, vocab)
    flat_t = targets.reshape(-1)
    count = flat_t.shape[0]
    data = np.asarray(-flat_logp[np.arange(count), flat_t].mean(), dtype=logits.data.dtype)

    def backward(g):
        probs = np.exp(logp)
        grad = probs.reshape(-1, vocab)
        grad[np.arange(count), flat_t] -= 1.0
        grad *= np.asarray(g).reshape(())[()] / count
        _accum(logits, grad.reshape(logits.shape))

    return _node(data, (logits,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)

    def backward(g):
        _accum(x, g.reshape(x.shape))

    return _node(data, (x,), backward)


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.data.ndim)))
    data = np.ascontiguousarray(x.data.transpose(axes))
    inverse = np.argsort(axes)

    def backward(g):
        _accum(x, g.transpose(inverse))

    return _node(data, (x,), backward)


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    data = np.ascontiguousarray(x.data[..., start:stop])

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        _accum(x, full)

    return _node(data, (x,), backward)


def tsum(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward(g):
        _accum(x, np.full_like(x.data, float(g)))

    return _node(data, (x,), backward)


# -- attention ----------------------------------------------------------------


def attention_naive(q: np.ndarray, k: np.ndarray, v: np.ndarray, causal: bool = True):
    """Dense reference: softmax(q k^T / sqrt(d) + mask) v.

    Materializes the full score matrix; used as the oracle for the tiled
    implementation and by the naive-backward cross-check mode. Returns
    (out, lse) where lse is the per-row log normalizer.
    """
    d_head = q.shape[-1]
    scores = np.matmul(q, k.swapaxes(-1, -2)) / np.sqrt(np.asarray(d_head, dtype=q.dtype))
    if causal:
        t_q, t_k = scores.shape[-2], scores.shape[-1]
        mask = np.tril(np.ones((t_q, t_k), dtype=bool))
        scores = np.where(mask, scores, np.asarray(-np.inf, dtype=scores.dtype))
    m = scores.max(axis=-1, keepdims=True)
    p = np.exp(scores - m)
    denom = p.sum(axis=-1, keepdims=True)
    out = np.matmul(p / denom, v)
    lse = (m + np.log(denom)).squeeze(-1)
    return out, lse


def _tiled_forward(q, k, v, block_rows, block_cols, causal):
    t_len, d_head = q.shape[-2], q.shape[-1]
    lead = q.shape[:-2]
    scale = 1.0 / np.sqrt(np.asarray(d_head, dtype=q.dtype))
    out = np.empty_like(q)
    lse = np.empty(lead + (t_len,), dtype=q.dtype)
    neg_inf = np.asarray(-np.inf, dtype=q.dtype)

    for r0 in range(0, t_len, block_rows):
        r1 = min(r0 + block_rows, t_len)
        q_blk = q[..., r0:r1, :]
        m = np.full(lead + (r1 - r0,), -np.inf, dtype=q.dtype)
        norm = np.zeros(lead + (r1 - r0,), dtype=q.dtype)
        acc = np.zeros(lead + (r1 - r0, d_head), dtype=q.dtype)
        for c0 in range(0, t_len, block_cols):
            c1 = min(c0 + block_cols, t_len)
            if causal and c0 > r1 - 1:
                break  # block lies entirely above the diagonal
            s = np.matmul(q_blk, k[..., c0:c1, :].swapaxes(-1, -2)) * scale
            if causal and c1 - 1 > r0:
                rows = np.arange(r0, r1)[:, None]
                cols = np.arange(c0, c1)[None, :]
                s = np.where(cols <= rows, s, neg_inf)
            block_max = s.max(axis=-1)
            new_m = np.maximum(m, block_max)
            p = np.exp(s - new_m[..., None])
            alpha = np.exp(m - new_m)
            norm = norm * alpha + p.sum(axis=-1)
            acc = acc * alpha[..., None] + np.matmul(p, v[..., c0:c1, :])
            m = new_m
        out[..., r0:r1, :] = acc / norm[..., None]
        lse[..., r0:r1] = m + np.log(norm)
    return out, lse


def _attention_backward(q, k, v, out, lse, g, block_rows, block_cols, causal):
    """Recompute per-block scores from the saved log normalizer."""
    t_len, d_head = q.shape[-2], q.shape[-1]
    scale = 1.0 / np.sqrt(np.asarray(d_head, dtype=q.dtype))
    neg_inf = np.asarray(-np.inf, dtype=q.dtype)
    dq = np.zeros_like(q)
    dk = np.zeros_like(k)
    dv = np.zeros_like(v)
    delta = (g * out).sum(axis=-1)  # rowwise <dOut, Out>

    for r0 in range(0, t_len, block_rows):
        r1 = min(r0 + block_rows, t_len)
        q_blk = q[..., r0:r1, :]
        g_blk = g[..., r0:r1, :]
        lse_blk = lse[..., r0:r1]
        delta_blk = delta[..., r0:r1]
        for c0 in range(0, t_len, block_cols):
            c1 = min(c0 + block_cols, t_len)
            if causal and c0 > r1 - 1:
                break
            k_blk = k[..., c0:c1, :]
            v_blk = v[..., c0:c1, :]
            s = np.matmul(q_blk, k_blk.swapaxes(-1, -2)) * scale
            if causal and c1 - 1 > r0:
                rows = np.arange(r0, r1)[:, None]
                cols = np.arange(c0, c1)[None, :]
                s = np.where(cols <= rows, s, neg_inf)
            p = np.exp(s - lse_blk[..., None])
            dv[..., c0:c1, :] += np.matmul(p.swapaxes(-1, -2), g_blk)
            dp = np.matmul(g_blk, v_blk.swapaxes(-1, -2))
            ds = p * (dp - delta_blk[..., None]) * scale
            dq[..., r0:r1, :] += np.matmul(ds, k_blk)
            dk[..., c0:c1, :] += np.matmul(ds.swapaxes(-1, -2), q_blk)
    return dq, dk, dv


def attention(q: Tensor, k: Tensor, v: Tensor, block_rows: int = 64,
              block_cols: int = 64, causal: bool = True,
              backward_mode: str = "recompute") -> Tensor:
    """Streaming tiled attention with an online softmax.

    Processes key/value column blocks with a running row max and running
    normalizer, never materializing the full score matrix. Only the output
    and per-row log normalizer are retained for backward, which recomputes
    block scores ("recompute") or rebuilds the dense matrix for
    cross-checking ("naive").
    """
    if q.shape != k.shape or q.shape != v.shape:
        raise ShapeMismatch(f"attention: q {q.shape}, k {k.shape}, v {v.shape}")
    if block_rows < 1 or block_cols < 1:
        raise ShapeMismatch(f"attention: tiling must be >= 1, got {block_rows}x{block_cols}")
    data, lse = _tiled_forward(q.data, k.data, v.data, block_rows, block_cols, causal)

    def backward(g):
        if backward_mode == "naive":
            dq, dk, dv = _attention_backward(
                q.data, k.data, v.data, data, lse, g,
                q.shape[-2], q.shape[-2], causal)
        else:
            dq, dk, dv = _attention_backward(
                q.data, k.data, v.data, data, lse, g, block_rows, block_cols, causal)
        _accum(q, dq)
        _accum(k, dk)
        _accum(v, dv)

    return _node(data, (q, k, v), backward)


# -- backward & gradient checking ---------------------------------------------


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss, accumulating into .grad."""
    if loss.data.size != 1:
        raise NotScalarLoss(f"loss has shape {loss.shape}, expected a scalar")
    topo = []
    visited = set()
    stack = [(loss, False)]
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
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        # grad can stay None when an upstream backward never reached this node
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# the numeric oracle runs one precision above the path under test so the
# difference quotient is not drowned by roundoff of the checked path
_FD_DTYPE = {np.dtype(np.float32): np.float64, np.dtype(np.float64): np.longdouble}


def grad_check(f, inputs, eps: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    f builds a scalar Tensor from the given input Tensors; the numeric side
    re-evaluates f at perturbed points (in higher precision) and stays
    independent of backward. The error is normwise per input: the largest
    absolute deviation scaled by the largest gradient magnitude of that
    input, so a single near-zero component cannot dominate the report.
    """
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()
    out = f(*inputs)
    if out.data.size != 1:
        raise NotScalarLoss("grad_check target must be scalar-valued")
    if not np.isfinite(out.data).all():
        raise NonFiniteValue("non-finite value in forward evaluation")
    backward(out)
    analytic = [np.array(t.grad if t.grad is not None else np.zeros_like(t.data))
                for t in inputs]

    shadows = [Tensor(t.data, dtype=_FD_DTYPE.get(t.data.dtype, np.longdouble))
               for t in inputs]

    def eval_f():
        val = f(*shadows).data
        if not np.isfinite(np.asarray(val, dtype=np.float64)).all():
            raise NonFiniteValue("non-finite value in forward evaluation")
        return val.reshape(())[()]

    worst = 0.0
    for shadow, a in zip(shadows, analytic):
        flat = shadow.data.reshape(-1)
        step = flat.dtype.type(eps)
        numeric = np.empty(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            # symmetric five-point stencil: O(eps^4) truncation
            flat[i] = orig + step
            f1 = eval_f()
            flat[i] = orig - step
            f_1 = eval_f()
            flat[i] = orig + 2 * step
            f2 = eval_f()
            flat[i] = orig - 2 * step
            f_2 = eval_f()
            flat[i] = orig
            numeric[i] = float((8 * (f1 - f_1) - (f2 - f_2)) / (12 * step))
        ana = a.reshape(-1).astype(np.float64)
        scale = max(float(np.abs(ana).max(initial=0.0)),
                    float(np.abs(numeric).max(initial=0.0)), 1e-8)
        worst = max(worst, float(np.abs(ana - numeric).max(initial=0.0)) / scale)
    for t in inputs:
        t.zero_grad()
    return worst
