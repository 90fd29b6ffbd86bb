"""Hand-rolled differentiable building blocks: an affine/ReLU/dropout MLP
classifier, softmax cross-entropy, bias-corrected Adam, single-head attention
over the layer axis, and a central finite-difference gradient checker.

Every kernel is a pure function of explicit parameter arrays.  Math runs in
the dtype of the data (float32 for training, float64 for gradient checks);
losses are always accumulated in float64 with numpy's fixed-order pairwise
summation.  Dropout uses the inverted convention, so evaluation mode is
exactly the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class StaleCacheError(RuntimeError):
    """A backward cache was already consumed or does not match the call."""


class NonFiniteGradientError(ArithmeticError):
    pass


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class Probe:
    """MLP classifier q(y|z): a chain of affine layers with ReLU and inverted
    dropout between them.  hidden=() degenerates to a purely linear probe.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], dropout_rate: float = 0.1):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not chain")
            if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i - 1} output {weights[i - 1].shape[1]} != layer {i} input {w.shape[0]}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameters")
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
        self.weights = weights
        self.biases = biases
        self.dropout_rate = float(dropout_rate)
        self.train_tag: str | None = None  # split id of the data this probe was fit on

    @classmethod
    def create(cls, in_dim: int, hidden, n_classes: int, rng, dropout_rate: float = 0.1,
               dtype=np.float32) -> "Probe":
        rng = _as_rng(rng)
        sizes = [in_dim, *hidden, n_classes]
        weights = [glorot_uniform(rng, a, b, dtype) for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b, dtype=dtype) for b in sizes[1:]]
        return cls(weights, biases, dropout_rate)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out


def probe_forward(probe: Probe, x: np.ndarray, train: bool = False, rng=None):
    """Forward pass; returns (logits, cache).  Eval mode is deterministic and
    dropout-free; train mode draws inverted-dropout masks from rng.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != probe.in_dim:
        raise ValueError(f"batch shape {x.shape} does not match probe input dim {probe.in_dim}")
    p = probe.dropout_rate
    use_dropout = train and p > 0.0
    if use_dropout:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng / seed")
        rng = _as_rng(rng)

    acts = [x]          # input to each affine layer
    relu_masks = []
    drop_scales = []    # mask / (1 - p), i.e. the factor actually applied
    h = x
    last = len(probe.weights) - 1
    for i, (w, b) in enumerate(zip(probe.weights, probe.biases)):
        z = h @ w + b
        if i == last:
            logits = z
            break
        mask = z > 0
        h = np.where(mask, z, 0)
        relu_masks.append(mask)
        if use_dropout:
            scale = (rng.random(h.shape) >= p).astype(h.dtype) / (1.0 - p)
            h = h * scale
            drop_scales.append(scale)
        else:
            drop_scales.append(None)
        acts.append(h)
    cache = {
        "acts": acts,
        "relu_masks": relu_masks,
        "drop_scales": drop_scales,
        "weights": probe.weights,
        "logits_shape": logits.shape,
        "consumed": False,
    }
    return logits, cache


def probe_backward(cache: dict, d_logits: np.ndarray):
    """Analytic gradients for every affine layer, through the ReLU and
    dropout masks recorded at forward time.  Returns (grads, d_input).
    Caches are single-use; a second call on the same cache is stale.
    """
    if cache.get("consumed", True):
        raise StaleCacheError("cache already consumed; rerun the forward pass")
    if d_logits.shape != cache["logits_shape"]:
        raise StaleCacheError(
            f"gradient shape {d_logits.shape} does not match cached logits {cache['logits_shape']}"
        )
    cache["consumed"] = True
    weights = cache["weights"]
    acts = cache["acts"]
    grads: dict[str, np.ndarray] = {}
    g = d_logits
    for i in range(len(weights) - 1, -1, -1):
        grads[f"W{i}"] = acts[i].T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ weights[i].T
        if i > 0:
            scale = cache["drop_scales"][i - 1]
            if scale is not None:
                g = g * scale
            g = g * cache["relu_masks"][i - 1]
    return grads, g


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy in nats plus its gradient w.r.t. logits.

    Stabilized by max-subtraction; the per-sample losses are summed in
    float64.  Gradient is (softmax - onehot) / B in the logits dtype.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels).astype(np.int64)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range for {k} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    per_sample = -logp[np.arange(b), labels].astype(np.float64)
    loss = float(np.sum(per_sample) / b)
    d_logits = np.exp(logp)
    d_logits[np.arange(b), labels] -= 1.0
    d_logits = (d_logits / b).astype(logits.dtype)
    return loss, d_logits


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place.  eps sits outside the sqrt."""
    if set(params) != set(state.m):
        raise ValueError("parameter names do not match optimizer state")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name}")
        g = g.astype(p.dtype, copy=False)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def layer_attention_forward(w_q: np.ndarray, w_k: np.ndarray, bias: np.ndarray, stack: np.ndarray):
    """Single-head attention across the layer axis of a frame stack.

    stack is [L, D] for one frame or [B, L, D] batched.  Queries and keys are
    linear projections of the stack, scores are q.k / sqrt(D) (D = input
    width, regardless of the projection width) plus a per-layer column bias,
    and the value matrix is the stack itself.  The fused vector is the
    arithmetic mean of the attention output rows.

    Returns (fused, attention, cache) with shapes [D]/[L, L] (or batched).
    """
    stack = np.asarray(stack)
    single = stack.ndim == 2
    x = stack[None] if single else stack
    if x.ndim != 3:
        raise ValueError(f"stack must be [L, D] or [B, L, D], got {stack.shape}")
    l, d = x.shape[1], x.shape[2]
    if w_q.shape[0] != d or w_k.shape[0] != d or w_q.shape[1] != w_k.shape[1]:
        raise ValueError(f"projection shapes {w_q.shape}/{w_k.shape} do not match input width {d}")
    if bias.shape != (l,):
        raise ValueError(f"bias shape {bias.shape} does not match layer count {l}")
    dt = x.dtype
    wq = w_q.astype(dt, copy=False)
    wk = w_k.astype(dt, copy=False)
    bz = bias.astype(dt, copy=False)
    scale = dt.type(1.0 / math.sqrt(d))

    q = x @ wq                                   # [B, L, d_k]
    k = x @ wk
    scores = q @ k.transpose(0, 2, 1) * scale + bz   # bias broadcasts over rows
    a = softmax(scores, axis=-1)
    out = a @ x                                  # [B, L, D]
    fused = out.mean(axis=1)                     # [B, D]
    cache = {
        "x": x, "q": q, "k": k, "a": a,
        "wq": wq, "wk": wk, "scale": scale,
        "single": single, "consumed": False,
    }
    if single:
        return fused[0], a[0], cache
    return fused, a, cache


def layer_attention_backward(cache: dict, d_fused: np.ndarray):
    """Gradients of the fused output w.r.t. the projections, the layer bias,
    and the input stack.  Returns ({"W_Q", "W_K", "bias"}, d_stack).
    """
    if cache.get("consumed", True):
        raise StaleCacheError("cache already consumed; rerun the forward pass")
    cache["consumed"] = True
    x, q, k, a = cache["x"], cache["q"], cache["k"], cache["a"]
    wq, wk, scale = cache["wq"], cache["wk"], cache["scale"]
    single = cache["single"]
    g = np.asarray(d_fused)
    if single:
        g = g[None]
    b_, l, d = x.shape
    if g.shape != (b_, d):
        raise StaleCacheError(f"d_fused shape {d_fused.shape} does not match cached output")

    # fused = mean over rows of (A X): every row receives g / L.
    d_out = np.broadcast_to(g[:, None, :] / l, (b_, l, d))
    d_a = d_out @ x.transpose(0, 2, 1)                  # [B, L, L]
    d_x = a.transpose(0, 2, 1) @ d_out                  # value path
    # softmax backward per row
    d_s = a * (d_a - (d_a * a).sum(axis=-1, keepdims=True))
    d_bias = d_s.sum(axis=(0, 1))
    d_q = d_s @ k * scale
    d_k = d_s.transpose(0, 2, 1) @ q * scale
    d_wq = np.einsum("bld,blk->dk", x, d_q)
    d_wk = np.einsum("bld,blk->dk", x, d_k)
    d_x = d_x + d_q @ wq.T + d_k @ wk.T
    grads = {"W_Q": d_wq, "W_K": d_wk, "bias": d_bias}
    return grads, (d_x[0] if single else d_x)


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    n_checked: int
    numeric: dict[str, np.ndarray]


def finite_diff_check(loss_fn, params: dict[str, np.ndarray], analytic: dict[str, np.ndarray],
                      eps: float = 1e-5) -> GradCheckReport:
    """Central finite differences against analytic gradients, per scalar.

    Relative error is |a - n| / max(|a|, |n|, 1e-12); the report carries the
    worst offender's path.  Parameters must be float64 and are perturbed in
    place (restored afterwards).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    worst = 0.0
    worst_path = ""
    checked = 0
    numeric: dict[str, np.ndarray] = {}
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(f"{name}: finite differences need float64 parameters")
        num = np.zeros_like(p)
        flat = p.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn(params)
            flat[i] = orig - eps
            down = loss_fn(params)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NonFiniteGradientError(f"non-finite loss while probing {name}[{i}]")
            nflat[i] = (up - down) / (2.0 * eps)
            a = float(analytic[name].reshape(-1)[i])
            rel = abs(a - nflat[i]) / max(abs(a), abs(nflat[i]), 1e-12)
            checked += 1
            if rel > worst:
                worst = rel
                idx = np.unravel_index(i, p.shape)
                worst_path = f"{name}{list(idx)}"
        numeric[name] = num
    return GradCheckReport(max_rel_err=worst, worst_param=worst_path, n_checked=checked, numeric=numeric)
