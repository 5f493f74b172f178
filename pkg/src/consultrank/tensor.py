"""A minimal dense autodiff engine on float64 numpy arrays.

Forward ops record their parents and a backward closure; `backward` walks
the recorded graph once in reverse topological order and accumulates
gradients into every tracked leaf.  The graph is rebuilt on every forward
pass, there is no broadcasting beyond what the ops define, and everything
is 64-bit, so finite-difference checks can run at tight tolerances.

Also here: the Adam optimizer the training loop uses, and the JSON
checkpoint format for named parameter sets.
"""

from __future__ import annotations

import json
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

CHECKPOINT_MAGIC = "tensor-checkpoint-v1"


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_spent")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None
        self._spent = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(rng: np.random.Generator, shape, scale: float) -> Tensor:
    """A tracked leaf initialized uniformly in [-scale, scale]."""
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


def _track(parents: Sequence[Tensor]) -> bool:
    return any(p.requires_grad or p._parents for p in parents)


def _out(data, parents: Sequence[Tensor], backward) -> Tensor:
    t = Tensor(data, requires_grad=False, _parents=tuple(parents) if _track(parents) else ())
    if t._parents:
        t._backward = backward
    return t


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"cannot add shapes {a.shape} and {b.shape}")
    out = _out(a.data + b.data, (a, b), None)
    if out._parents:
        def backward(g):
            _accum(a, g)
            _accum(b, g)
        out._backward = backward
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = _out(a.data * s, (a,), None)
    if out._parents:
        out._backward = lambda g: _accum(a, g * s)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product following numpy's 1-D and 2-D matmul rules."""
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ValueError(f"matmul supports 1-D/2-D only, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.data.shape[0]:
        raise ValueError(f"cannot matmul shapes {a.shape} and {b.shape}")
    out = _out(a.data @ b.data, (a, b), None)
    if out._parents:
        def backward(g):
            ad, bd = a.data, b.data
            if ad.ndim == 2 and bd.ndim == 2:
                _accum(a, g @ bd.T)
                _accum(b, ad.T @ g)
            elif ad.ndim == 1 and bd.ndim == 2:
                _accum(a, bd @ g)
                _accum(b, np.outer(ad, g))
            elif ad.ndim == 2 and bd.ndim == 1:
                _accum(a, np.outer(g, bd))
                _accum(b, ad.T @ g)
            else:
                _accum(a, g * bd)
                _accum(b, g * ad)
        out._backward = backward
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose needs a 2-D input, got {a.shape}")
    out = _out(a.data.T, (a,), None)
    if out._parents:
        out._backward = lambda g: _accum(a, g.T)
    return out


def row(a: Tensor, index: int) -> Tensor:
    """One row of an [n, d] matrix as a d-vector."""
    if a.data.ndim != 2:
        raise ValueError(f"row needs a 2-D input, got {a.shape}")
    if not 0 <= index < a.shape[0]:
        raise ValueError(f"row index {index} out of range for shape {a.shape}")
    out = _out(a.data[index], (a,), None)
    if out._parents:
        def backward(g):
            buf = np.zeros_like(a.data)
            buf[index] = g
            _accum(a, buf)
        out._backward = backward
    return out


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """Add a d-vector to every row of an [n, d] matrix."""
    if a.data.ndim != 2 or b.data.ndim != 1 or a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot broadcast-add shapes {a.shape} and {b.shape}")
    out = _out(a.data + b.data, (a, b), None)
    if out._parents:
        def backward(g):
            _accum(a, g)
            _accum(b, g.sum(axis=0))
        out._backward = backward
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"dot needs equal 1-D shapes, got {a.shape} and {b.shape}")
    out = _out(a.data @ b.data, (a, b), None)
    if out._parents:
        def backward(g):
            _accum(a, g * b.data)
            _accum(b, g * a.data)
        out._backward = backward
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = _out(y, (a,), None)
    if out._parents:
        out._backward = lambda g: _accum(a, g * (1.0 - y * y))
    return out


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, numerically stabilized."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _out(y, (a,), None)
    if out._parents:
        def backward(g):
            inner = (g * y).sum(axis=-1, keepdims=True)
            _accum(a, y * (g - inner))
        out._backward = backward
    return out


def embedding_lookup(table: Tensor, indices: Union[int, Sequence[int]]) -> Tensor:
    """Rows of a [n, d] table: one index gives [d], a list gives [len, d]."""
    if table.data.ndim != 2:
        raise ValueError(f"embedding table must be 2-D, got {table.shape}")
    single = isinstance(indices, (int, np.integer))
    idx = np.asarray([indices] if single else list(indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ValueError(
            f"index out of range for table with {table.shape[0]} rows: {idx.tolist()}"
        )
    data = table.data[idx[0]] if single else table.data[idx]
    out = _out(data, (table,), None)
    if out._parents:
        def backward(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g.reshape(idx.size, -1) if not single else g)
        out._backward = backward
    return out


def mean_pool(a: Tensor) -> Tensor:
    if a.data.ndim != 2 or a.shape[0] == 0:
        raise ValueError(f"mean_pool needs a non-empty [n, d] input, got {a.shape}")
    n = a.shape[0]
    out = _out(a.data.mean(axis=0), (a,), None)
    if out._parents:
        out._backward = lambda g: _accum(a, np.repeat(g[None, :], n, axis=0) / n)
    return out


def concat(rows: Sequence[Tensor]) -> Tensor:
    """Stack d-vectors into an [n, d] matrix."""
    if not rows:
        raise ValueError("concat needs at least one row")
    d = rows[0].shape
    for r in rows:
        if r.data.ndim != 1 or r.shape != d:
            raise ValueError(f"concat needs equal 1-D rows, got {d} and {r.shape}")
    out = _out(np.stack([r.data for r in rows]), tuple(rows), None)
    if out._parents:
        def backward(g):
            for i, r in enumerate(rows):
                _accum(r, g[i])
        out._backward = backward
    return out


def l2_norm_sq(a: Tensor) -> Tensor:
    out = _out(np.sum(a.data * a.data), (a,), None)
    if out._parents:
        out._backward = lambda g: _accum(a, 2.0 * g * a.data)
    return out


def pick(a: Tensor, index: int) -> Tensor:
    if a.data.ndim != 1:
        raise ValueError(f"pick needs a 1-D input, got {a.shape}")
    if not 0 <= index < a.shape[0]:
        raise ValueError(f"pick index {index} out of range for shape {a.shape}")
    out = _out(a.data[index], (a,), None)
    if out._parents:
        def backward(g):
            buf = np.zeros_like(a.data)
            buf[index] = g
            _accum(a, buf)
        out._backward = backward
    return out


def nll_index(logits: Tensor, index: int) -> Tensor:
    """Negative log-softmax probability of one position, computed stably.

    Equivalent to -log(softmax(logits)[index]) but safe for extreme logit
    gaps: the log-sum-exp is shifted by the max before exponentiation.
    """
    if logits.data.ndim != 1:
        raise ValueError(f"nll_index needs 1-D logits, got {logits.shape}")
    if not 0 <= index < logits.shape[0]:
        raise ValueError(f"index {index} out of range for shape {logits.shape}")
    z = logits.data
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    out = _out(lse - z[index], (logits,), None)
    if out._parents:
        def backward(g):
            p = np.exp(z - lse)
            p[index] -= 1.0
            _accum(logits, g * p)
        out._backward = backward
    return out


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss into all tracked leaves.

    Each graph may be swept once; rebuilding the forward pass is the way to
    get fresh gradients.  Leaves without requires_grad end with grad None.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._spent:
        raise RuntimeError("backward already ran on this graph; rebuild the forward pass")
    loss._spent = True

    topo: List[Tensor] = []
    seen = set()
    stack: List[tuple] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in topo:
        if not node.requires_grad and node is not loss:
            node.grad = None


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


class AdamState:
    """Adam moments and step counter for a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]


def adam_step(state: AdamState) -> None:
    """One bias-corrected Adam update over the state's parameter list.

    Parameters whose grad is None (no gradient flowed this step) are left
    untouched, moments included.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for i, p in enumerate(state.params):
        if p.grad is None:
            continue
        g = p.grad
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / (1.0 - b1**t)
        v_hat = state.v[i] / (1.0 - b2**t)
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def save_checkpoint(named: Dict[str, Tensor], path, extra: Optional[dict] = None) -> None:
    """Write named parameters as versioned JSON; `extra` rides along as-is."""
    payload = {
        "format": CHECKPOINT_MAGIC,
        "params": {
            name: {"shape": list(t.data.shape), "values": t.data.reshape(-1).tolist()}
            for name, t in sorted(named.items())
        },
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path) -> tuple:
    """Read a checkpoint; returns ({name: array}, extra-dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_MAGIC:
        raise ValueError(
            f"not a recognized checkpoint (format={payload.get('format')!r})"
        )
    arrays = {
        name: np.asarray(spec["values"], dtype=np.float64).reshape(spec["shape"])
        for name, spec in payload["params"].items()
    }
    return arrays, payload.get("extra", {})
