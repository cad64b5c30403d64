"""Parameter store, dense / LSTM layers, Adam, and checkpoint I/O.

Layers register their weights in a shared :class:`ParamStore` so the training
loop can zero, step, and checkpoint everything uniformly. All math runs
through the tape in :mod:`motiongs.autodiff` at float64.
"""

from __future__ import annotations

import json
import numpy as np

from .autodiff import Tensor, as_tensor, concat

CHECKPOINT_VERSION = 1


class ParamStore:
    """Named parameter tensors plus their gradient buffers and Adam state."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64).copy(), requires_grad=True)
        t.grad = np.zeros_like(t.data)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = np.zeros_like(t.data)

    def adam_step(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, lr_for=None):
        """One Adam update with bias correction; zeroes gradients afterwards.

        `lr_for(name)` may override the learning rate per parameter.
        """
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
            rate = lr if lr_for is None else lr_for(name)
            if name not in self._m:
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            m, v = self._m[name], self._v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            mhat = m / (1.0 - beta1 ** t)
            vhat = v / (1.0 - beta2 ** t)
            p.data -= rate * mhat / (np.sqrt(vhat) + eps)
        self.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        for name, t in self.params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter '{name}'")
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch for '{name}': {src.shape} vs {t.data.shape}")
            t.data[...] = src


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


_ACTS = {
    "identity": lambda x: x,
    "relu": lambda x: x.relu(),
    "tanh": lambda x: x.tanh(),
    "sigmoid": lambda x: x.sigmoid(),
}


class DenseLayer:
    """Affine map y = act(W x + b) with W of shape (out, in).

    Accepts a single vector or a batch (..., in); the weight is applied to the
    trailing axis.
    """

    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int,
                 activation="identity", rng=None, zero_init=False):
        if activation not in _ACTS:
            raise ValueError(f"unknown activation '{activation}'")
        self.in_dim, self.out_dim = in_dim, out_dim
        self.activation = activation
        if zero_init:
            w = np.zeros((out_dim, in_dim))
        else:
            w = glorot_uniform(rng or np.random.default_rng(0), in_dim, out_dim)
        self.W = store.add(f"{name}/W", w)
        self.b = store.add(f"{name}/b", np.zeros(out_dim))

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"dense input dim {x.shape[-1]} != {self.in_dim}")
        y = x @ self.W.swapaxes(0, 1) + self.b
        return _ACTS[self.activation](y)


class LstmCell:
    """Standard LSTM recurrence with explicit (h, c) state.

    Gate parameters are stored stacked as W_x (4H, I) and W_h (4H, H) with row
    blocks ordered input, forget, candidate, output. The forget-gate bias is
    initialized to 1.
    """

    def __init__(self, store: ParamStore, name: str, input_dim: int, hidden_dim: int, rng=None):
        rng = rng or np.random.default_rng(0)
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        self.Wx = store.add(f"{name}/Wx", glorot_uniform(rng, input_dim, 4 * hidden_dim))
        self.Wh = store.add(f"{name}/Wh", glorot_uniform(rng, hidden_dim, 4 * hidden_dim))
        b = np.zeros(4 * hidden_dim)
        b[hidden_dim:2 * hidden_dim] = 1.0
        self.b = store.add(f"{name}/b", b)
        self.h: Tensor | None = None
        self.c: Tensor | None = None

    def reset_state(self):
        self.h = Tensor(np.zeros(self.hidden_dim))
        self.c = Tensor(np.zeros(self.hidden_dim))

    def step(self, x) -> tuple[Tensor, Tensor]:
        x = as_tensor(x)
        if x.shape != (self.input_dim,):
            raise ValueError(f"lstm input shape {x.shape} != ({self.input_dim},)")
        if self.h is None or self.c is None:
            raise RuntimeError("lstm state not initialized; call reset_state() first")
        H = self.hidden_dim
        z = self.Wx @ x + self.Wh @ self.h.reshape(H) + self.b
        i = z[0:H].sigmoid()
        f = z[H:2 * H].sigmoid()
        g = z[2 * H:3 * H].tanh()
        o = z[3 * H:4 * H].sigmoid()
        c = f * self.c + i * g
        h = o * c.tanh()
        self.h, self.c = h, c
        return h, c


class MLP:
    """Stack of dense layers; `acts` gives the activation after each layer."""

    def __init__(self, store, name, dims, acts=None, rng=None, zero_init_last=False):
        n = len(dims) - 1
        acts = acts or ["relu"] * (n - 1) + ["identity"]
        self.layers = [
            DenseLayer(store, f"{name}/l{i}", dims[i], dims[i + 1], acts[i], rng=rng,
                       zero_init=(zero_init_last and i == n - 1))
            for i in range(n)
        ]

    def __call__(self, x) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


# -- checkpoint container ----------------------------------------------------

def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    """Write a checkpoint: one JSON header line, then raw little-endian blobs."""
    entries = []
    offset = 0
    names = sorted(arrays)
    for name in names:
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "dtype": "<f8", "offset": offset})
        offset += a.nbytes
    header = {"version": CHECKPOINT_VERSION, "meta": meta or {}, "params": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (arrays, meta). Raises on version mismatch."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"checkpoint version {header.get('version')} != supported {CHECKPOINT_VERSION}")
        blob = fh.read()
    arrays = {}
    for e in header["params"]:
        shape = tuple(e["shape"])
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(blob, dtype=e["dtype"], count=count, offset=e["offset"])
        arrays[e["name"]] = a.reshape(shape).astype(np.float64)
    return arrays, header.get("meta", {})
