"""Small convolutional classifier with hand-coded gradients.

Everything is numpy, channel-last (N, H, W, C), with HWIO convolution
weights. The backward pass is written out explicitly so the attack loop
can get exact gradients with respect to the *input image*, not just the
parameters. Convolutions run via im2col.

Architecture (input 64x64x3):
    conv 3x3, 16, pad 1 -> relu -> maxpool 2
    conv 3x3, 32, pad 1 -> relu -> maxpool 2
    conv 3x3, 64, pad 1 -> relu -> global average pool
    fc 64 -> n_classes
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"PPNET1"

_LAYER_ORDER = ("w1", "b1", "w2", "b2", "w3", "b3", "wf", "bf")


def _im2col(x: np.ndarray, ksize: int, pad: int) -> np.ndarray:
    """(N,H,W,C) -> (N*H*W, ksize*ksize*C) patches, stride 1."""
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    s = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, h, w, ksize, ksize, c),
        strides=(s[0], s[1], s[2], s[1], s[2], s[3]),
        writeable=False,
    )
    return view.reshape(n * h * w, ksize * ksize * c)


def _col2im(cols: np.ndarray, x_shape: tuple, ksize: int, pad: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back to the input."""
    n, h, w, c = x_shape
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c))
    cols = cols.reshape(n, h, w, ksize, ksize, c)
    for ki in range(ksize):
        for kj in range(ksize):
            xp[:, ki:ki + h, kj:kj + w, :] += cols[:, :, :, ki, kj, :]
    return xp[:, pad:pad + h, pad:pad + w, :]


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, h, wid, _ = x.shape
    k = w.shape[0]
    cols = _im2col(x, k, pad=k // 2)
    wm = w.reshape(-1, w.shape[3])
    out = cols @ wm + b
    return out.reshape(n, h, wid, w.shape[3]), cols


def _conv_backward(grad: np.ndarray, cols: np.ndarray, x_shape: tuple,
                   w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = w.shape[0]
    g = grad.reshape(-1, w.shape[3])
    gw = (cols.T @ g).reshape(w.shape)
    gb = g.sum(axis=0)
    gcols = g @ w.reshape(-1, w.shape[3]).T
    gx = _col2im(gcols, x_shape, k, pad=k // 2)
    return gx, gw, gb


def _maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 stride-2 max pool; returns output and flat argmax per window."""
    n, h, w, c = x.shape
    xr = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    xr = xr.reshape(n, h // 2, w // 2, c, 4)
    arg = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _maxpool_backward(grad: np.ndarray, arg: np.ndarray, x_shape: tuple) -> np.ndarray:
    n, h, w, c = x_shape
    gx = np.zeros((n, h // 2, w // 2, c, 4))
    np.put_along_axis(gx, arg[..., None], grad[..., None], axis=-1)
    gx = gx.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return gx.reshape(n, h, w, c)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


@dataclass
class TinyConvNet:
    """The classifier under attack. Parameters live in ``params``."""

    n_classes: int
    input_size: int = 64
    params: dict = field(default_factory=dict)

    CHANNELS = (16, 32, 64)

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if self.input_size % 4 != 0:
            raise ValueError(f"input_size must be divisible by 4, got {self.input_size}")
        if not self.params:
            self.params = self._zero_params()

    def _shapes(self) -> dict:
        c1, c2, c3 = self.CHANNELS
        return {
            "w1": (3, 3, 3, c1), "b1": (c1,),
            "w2": (3, 3, c1, c2), "b2": (c2,),
            "w3": (3, 3, c2, c3), "b3": (c3,),
            "wf": (c3, self.n_classes), "bf": (self.n_classes,),
        }

    def _zero_params(self) -> dict:
        return {k: np.zeros(v) for k, v in self._shapes().items()}

    def init_params(self, rng: np.random.Generator) -> None:
        """He-normal conv weights, scaled-normal fc, zero biases."""
        for name, shape in self._shapes().items():
            if name.startswith("b"):
                self.params[name] = np.zeros(shape)
            elif name == "wf":
                fan_in = shape[0]
                self.params[name] = rng.normal(0.0, np.sqrt(1.0 / fan_in), shape)
            else:
                fan_in = shape[0] * shape[1] * shape[2]
                self.params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self._shapes().values())

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            x = x[None]
        s = self.input_size
        if x.ndim != 4 or x.shape[1:] != (s, s, 3):
            raise ValueError(f"expected (N, {s}, {s}, 3) input, got {x.shape}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits of shape (N, n_classes)."""
        logits, _ = self.forward_with_cache(x)
        return logits

    def forward_with_cache(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        # inputs are centered internally; gradients wrt the raw [0,1]
        # pixels are unchanged by the constant shift
        x = self._check_input(x) - 0.5
        p = self.params
        cache: dict = {"x": x}

        z1, cols1 = _conv_forward(x, p["w1"], p["b1"])
        a1 = np.maximum(z1, 0.0)
        p1, arg1 = _maxpool_forward(a1)
        cache.update(z1=z1, cols1=cols1, a1_shape=a1.shape, arg1=arg1)

        z2, cols2 = _conv_forward(p1, p["w2"], p["b2"])
        a2 = np.maximum(z2, 0.0)
        p2, arg2 = _maxpool_forward(a2)
        cache.update(p1=p1, z2=z2, cols2=cols2, a2_shape=a2.shape, arg2=arg2)

        z3, cols3 = _conv_forward(p2, p["w3"], p["b3"])
        a3 = np.maximum(z3, 0.0)
        g = a3.mean(axis=(1, 2))
        cache.update(p2=p2, z3=z3, cols3=cols3, a3_shape=a3.shape, g=g)

        logits = g @ p["wf"] + p["bf"]
        return logits, cache

    def backward(self, grad_logits: np.ndarray, cache: dict,
                 want_input_grad: bool = False) -> tuple[dict, np.ndarray | None]:
        """Backprop from d(loss)/d(logits). Returns (param grads, input grad)."""
        p = self.params
        g = cache["g"]
        grads = {
            "wf": g.T @ grad_logits,
            "bf": grad_logits.sum(axis=0),
        }

        n, h3, w3, _ = cache["a3_shape"]
        gg = grad_logits @ p["wf"].T
        ga3 = np.broadcast_to(gg[:, None, None, :] / (h3 * w3), cache["a3_shape"]).copy()
        gz3 = ga3 * (cache["z3"] > 0.0)
        gp2, grads["w3"], grads["b3"] = _conv_backward(gz3, cache["cols3"], cache["p2"].shape, p["w3"])

        ga2 = _maxpool_backward(gp2, cache["arg2"], cache["a2_shape"])
        gz2 = ga2 * (cache["z2"] > 0.0)
        gp1, grads["w2"], grads["b2"] = _conv_backward(gz2, cache["cols2"], cache["p1"].shape, p["w2"])

        ga1 = _maxpool_backward(gp1, cache["arg1"], cache["a1_shape"])
        gz1 = ga1 * (cache["z1"] > 0.0)
        gx, grads["w1"], grads["b1"] = _conv_backward(gz1, cache["cols1"], cache["x"].shape, p["w1"])

        return grads, (gx if want_input_grad else None)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Argmax class labels, shape (N,)."""
        return self.forward(x).argmax(axis=-1)

    def target_log_prob(self, x: np.ndarray, target: int) -> np.ndarray:
        """log p(target | x) per image, shape (N,)."""
        if not 0 <= target < self.n_classes:
            raise ValueError(f"target {target} out of range [0, {self.n_classes})")
        return log_softmax(self.forward(x))[:, target]

    def input_gradient(self, x: np.ndarray, target: int) -> np.ndarray:
        """d mean_n log p(target | x_n) / dx, same shape as x (batched)."""
        _, gx = self.objective_and_input_grad(x, target)
        return gx

    def objective_and_input_grad(self, x: np.ndarray, target: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-image log p(target | x) and the gradient of their mean, one pass."""
        if not 0 <= target < self.n_classes:
            raise ValueError(f"target {target} out of range [0, {self.n_classes})")
        x = self._check_input(x)
        logits, cache = self.forward_with_cache(x)
        logp = log_softmax(logits)[:, target]
        probs = softmax(logits)
        n = x.shape[0]
        grad_logits = -probs / n
        grad_logits[:, target] += 1.0 / n
        _, gx = self.backward(grad_logits, cache, want_input_grad=True)
        return logp, gx


def cross_entropy_and_grad(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and d(loss)/d(logits)."""
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -float(logp[np.arange(n), labels].mean())
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def train_classifier(net: TinyConvNet, train_x: np.ndarray, train_y: np.ndarray,
                     val_x: np.ndarray, val_y: np.ndarray, *,
                     epochs: int = 30, batch_size: int = 32, lr: float = 1e-1,
                     momentum: float = 0.9, seed: int = 0,
                     verbose: bool = False) -> dict:
    """Momentum SGD on cross-entropy with a fixed step-decay schedule.

    The base lr drops to 0.2x after 60% of the epochs and 0.05x after
    90%; without the decay this net plateaus well short of usable
    accuracy. Deterministic for a fixed seed: init, shuffling, and batch
    order all come from one generator seeded here.
    """
    rng = np.random.default_rng([seed, 1])
    net.init_params(rng)
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    n = train_x.shape[0]
    history = {"train_loss": [], "val_acc": []}

    for epoch in range(epochs):
        frac = epoch / epochs
        lr_now = lr * (1.0 if frac < 0.6 else (0.2 if frac < 0.9 else 0.05))
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            logits, cache = net.forward_with_cache(train_x[idx])
            loss, grad_logits = cross_entropy_and_grad(logits, train_y[idx])
            grads, _ = net.backward(grad_logits, cache)
            for k in net.params:
                velocity[k] = momentum * velocity[k] - lr_now * grads[k]
                net.params[k] = net.params[k] + velocity[k]
            losses.append(loss)
        val_acc = accuracy(net, val_x, val_y)
        history["train_loss"].append(float(np.mean(losses)))
        history["val_acc"].append(val_acc)
        if verbose:
            print(f"epoch {epoch + 1:2d}/{epochs}  loss {np.mean(losses):.4f}  val acc {val_acc:.4f}")
    return history


def accuracy(net: TinyConvNet, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    hits = 0
    for start in range(0, x.shape[0], batch_size):
        hits += int((net.predict(x[start:start + batch_size]) == y[start:start + batch_size]).sum())
    return hits / x.shape[0]


def save_model(net: TinyConvNet, path: str | Path) -> None:
    """Write the PPNET1 container: magic, header length, JSON header, params.

    Parameters are float64 little-endian, concatenated in the fixed layer
    order w1, b1, w2, b2, w3, b3, wf, bf, each flattened row-major.
    """
    header = {
        "format": "PPNET1",
        "n_classes": net.n_classes,
        "input_size": net.input_size,
        "channels": list(net.CHANNELS),
        "layers": list(_LAYER_ORDER),
        "dtype": "<f8",
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = b"".join(
        np.ascontiguousarray(net.params[k], dtype="<f8").tobytes() for k in _LAYER_ORDER
    )
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(hbytes)))
        f.write(hbytes)
        f.write(blob)


def load_model(path: str | Path) -> TinyConvNet:
    """Read a PPNET1 file, validating magic, header, and parameter count."""
    raw = Path(path).read_bytes()
    if raw[:6] != MAGIC:
        raise ValueError(f"bad magic {raw[:6]!r}, expected {MAGIC!r}")
    (hlen,) = struct.unpack("<I", raw[6:10])
    header = json.loads(raw[10:10 + hlen].decode("utf-8"))
    if header.get("format") != "PPNET1":
        raise ValueError(f"unexpected format field {header.get('format')!r}")
    net = TinyConvNet(n_classes=int(header["n_classes"]),
                      input_size=int(header.get("input_size", 64)))
    flat = np.frombuffer(raw[10 + hlen:], dtype="<f8")
    if flat.size != net.n_params():
        raise ValueError(f"parameter blob has {flat.size} values, expected {net.n_params()}")
    pos = 0
    shapes = net._shapes()
    for k in _LAYER_ORDER:
        cnt = int(np.prod(shapes[k]))
        net.params[k] = flat[pos:pos + cnt].reshape(shapes[k]).copy()
        pos += cnt
    return net
