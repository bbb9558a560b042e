"""Miniature dense-network engine with channel-sliced weight sharing.

A MiniNet is a stack of fully connected layers over fixed physical
dimensions. A *path* is a per-connection pair of (input, output) channel
slices; forward and backward run entirely inside those slices, so one
physical parameter set can serve every sampled width of a supernet. Masked
momentum updates keep untouched channels bit-identical, which is what makes
slice extraction equal to standalone evaluation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .assign import Principle
from .space import SearchSpace, Width

_EPS = 1e-5
_MAGIC = b"MININET1"
_VERSION = 1


class DivergenceError(RuntimeError):
    """Raised when a loss or update becomes non-finite."""


Path = list[tuple[slice, slice]]


def path_slices(space: SearchSpace, principle: Principle, width: Width, side: str) -> Path:
    """Connection slices realizing `width` on one side of a supernet.

    side is "left" or "right"; the unilateral principle only has a left side.
    """
    mids = []
    for spec, c in zip(space.layers, width):
        slices = principle.side_slices(spec, c)
        if side == "left":
            mids.append(slices[0])
        elif side == "right":
            if len(slices) < 2:
                raise ValueError("unilateral principle has no right side")
            mids.append(slices[1])
        else:
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    ins = [slice(0, space.input_dim)] + mids
    outs = mids + [slice(0, space.output_dim)]
    return list(zip(ins, outs))


def identity_path(dims: list[int]) -> Path:
    """Full-width path for a standalone network."""
    return [(slice(0, din), slice(0, dout)) for din, dout in zip(dims[:-1], dims[1:])]


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    n = logits.shape[0]
    loss = float(np.mean(lse - z[np.arange(n), labels]))
    probs = np.exp(z - lse[:, None])
    probs[np.arange(n), labels] -= 1.0
    return loss, probs / n


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


class GradBatch:
    """Gradient accumulator over one or more paths of the same network.

    Keeps full-shape arrays plus boolean masks of the touched entries, so an
    update can apply momentum exactly once per touched cell even when two
    paths overlap in the middle channels.
    """

    def __init__(self, net: "MiniNet"):
        self.gw = [np.zeros_like(w) for w in net.weights]
        self.gb = [np.zeros_like(b) for b in net.biases]
        self.mw = [np.zeros(w.shape, dtype=bool) for w in net.weights]
        self.mb = [np.zeros(b.shape, dtype=bool) for b in net.biases]

    def add_rect(self, k: int, out_sl: slice, in_sl: slice,
                 gw: np.ndarray, gb: np.ndarray, coef: float) -> None:
        self.gw[k][out_sl, in_sl] += coef * gw
        self.gb[k][out_sl] += coef * gb
        self.mw[k][out_sl, in_sl] = True
        self.mb[k][out_sl] = True


class MiniNet:
    """Dense ReLU classifier over fixed physical dims, trained through paths.

    dims = [input_dim, width_1, ..., width_L, output_dim]. Hidden
    pre-activations can be standardized per feature with the statistics of
    the current batch (no learned scale or shift; the same rule is used at
    evaluation time).
    """

    def __init__(self, dims: list[int], rng: np.random.Generator, standardize: bool = False):
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"bad layer dims {dims}")
        self.dims = [int(d) for d in dims]
        self.standardize = bool(standardize)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            # fan-in-scaled uniform for weights and biases; nonzero biases
            # keep relu pre-activations off the exact kink even when a unit's
            # inputs all die, so finite-difference checks stay valid
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))
        self.vel_w = [np.zeros_like(w) for w in self.weights]
        self.vel_b = [np.zeros_like(b) for b in self.biases]

    @property
    def num_connections(self) -> int:
        return len(self.weights)

    @classmethod
    def supernet(cls, space: SearchSpace, principle: Principle,
                 rng: np.random.Generator, standardize: bool = False) -> "MiniNet":
        phys = [principle.physical_width(spec) for spec in space.layers]
        return cls([space.input_dim, *phys, space.output_dim], rng, standardize)

    @classmethod
    def standalone(cls, space: SearchSpace, width: Width,
                   rng: np.random.Generator, standardize: bool = False) -> "MiniNet":
        w = space.validate(width)
        return cls([space.input_dim, *w, space.output_dim], rng, standardize)

    def full_path(self) -> Path:
        return identity_path(self.dims)

    # forward / backward ---------------------------------------------------

    def _forward(self, x: np.ndarray, path: Path, want_cache: bool):
        if len(path) != self.num_connections:
            raise ValueError(
                f"path has {len(path)} connections, net has {self.num_connections}"
            )
        a = x
        cache = [] if want_cache else None
        for k, (in_sl, out_sl) in enumerate(path):
            w = np.ascontiguousarray(self.weights[k][out_sl, in_sl])
            z = a @ w.T + self.biases[k][out_sl]
            if k == self.num_connections - 1:
                return z, cache
            if self.standardize:
                mean = z.mean(axis=0)
                var = z.var(axis=0)
                inv_std = 1.0 / np.sqrt(var + _EPS)
                h = (z - mean) * inv_std
            else:
                inv_std = None
                h = z
            a_next = np.maximum(h, 0.0)
            if want_cache:
                cache.append((a, w, h, inv_std))
            a = a_next
        raise AssertionError("unreachable")

    def forward(self, x: np.ndarray, path: Path) -> np.ndarray:
        logits, _ = self._forward(x, path, want_cache=False)
        return logits

    def loss(self, x: np.ndarray, y: np.ndarray, path: Path) -> float:
        loss, _ = softmax_cross_entropy(self.forward(x, path), y)
        return loss

    def forward_backward(self, x: np.ndarray, y: np.ndarray, path: Path,
                         into: GradBatch, coef: float = 1.0) -> tuple[float, int]:
        """Accumulate `coef` times this path's gradient; returns (loss, floats
        of hidden activations that had to be held for the backward pass)."""
        if len(path) != self.num_connections:
            raise ValueError(
                f"path has {len(path)} connections, net has {self.num_connections}"
            )
        batch = x.shape[0]
        a = x
        cache = []
        act_floats = 0
        for k, (in_sl, out_sl) in enumerate(path[:-1]):
            w = np.ascontiguousarray(self.weights[k][out_sl, in_sl])
            z = a @ w.T + self.biases[k][out_sl]
            if self.standardize:
                inv_std = 1.0 / np.sqrt(z.var(axis=0) + _EPS)
                h = (z - z.mean(axis=0)) * inv_std
            else:
                inv_std = None
                h = z
            cache.append((a, w, h, inv_std))
            width = out_sl.stop - out_sl.start
            act_floats += batch * width * (2 if self.standardize else 1)
            a = np.maximum(h, 0.0)
        in_sl, out_sl = path[-1]
        w_last = np.ascontiguousarray(self.weights[-1][out_sl, in_sl])
        logits = a @ w_last.T + self.biases[-1][out_sl]
        loss, g = softmax_cross_entropy(logits, y)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss}")

        into.add_rect(self.num_connections - 1, out_sl, in_sl, g.T @ a, g.sum(axis=0), coef)
        da = g @ w_last
        for k in range(self.num_connections - 2, -1, -1):
            in_sl, out_sl = path[k]
            a_in, w, h, inv_std = cache[k]
            dh = da * (h > 0.0)
            if self.standardize:
                n = dh.shape[0]
                dz = (inv_std / n) * (
                    n * dh - dh.sum(axis=0) - h * (dh * h).sum(axis=0)
                )
            else:
                dz = dh
            into.add_rect(k, out_sl, in_sl, dz.T @ a_in, dz.sum(axis=0), coef)
            if k > 0:
                da = dz @ w
        return loss, act_floats

    def sgd_step(self, grads: GradBatch, lr: float, momentum: float = 0.0) -> None:
        """Momentum SGD restricted to the entries the gradient batch touched.

        The step is atomic: a non-finite gradient anywhere aborts before any
        parameter is modified.
        """
        for k in range(self.num_connections):
            mw, mb = grads.mw[k], grads.mb[k]
            if (not np.isfinite(grads.gw[k][mw]).all()
                    or not np.isfinite(grads.gb[k][mb]).all()):
                raise DivergenceError(f"non-finite gradient in connection {k}")
        for k in range(self.num_connections):
            mw, mb = grads.mw[k], grads.mb[k]
            if not mw.any():
                continue
            self.vel_w[k][mw] = momentum * self.vel_w[k][mw] + grads.gw[k][mw]
            self.weights[k][mw] -= lr * self.vel_w[k][mw]
            self.vel_b[k][mb] = momentum * self.vel_b[k][mb] + grads.gb[k][mb]
            self.biases[k][mb] -= lr * self.vel_b[k][mb]


def extract_subnet(net: MiniNet, space: SearchSpace, principle: Principle,
                   width: Width, side: str) -> MiniNet:
    """Copy one path's weights out of a supernet into a standalone net.

    The standalone forward at full width reproduces the supernet forward
    through the same path exactly.
    """
    w = space.validate(width)
    path = path_slices(space, principle, w, side)
    sub = MiniNet([space.input_dim, *w, space.output_dim],
                  np.random.default_rng(0), standardize=net.standardize)
    for k, (in_sl, out_sl) in enumerate(path):
        sub.weights[k] = np.ascontiguousarray(net.weights[k][out_sl, in_sl])
        sub.biases[k] = net.biases[k][out_sl].copy()
    return sub


def grad_check(net: MiniNet, x: np.ndarray, y: np.ndarray, path: Path,
               rng: np.random.Generator, n_coords: int = 40, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients,
    probed at random touched coordinates."""
    grads = GradBatch(net)
    net.forward_backward(x, y, path, into=grads)
    worst = 0.0
    for _ in range(n_coords):
        k = int(rng.integers(net.num_connections))
        if rng.random() < 0.8:
            coords = np.argwhere(grads.mw[k])
            i, j = coords[rng.integers(len(coords))]
            param, analytic = net.weights[k], grads.gw[k][i, j]
            idx: tuple = (int(i), int(j))
        else:
            coords = np.argwhere(grads.mb[k])
            (i,) = coords[rng.integers(len(coords))]
            param, analytic = net.biases[k], grads.gb[k][i]
            idx = (int(i),)
        orig = param[idx]
        param[idx] = orig + h
        lp = net.loss(x, y, path)
        param[idx] = orig - h
        lm = net.loss(x, y, path)
        param[idx] = orig
        numeric = (lp - lm) / (2.0 * h)
        # the 1e-6 floor absorbs float64 cancellation noise on null-gradient
        # coordinates (e.g. biases under batch standardization) while leaving
        # genuine gradient errors orders of magnitude above it
        rel = abs(analytic - numeric) / max(1e-6, abs(analytic) + abs(numeric))
        worst = max(worst, rel)
    return worst


# checkpoints ---------------------------------------------------------------


def save_checkpoint(net: MiniNet, path: str, config_hash: str = "") -> None:
    """Binary snapshot: magic, version, config hash, dims, float64 LE arrays."""
    hash_bytes = config_hash.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IB", _VERSION, len(hash_bytes)))
        fh.write(hash_bytes)
        fh.write(struct.pack("<BI", int(net.standardize), len(net.dims)))
        fh.write(struct.pack(f"<{len(net.dims)}I", *net.dims))
        for w, b in zip(net.weights, net.biases):
            fh.write(w.astype("<f8").tobytes(order="C"))
            fh.write(b.astype("<f8").tobytes(order="C"))


def load_checkpoint(path: str) -> tuple[MiniNet, str]:
    """Inverse of save_checkpoint; returns (net, stored config hash)."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a network checkpoint")
        version, hash_len = struct.unpack("<IB", fh.read(5))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        config_hash = fh.read(hash_len).decode("ascii")
        standardize, n_dims = struct.unpack("<BI", fh.read(5))
        dims = list(struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims)))
        net = MiniNet(dims, np.random.default_rng(0), standardize=bool(standardize))
        for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            raw = fh.read(8 * fan_out * fan_in)
            net.weights[k] = np.frombuffer(raw, dtype="<f8").reshape(fan_out, fan_in).copy()
            raw = fh.read(8 * fan_out)
            net.biases[k] = np.frombuffer(raw, dtype="<f8").copy()
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    return net, config_hash


# synthetic data ------------------------------------------------------------


@dataclass(frozen=True)
class SynthDataset:
    """Train/validation split of a synthetic classification task."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    num_classes: int

    @property
    def input_dim(self) -> int:
        return self.x_train.shape[1]

    def batches(self, batch_size: int, rng: np.random.Generator):
        """Shuffled minibatch iterator over one training epoch."""
        order = rng.permutation(len(self.x_train))
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size]
            yield self.x_train[idx], self.y_train[idx]


def _split(x: np.ndarray, y: np.ndarray, n_train: int,
           rng: np.random.Generator) -> SynthDataset:
    order = rng.permutation(len(x))
    x, y = x[order], y[order]
    return SynthDataset(
        x_train=x[:n_train], y_train=y[:n_train],
        x_val=x[n_train:], y_val=y[n_train:],
        num_classes=int(y.max()) + 1,
    )


def gaussian_blobs(input_dim: int, num_classes: int, n_train: int, n_val: int,
                   rng: np.random.Generator, center_scale: float = 2.0) -> SynthDataset:
    """Isotropic gaussian clusters around random class centers."""
    total = n_train + n_val
    centers = rng.normal(scale=center_scale, size=(num_classes, input_dim))
    y = np.arange(total) % num_classes
    x = centers[y] + rng.normal(size=(total, input_dim))
    return _split(x, y, n_train, rng)


def two_spirals(num_arms: int, n_train: int, n_val: int,
                rng: np.random.Generator, noise: float = 0.08,
                winding: float = 1.5) -> SynthDataset:
    """Interleaved planar spirals, one arm per class; input_dim is 2."""
    total = n_train + n_val
    y = np.arange(total) % num_arms
    t = rng.uniform(0.0, 1.0, size=total)
    radius = 0.2 + 0.8 * t
    theta = 2.0 * np.pi * (y / num_arms + winding * t)
    x = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    x += rng.normal(scale=noise, size=x.shape)
    return _split(x, y, n_train, rng)
