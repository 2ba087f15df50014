"""Stochastic problems: analytic Lipschitz test functions with closed-form
smoothed gradients, and network problems over datasets.

A problem exposes the per-sample loss ``value(w, xi)``, its backprop gradient
``bp_gradient(w, xi)`` (a fixed measurable selection at kinks), a sampler for
``xi``, and Lipschitz metadata: ``L0`` bounds the mean per-sample Lipschitz
constant over the trusted box of radius ``kappa`` and ``Q`` bounds its second
moment.  Network problems carry no analytic constants; estimate them with
:mod:`sparseopt.estimation` and attach via ``set_lipschitz_metadata``.
"""

from __future__ import annotations

import math

import numpy as np

from .constraint import GroupPartition
from .datasets import Dataset, load_idx_dataset, make_blobs
from .tinynet import BlobNetSpec, Conv2d, Flatten, Linear, MaxPool2d, ReLU, TinyNet, build_blob_net

__all__ = [
    "StochasticProblem",
    "AbsSum",
    "Quadratic",
    "MaxAffine",
    "TinyNetProblem",
    "builtin_problem",
]


class StochasticProblem:
    """Base interface; concrete problems fill in the attributes below."""

    d: int
    kappa: float
    L0: float | None
    Q: float | None

    def value(self, w, xi) -> float:
        raise NotImplementedError

    def bp_gradient(self, w, xi) -> np.ndarray:
        raise NotImplementedError

    def sample_xi(self, rng: np.random.Generator):
        return None

    def lipschitz_xi(self, xi) -> float:
        """Per-sample Lipschitz bound over the trusted box; defaults to L0."""
        if self.L0 is None:
            raise ValueError("problem has no Lipschitz metadata")
        return self.L0

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-0.5, 0.5, size=self.d)


def _as_vector(x, d: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full(d, float(arr))
    if arr.shape != (d,):
        raise ValueError(f"{name} has shape {arr.shape}, expected ({d},)")
    return arr


def _smoothed_abs(t: np.ndarray, alpha: float) -> np.ndarray:
    # Exact smoothing of |t| by a centered uniform of width alpha.
    inner = np.abs(t) < alpha / 2.0
    return np.where(inner, t * t / alpha + alpha / 4.0, np.abs(t))


class AbsSum(StochasticProblem):
    """c * ||w - shift||_1 plus optional additive noise c_noise * xi.

    The additive noise leaves every gradient untouched but makes single
    evaluations stochastic.  L0 = c * sqrt(d) exactly (tight along the
    diagonal direction), so Q = c^2 * d.
    """

    def __init__(self, d: int, c: float = 1.0, shift=0.0, noise: float = 0.0, kappa: float = math.inf):
        if d < 1:
            raise ValueError(f"d must be >= 1, got {d}")
        if c < 0 or noise < 0:
            raise ValueError("c and noise must be nonnegative")
        self.d = int(d)
        self.c = float(c)
        self.shift = _as_vector(shift, self.d, "shift")
        self.noise = float(noise)
        self.kappa = float(kappa)
        self.L0 = self.c * math.sqrt(self.d)
        self.Q = self.c * self.c * self.d

    def value(self, w, xi) -> float:
        base = self.c * float(np.sum(np.abs(np.asarray(w) - self.shift)))
        if self.noise and xi is not None:
            base += self.noise * float(xi)
        return base

    def bp_gradient(self, w, xi) -> np.ndarray:
        return self.c * np.sign(np.asarray(w, dtype=float) - self.shift)

    def sample_xi(self, rng):
        return float(rng.standard_normal()) if self.noise else None

    def smoothed_value(self, w, alpha: float) -> float:
        return self.c * float(np.sum(_smoothed_abs(np.asarray(w) - self.shift, alpha)))

    def smoothed_gradient(self, w, alpha: float) -> np.ndarray:
        t = np.asarray(w, dtype=float) - self.shift
        return self.c * np.clip(2.0 * t / alpha, -1.0, 1.0)


class Quadratic(StochasticProblem):
    """0.5 * ||w - wstar - xi||^2 with xi uniform in a Euclidean ball.

    Over the box of radius kappa the gradient norm is bounded by
    sqrt(sum_j (kappa + |wstar_j|)^2) plus the noise radius; that bound is the
    declared L0 (exact and tight when the noise radius is 0) and Q = L0^2.
    """

    def __init__(self, d: int, wstar=0.0, noise_radius: float = 0.0, kappa: float = 1.0):
        if d < 1:
            raise ValueError(f"d must be >= 1, got {d}")
        if noise_radius < 0:
            raise ValueError("noise_radius must be nonnegative")
        if not (math.isfinite(kappa) and kappa > 0):
            raise ValueError("quadratic problems need a finite positive kappa")
        self.d = int(d)
        self.wstar = _as_vector(wstar, self.d, "wstar")
        self.noise_radius = float(noise_radius)
        self.kappa = float(kappa)
        self.L0 = float(np.linalg.norm(self.kappa + np.abs(self.wstar))) + self.noise_radius
        self.Q = self.L0 * self.L0

    def value(self, w, xi) -> float:
        delta = np.asarray(w, dtype=float) - self.wstar
        if xi is not None:
            delta = delta - xi
        return 0.5 * float(delta @ delta)

    def bp_gradient(self, w, xi) -> np.ndarray:
        delta = np.asarray(w, dtype=float) - self.wstar
        if xi is not None:
            delta = delta - xi
        return delta

    def sample_xi(self, rng):
        if self.noise_radius == 0:
            return None
        z = rng.standard_normal(self.d)
        z /= np.linalg.norm(z)
        return self.noise_radius * rng.random() ** (1.0 / self.d) * z

    def lipschitz_xi(self, xi) -> float:
        center = self.wstar if xi is None else self.wstar + xi
        return float(np.linalg.norm(self.kappa + np.abs(center)))

    def smoothed_value(self, w, alpha: float) -> float:
        delta = np.asarray(w, dtype=float) - self.wstar
        noise_sq = (
            self.noise_radius**2 * self.d / (self.d + 2) if self.noise_radius else 0.0
        )
        return 0.5 * float(delta @ delta) + self.d * alpha * alpha / 24.0 + 0.5 * noise_sq

    def smoothed_gradient(self, w, alpha: float) -> np.ndarray:
        return np.asarray(w, dtype=float) - self.wstar


class MaxAffine(StochasticProblem):
    """max_k <a_k, w> + b_k, deterministic; ties pick the first maximizing
    piece so the gradient is a fixed measurable selection."""

    def __init__(self, a, b, kappa: float = math.inf):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        if self.a.shape[0] != self.b.shape[0]:
            raise ValueError(
                f"{self.a.shape[0]} affine pieces but {self.b.shape[0]} offsets"
            )
        self.d = self.a.shape[1]
        self.kappa = float(kappa)
        self.L0 = float(np.max(np.linalg.norm(self.a, axis=1)))
        self.Q = self.L0 * self.L0

    def value(self, w, xi) -> float:
        return float(np.max(self.a @ np.asarray(w, dtype=float) + self.b))

    def bp_gradient(self, w, xi) -> np.ndarray:
        scores = self.a @ np.asarray(w, dtype=float) + self.b
        return self.a[int(np.argmax(scores))].copy()


class TinyNetProblem(StochasticProblem):
    """Cross-entropy of a tiny network over a finite dataset; xi is a sample
    index.  Lipschitz metadata starts unset and is attached after sampling
    estimation."""

    def __init__(self, net: TinyNet, dataset: Dataset, kappa: float = 1.0):
        self.net = net
        self.dataset = dataset
        self.d = net.d
        self.kappa = float(kappa)
        self.L0 = None
        self.Q = None

    @property
    def dataset_size(self) -> int:
        return self.dataset.n

    def _sample(self, xi):
        idx = int(xi)
        x = self.dataset.features[idx]
        if x.ndim == 1:
            side = self.net.input_shape[-1]
            x = x.reshape(self.net.input_shape[0], side, side)
        elif x.ndim == 2:
            x = x[None, :, :]
        return x, int(self.dataset.labels[idx])

    def value(self, w, xi) -> float:
        x, y = self._sample(xi)
        return self.net.loss(w, x, y)

    def bp_gradient(self, w, xi) -> np.ndarray:
        x, y = self._sample(xi)
        return self.net.bp_gradient(w, x, y)

    def sample_xi(self, rng):
        return int(rng.integers(self.dataset.n))

    def set_lipschitz_metadata(self, L0: float, Q: float) -> None:
        self.L0 = float(L0)
        self.Q = float(Q)

    def partition(self, budget: float) -> GroupPartition:
        return GroupPartition(
            dims=tuple(self.net.group_dims),
            penalties=tuple(float(g) for g in self.net.group_dims),
            budget=budget,
        )

    @property
    def structural_blocks(self) -> list[tuple[int, int]]:
        return self.net.layer_blocks

    def initial_point(self, rng) -> np.ndarray:
        # Kaiming-style: each group scaled by the inverse root of its fan-in.
        w = np.empty(self.d)
        off = 0
        for gd in self.net.group_dims:
            fan_in = max(gd - 1, 1)
            w[off : off + gd] = rng.standard_normal(gd) * math.sqrt(2.0 / fan_in)
            off += gd
        return w

    def accuracy(self, w) -> float:
        hits = 0
        for idx in range(self.dataset.n):
            x, y = self._sample(idx)
            hits += int(self.net.predict(w, x) == y)
        return hits / self.dataset.n


def builtin_problem(name: str, **params) -> StochasticProblem:
    """Factory for the named test problems."""
    if name == "abs_sum":
        return AbsSum(**params)
    if name == "quadratic":
        return Quadratic(**params)
    if name == "max_affine":
        return MaxAffine(**params)
    if name == "tinynet_blobs":
        spec = BlobNetSpec(
            side=int(params.pop("side", 6)),
            filters=int(params.pop("filters", 4)),
            kernel=int(params.pop("kernel", 3)),
            hidden=int(params.pop("hidden", 12)),
            classes=int(params.pop("classes", 3)),
        )
        num_points = int(params.pop("num_points", 1000))
        spread = float(params.pop("spread", 0.3))
        radius = float(params.pop("radius", 1.0))
        kappa = float(params.pop("kappa", 1.0))
        data_seed = int(params.pop("data_seed", 0))
        if params:
            raise ValueError(f"unknown tinynet_blobs parameters: {sorted(params)}")
        rng = np.random.default_rng(data_seed)
        data = make_blobs(
            num_points, spec.classes, spread, rng, dim=spec.side * spec.side, radius=radius
        )
        return TinyNetProblem(build_blob_net(spec), data, kappa=kappa)
    if name == "tinynet_idx":
        images = params.pop("images")
        labels = params.pop("labels")
        filters = int(params.pop("filters", 6))
        hidden = int(params.pop("hidden", 24))
        classes = int(params.pop("classes", 10))
        kappa = float(params.pop("kappa", 0.2))
        limit = params.pop("limit", None)
        if params:
            raise ValueError(f"unknown tinynet_idx parameters: {sorted(params)}")
        data = load_idx_dataset(images, labels)
        if limit is not None:
            data = Dataset(features=data.features[: int(limit)], labels=data.labels[: int(limit)])
        side = data.features.shape[1]
        if data.features.shape[1] != data.features.shape[2]:
            raise ValueError("only square images are supported")
        conv_out = side - 5 + 1
        if conv_out % 2:
            raise ValueError(f"image side {side} incompatible with a 5x5 conv and 2x2 pool")
        flat = filters * (conv_out // 2) ** 2
        net = TinyNet(
            [
                Conv2d(1, filters, 5),
                ReLU(),
                MaxPool2d(2),
                Flatten(),
                Linear(flat, hidden),
                ReLU(),
                Linear(hidden, classes),
            ],
            input_shape=(1, side, side),
            classes=classes,
        )
        return TinyNetProblem(net, data, kappa=kappa)
    raise ValueError(f"unknown problem {name!r}")
