"""Dense tanh networks with exact reverse-mode gradients, in float64 numpy.

Parameters of a network live in one flat array (``W0, b0, W1, b1, ...``,
weights row-major with shape ``(fan_out, fan_in)``). The array may be a view
into a larger parameter vector, so updates written into that vector are seen
by the network without copying.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class ForwardCache:
    """Activations kept by ``forward`` for the backward pass."""
    inputs: list[np.ndarray]   # input of every layer, batch-first
    output: np.ndarray


class Mlp:
    """Fully connected network, tanh on hidden layers and identity on the output."""

    def __init__(self, sizes: tuple[int, ...], flat: np.ndarray | None = None):
        if len(sizes) < 2:
            raise ValueError("an Mlp needs at least an input and an output size")
        self.sizes = tuple(int(s) for s in sizes)
        self._shapes: list[tuple[tuple[int, int], tuple[int]]] = [
            ((fan_out, fan_in), (fan_out,)) for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:])
        ]
        size = self.count_params(self.sizes)
        if flat is None:
            flat = np.zeros(size)
        if flat.shape != (size,) or flat.dtype != np.float64:
            raise ValueError(f"flat parameter buffer must be float64 of shape ({size},)")
        self.flat = flat

    @staticmethod
    def count_params(sizes: tuple[int, ...]) -> int:
        return sum(fan_out * fan_in + fan_out for fan_in, fan_out in zip(sizes[:-1], sizes[1:]))

    @property
    def n_params(self) -> int:
        return self.flat.size

    @property
    def n_layers(self) -> int:
        return len(self._shapes)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into the flat buffer for every layer."""
        out = []
        offset = 0
        for w_shape, b_shape in self._shapes:
            w_size = w_shape[0] * w_shape[1]
            W = self.flat[offset: offset + w_size].reshape(w_shape)
            offset += w_size
            b = self.flat[offset: offset + b_shape[0]]
            offset += b_shape[0]
            out.append((W, b))
        return out

    def named_arrays(self) -> dict[str, np.ndarray]:
        named = {}
        for idx, (W, b) in enumerate(self.layers()):
            named[f"W{idx}"] = W.copy()
            named[f"b{idx}"] = b.copy()
        return named

    def init(self, rng: np.random.Generator, hidden_gain: float = np.sqrt(2.0), output_gain: float = 1.0) -> None:
        """Orthogonal weights, zero biases."""
        for idx, (W, b) in enumerate(self.layers()):
            gain = output_gain if idx == self.n_layers - 1 else hidden_gain
            W[...] = gain * orthogonal(W.shape, rng)
            b[...] = 0.0

    def set_output_bias(self, bias: np.ndarray | float) -> None:
        self.layers()[-1][1][...] = bias

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x).output

    def forward_cached(self, x: np.ndarray) -> ForwardCache:
        """Forward pass over a batch (a single vector is treated as a batch of one)."""
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input dimension {self.sizes[0]}, got {h.shape[1]}")
        inputs = []
        for idx, (W, b) in enumerate(self.layers()):
            inputs.append(h)
            h = h @ W.T + b
            if idx < self.n_layers - 1:
                h = np.tanh(h)
        return ForwardCache(inputs=inputs, output=h)

    def backward(self, cache: ForwardCache, output_grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradients of ``sum(output * output_grad)``.

        Returns:
            (flat parameter gradient summed over the batch, input gradient per sample)
        """
        delta = np.asarray(output_grad, dtype=np.float64).reshape(cache.output.shape)
        grads: list[np.ndarray] = []
        layers = self.layers()
        for idx in range(self.n_layers - 1, -1, -1):
            W, _ = layers[idx]
            h_in = cache.inputs[idx]
            grads.append(delta.sum(axis=0))
            grads.append((delta.T @ h_in).ravel())
            delta = delta @ W
            if idx > 0:
                # h_in is the tanh output of the previous layer
                delta = delta * (1.0 - h_in ** 2)
        return np.concatenate(grads[::-1]), delta


def orthogonal(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Random (semi-)orthogonal matrix, sign-fixed so the result is unique per draw."""
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


class RunningNormalizer:
    """Feature standardization with running moments, frozen after a warm-up.

    Statistics start at zero mean and unit variance so an unfitted normalizer
    is the identity.
    """

    def __init__(self, dim: int, warmup: int = 10_000, clip: float = 10.0, eps: float = 1e-8):
        self.dim = dim
        self.warmup = warmup
        self.clip = clip
        self.eps = eps
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0

    @property
    def frozen(self) -> bool:
        return self.count >= self.warmup

    def update(self, batch: np.ndarray) -> None:
        """Merge a batch of raw features into the moments (no-op once frozen)."""
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if self.frozen or batch.shape[0] == 0:
            return
        n = batch.shape[0]
        batch_mean = batch.mean(axis=0)
        batch_var = batch.var(axis=0)
        if self.count == 0:
            self.mean, self.var, self.count = batch_mean, batch_var, n
            return
        total = self.count + n
        delta = batch_mean - self.mean
        m2 = self.var * self.count + batch_var * n + delta ** 2 * self.count * n / total
        self.mean = self.mean + delta * n / total
        self.var = m2 / total
        self.count = total

    def __call__(self, features: np.ndarray) -> np.ndarray:
        z = (np.asarray(features, dtype=np.float64) - self.mean) / np.sqrt(self.var + self.eps)
        return np.clip(z, -self.clip, self.clip)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": np.array([float(self.count)])}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.mean = np.array(arrays["mean"], dtype=np.float64)
        self.var = np.array(arrays["var"], dtype=np.float64)
        self.count = int(arrays["count"][0])
