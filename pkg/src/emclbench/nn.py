"""Dense ReLU network with exact backprop over a single flat parameter vector.

Parameter layout (stable across runs): layers in order, and for each layer the
weight matrix of shape ``(fan_in, fan_out)`` flattened row-major, followed by
its bias of length ``fan_out``.  Every optimizer in the package works on this
flat vector; per-layer arrays are zero-copy views into it.

ReLU'(0) is taken to be 0.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray
    task_id: int = 0
    head_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[None, :]
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )
        if self.head_mask is not None:
            self.head_mask = np.asarray(self.head_mask, dtype=np.int64)
            if not np.isin(self.labels, self.head_mask).all():
                raise ValueError("batch labels fall outside the head mask")

    def __len__(self):
        return self.labels.shape[0]

    def __getitem__(self, idx):
        """Sub-batch (an int yields a batch of one example)."""
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return Batch(self.inputs[idx], self.labels[idx], self.task_id, self.head_mask)


class MLP:
    """Feed-forward network: ReLU hidden layers, identity output layer.

    ``params`` owns all weights; ``layers()`` returns ``(W, b)`` views into it.
    """

    def __init__(self, layer_sizes: Sequence[int], params: Optional[np.ndarray] = None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        self.layer_sizes = sizes
        self._slices = []
        offset = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = slice(offset, offset + fan_in * fan_out)
            offset += fan_in * fan_out
            b = slice(offset, offset + fan_out)
            offset += fan_out
            self._slices.append((w, b, fan_in, fan_out))
        self.num_params = offset
        if params is None:
            self.params = np.zeros(offset)
        else:
            self.params = np.array(params, dtype=np.float64)
            if self.params.shape != (offset,):
                raise ValueError(f"expected {offset} parameters, got {self.params.shape}")

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def num_classes(self):
        return self.layer_sizes[-1]

    def copy(self):
        return MLP(self.layer_sizes, self.params)

    def flatten(self) -> np.ndarray:
        return self.params.copy()

    def assign(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.params.shape:
            raise ValueError(f"expected {self.params.shape}, got {values.shape}")
        self.params[...] = values

    def layers(self, params=None):
        """``[(W, b), ...]`` views into ``params`` (defaults to the model's own)."""
        p = self.params if params is None else params
        return [(p[w].reshape(fi, fo), p[b]) for w, b, fi, fo in self._slices]

    def forward(self, inputs, head_mask=None, params=None):
        logits, _ = self._forward(inputs, head_mask, params)
        return logits

    def _forward(self, inputs, head_mask, params):
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise ValueError(f"input width {x.shape[1]} != {self.input_dim}")
        layers = self.layers(params)
        acts = [x]
        for i, (W, b) in enumerate(layers):
            z = acts[-1] @ W + b
            if i < len(layers) - 1:
                z = np.maximum(z, 0.0)
            acts.append(z)
        logits = acts.pop()
        mask = _excluded(head_mask, self.num_classes)
        if mask is not None:
            logits[:, mask] = -np.inf
        return logits, acts

    def loss_and_grad(self, batch: Batch, params=None):
        """Mean softmax cross-entropy over the batch and its flat gradient."""
        n = len(batch)
        if n == 0:
            raise ValueError("empty batch")
        if not np.isfinite(batch.inputs).all():
            raise ValueError("non-finite values in batch inputs")
        logits, acts = self._forward(batch.inputs, batch.head_mask, params)
        probs, logp = _softmax(logits)
        rows = np.arange(n)
        loss = -logp[rows, batch.labels].sum() / n

        delta = probs
        delta[rows, batch.labels] -= 1.0
        delta /= n
        grad = np.empty(self.num_params)
        layers = self.layers(params)
        for i in range(len(layers) - 1, -1, -1):
            w, b, fi, fo = self._slices[i]
            a = acts[i]
            np.dot(a.T, delta, out=grad[w].reshape(fi, fo))
            grad[b] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ layers[i][0].T) * (a > 0.0)
        return loss, grad

    def loss(self, batch: Batch, params=None) -> float:
        logits = self.forward(batch.inputs, batch.head_mask, params)
        _, logp = _softmax(logits)
        return float(-logp[np.arange(len(batch)), batch.labels].mean())


def init_mlp(layer_sizes: Sequence[int], seed: int) -> MLP:
    """Fan-in scaled uniform weights (bound sqrt(6/fan_in)), zero biases."""
    model = MLP(layer_sizes)
    rng = np.random.default_rng(seed)
    for W, _ in model.layers():
        bound = np.sqrt(6.0 / W.shape[0])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return model


def loss_and_grad(model: MLP, batch: Batch, params=None):
    return model.loss_and_grad(batch, params)


def forward(model: MLP, inputs, head_mask=None, params=None):
    return model.forward(inputs, head_mask, params)


def _excluded(head_mask, num_classes):
    if head_mask is None:
        return None
    keep = np.zeros(num_classes, dtype=bool)
    keep[np.asarray(head_mask)] = True
    if keep.all():
        return None
    return ~keep


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e.sum(axis=1, keepdims=True)
    return e / s, shifted - np.log(s)
