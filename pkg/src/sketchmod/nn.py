"""Parameter containers and basic layers on top of the autodiff tensors."""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeMismatch, Tensor, layer_norm


class Block:
    """Base container: anything holding Tensors or other Blocks as attributes.

    Parameter names are attribute paths ("refiner.layers.0.w_q"), unique by
    construction since each tensor lives at exactly one attribute path.
    """

    def named_parameters(self, prefix=""):
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor):
                yield name, value  # frozen params still belong to the model
            elif isinstance(value, Block):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Block):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor):
                        yield f"{name}.{i}", item

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def set_trainable(self, flag):
        for p in self.parameters():
            p.requires_grad = flag

    def state_dict(self):
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing}, unexpected={extra}")
        for name, t in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeMismatch(f"{name}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()

    def n_parameters(self):
        return sum(t.data.size for t in self.parameters())


class Linear(Block):
    def __init__(self, n_in, n_out, rng, bias=True):
        limit = np.sqrt(6.0 / (n_in + n_out))
        self.weight = Tensor(rng.uniform(-limit, limit, (n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True) if bias else None
        if self.bias is None:
            del self.bias  # keep the parameter walk free of placeholders
        self._n_in = n_in

    def __call__(self, x):
        if x.shape[-1] != self._n_in:
            raise ShapeMismatch(f"linear expects (..., {self._n_in}), got {x.shape}")
        out = x @ self.weight
        if hasattr(self, "bias"):
            out = out + self.bias
        return out


class LayerNorm(Block):
    def __init__(self, n, eps=1e-5):
        self.gain = Tensor(np.ones(n), requires_grad=True)
        self.shift = Tensor(np.zeros(n), requires_grad=True)
        self._eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gain, self.shift, eps=self._eps)


class MLP(Block):
    """Stack of linears with GeLU between hidden layers (none after the last)."""

    def __init__(self, dims, rng):
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = x.gelu()
        return x
