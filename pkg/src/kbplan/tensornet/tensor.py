from __future__ import annotations

import numpy as np


class Tensor:
    """A value array paired with a same-shaped gradient buffer.

    Parameters of the engine are Tensors; activations travel between layers
    as plain ndarrays because only parameters accumulate gradients.
    """

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = np.asarray(data)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def copy(self) -> "Tensor":
        t = Tensor(self.data.copy())
        t.grad = self.grad.copy()
        return t
