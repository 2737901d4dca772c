"""Named parameters, non-trainable buffers and Adam state."""

from collections import OrderedDict
from typing import Iterable, Optional

import numpy as np

from .core import Tensor, get_default_dtype


class ParamSet:
    """Ordered name -> Tensor map with optimizer state.

    ``regularized`` names the kernels the L2 penalty applies to.  Buffers
    (batch-norm running statistics) are saved with the weights but never
    receive gradients.
    """

    def __init__(self):
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.buffers: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self.regularized: set = set()
        self.m: dict = {}
        self.v: dict = {}
        self.step = 0

    def add(self, name: str, value, regularized: bool = False) -> Tensor:
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.ascontiguousarray(value, dtype=get_default_dtype()), requires_grad=True, name=name)
        self.params[name] = t
        if regularized:
            self.regularized.add(name)
        return t

    def add_buffer(self, name: str, value) -> np.ndarray:
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        self.buffers[name] = np.asarray(value, dtype=get_default_dtype()).copy()
        return self.buffers[name]

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def names(self, prefix: str = "") -> list:
        return [n for n in self.params if n.startswith(prefix)]

    def count(self, prefix: str = "", include_buffers: bool = True) -> int:
        n = sum(t.size for k, t in self.params.items() if k.startswith(prefix))
        if include_buffers:
            n += sum(b.size for k, b in self.buffers.items() if k.startswith(prefix))
        return n

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict:
        return {k: t.grad for k, t in self.params.items()}

    def snapshot(self) -> dict:
        """Deep copy of values and buffers, for restoring best weights."""
        out = {k: t.data.copy() for k, t in self.params.items()}
        out.update({k: b.copy() for k, b in self.buffers.items()})
        return out

    def load_snapshot(self, snap: dict):
        for k, t in self.params.items():
            t.data = snap[k].copy()
        for k in self.buffers:
            self.buffers[k][...] = snap[k]

    def astype(self, dtype) -> "ParamSet":
        """Copy with every array cast (used for 64-bit gradient checks)."""
        out = ParamSet()
        for k, t in self.params.items():
            out.params[k] = Tensor(t.data.astype(dtype), requires_grad=True, name=k, dtype=dtype)
        for k, b in self.buffers.items():
            out.buffers[k] = b.astype(dtype)
        out.regularized = set(self.regularized)
        return out

    def tensors(self, names: Optional[Iterable[str]] = None) -> list:
        return [self.params[n] for n in (names if names is not None else self.params)]
