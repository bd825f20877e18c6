"""Ordered registry of named leaf blocks with flat-vector packing.

The container defines the layout of the stacked decision (or parameter)
vector: blocks appear in insertion order, each flattened column-major.
Values for names missing at packing time default to zero, which is what
lets solvers treat unspecified seeds and parameters as zero-filled.
"""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .expr import Expression, _LEAF

__all__ = ["VariableContainer"]


class VariableContainer:
    """Insertion-ordered named blocks mapped onto one flat vector."""

    def __init__(self, kind: str = "variable"):
        if kind not in ("variable", "parameter"):
            raise ValueError(f"unknown container kind {kind!r}")
        self.kind = kind
        self._blocks: dict[str, Expression] = {}
        self._offsets: dict[str, int] = {}
        self._total = 0

    def register(self, name: str, block: Expression) -> int:
        """Append a leaf block; returns its offset into the flat vector."""
        if name in self._blocks:
            raise ValueError(f"block {name!r} already registered")
        for node in block.entries():
            if node.op != _LEAF or node.block.kind != self.kind or node.block.name != name:
                raise ValueError(
                    f"block {name!r} must consist of {self.kind} leaves named {name!r}"
                )
        offset = self._total
        self._blocks[name] = block
        self._offsets[name] = offset
        self._total += block.rows * block.cols
        return offset

    # introspection ------------------------------------------------------
    def __len__(self) -> int:
        return len(self._blocks)

    def __contains__(self, name: str) -> bool:
        return name in self._blocks

    def __iter__(self) -> Iterator[str]:
        return iter(self._blocks)

    def names(self) -> list[str]:
        return list(self._blocks)

    def block(self, name: str) -> Expression:
        return self._blocks[name]

    def shape_of(self, name: str) -> tuple[int, int]:
        b = self._blocks[name]
        return (b.rows, b.cols)

    def offset_of(self, name: str) -> int:
        return self._offsets[name]

    @property
    def total_length(self) -> int:
        return self._total

    def layout(self) -> dict[str, tuple[int, int, int]]:
        """name -> (offset, rows, cols), for compiled evaluators."""
        return {
            name: (self._offsets[name], b.rows, b.cols)
            for name, b in self._blocks.items()
        }

    def leaves(self) -> list:
        """All scalar leaf nodes in flat-vector order."""
        out = []
        for b in self._blocks.values():
            out.extend(b.entries())
        return out

    # packing -------------------------------------------------------------
    def _normalize(self, name: str, value) -> np.ndarray:
        rows, cols = self.shape_of(name)
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.shape != (rows, cols):
            raise ValueError(
                f"value for {name!r} has shape {np.shape(value)}, expected ({rows}, {cols})"
            )
        return arr

    def vectorize(self, values: Mapping[str, object] | None = None) -> np.ndarray:
        """Pack named values into the flat vector; missing names are zero."""
        flat = np.zeros(self._total)
        if not values:
            return flat
        for name, value in values.items():
            if name not in self._blocks:
                raise KeyError(f"unknown block {name!r}")
            arr = self._normalize(name, value)
            off = self._offsets[name]
            flat[off : off + arr.size] = arr.ravel(order="F")
        return flat

    def devectorize(self, flat, squeeze: bool = True) -> dict[str, np.ndarray]:
        """Split a flat vector back into named blocks.

        Column blocks come back 1-D unless ``squeeze=False``.
        """
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.size != self._total:
            raise ValueError(f"vector has length {flat.size}, expected {self._total}")
        out = {}
        for name, b in self._blocks.items():
            off = self._offsets[name]
            arr = flat[off : off + b.rows * b.cols].reshape((b.rows, b.cols), order="F")
            if squeeze and b.cols == 1:
                out[name] = arr[:, 0].copy()
            else:
                out[name] = arr.copy()
        return out
