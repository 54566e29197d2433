"""Cartesian Hadamard fusion of the two encoder memories.

Every (text position n, gloss position u) pair contributes one fused row:
row n*U + u is the elementwise product of text row n and gloss row u. The
text block is built by repeating each row U times and the gloss block by
tiling the whole matrix N times, so both stacks have N*U rows before the
product. This pairs all positions exactly once, which block tiling alone
would miss whenever gcd(N, U) > 1.
"""

from __future__ import annotations

import dataclasses

from . import tensorkit as tk
from .tensorkit import Tensor

DEFAULT_MAX_FUSED_ROWS = 4096


class FusionCapacityError(RuntimeError):
    """The N*U fused memory would exceed the configured row cap."""


@dataclasses.dataclass
class FusedMemory:
    """The (N*U, d) cross-attention source plus its origin lengths."""

    matrix: Tensor
    origin: tuple[int, int]

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]


def fuse_memories(h_text: Tensor, h_gloss: Tensor,
                  max_rows: int = DEFAULT_MAX_FUSED_ROWS) -> FusedMemory:
    """Pair every text row with every gloss row via elementwise product."""
    if h_text.ndim != 2 or h_gloss.ndim != 2:
        raise tk.ShapeError("fuse_memories expects two matrices")
    if h_text.shape[1] != h_gloss.shape[1]:
        raise tk.ShapeError(
            f"fuse_memories: model widths differ ({h_text.shape[1]} vs "
            f"{h_gloss.shape[1]})")
    n, u = h_text.shape[0], h_gloss.shape[0]
    if n * u > max_rows:
        raise FusionCapacityError(
            f"fused memory needs {n * u} rows, exceeding the cap of {max_rows}")
    stacked_text = tk.repeat_rows(h_text, u)
    stacked_gloss = tk.tile_rows(h_gloss, n)
    return FusedMemory(matrix=tk.mul(stacked_text, stacked_gloss), origin=(n, u))
