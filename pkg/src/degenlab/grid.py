from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import GridTooCoarse


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned tensor grid with a finite-difference step."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    resolution: int
    fd_step: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi dimension mismatch")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("empty grid box")
        if self.resolution < 3:
            raise GridTooCoarse("resolution must be >= 3")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.fd_step >= min(self.edges) / self.resolution:
            raise GridTooCoarse(
                f"fd_step {self.fd_step} not below min edge / resolution "
                f"({min(self.edges) / self.resolution:.3g})")

    @classmethod
    def cube(cls, dim: int, half_width: float, resolution: int, fd_step: float = 1e-4,
             center=None) -> "GridSpec":
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(tuple(c - half_width), tuple(c + half_width), resolution, fd_step)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def edges(self) -> Tuple[float, ...]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.edges) / (self.resolution - 1)

    def axes(self):
        return [np.linspace(l, h, self.resolution) for l, h in zip(self.lo, self.hi)]

    def points(self) -> np.ndarray:
        """All grid points in C order, shape (resolution**dim, dim)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.resolution,) * self.dim

    def translated(self, shift) -> "GridSpec":
        s = np.asarray(shift, dtype=float)
        return GridSpec(tuple(np.asarray(self.lo) + s), tuple(np.asarray(self.hi) + s),
                        self.resolution, self.fd_step)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "resolution": self.resolution,
                "fd_step": self.fd_step}
