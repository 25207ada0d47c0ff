"""The periodic 1-D grid and the fields that live on it"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from entropy_lab.util import ConfigError


@dataclass(frozen=True)
class Grid:
    """A uniform cell grid on the torus [-L, L)

    Attributes:
        n_x: number of cells, a power of two
        half_width: L
    """

    n_x: int
    half_width: float

    def __post_init__(self):
        if self.n_x < 4 or self.n_x & (self.n_x - 1):
            raise ConfigError(f"n_x must be a power of two >= 4, got {self.n_x}")
        if not self.half_width > 0:
            raise ConfigError(f"half_width must be positive, got {self.half_width}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_x

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.half_width + self.dx * np.arange(self.n_x)
        x.flags.writeable = False
        return x

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the real FFT"""
        k = 2.0 * np.pi * np.fft.rfftfreq(self.n_x, d=self.dx)
        k.flags.writeable = False
        return k

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Periodic trapezoid rule along the last axis"""
        return np.sum(values, axis=-1) * self.dx

    def delta(self, center_index: int | None = None) -> np.ndarray:
        """Discrete unit-mass delta, at x = 0 by default"""
        i = self.n_x // 2 if center_index is None else center_index
        out = np.zeros(self.n_x)
        out[i] = 1.0 / self.dx
        return out


@dataclass(frozen=True)
class GridField:
    """A scalar field u(t, .) sampled on a Grid

    values may carry leading batch axes; the last axis runs over cells.
    Every value is finite.
    """

    values: np.ndarray
    grid: Grid
    t: float = field(default=0.0)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[-1] != self.grid.n_x:
            raise ValueError(
                f"field has {values.shape[-1]} cells, grid has {self.grid.n_x}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def with_values(self, values: np.ndarray, t: float | None = None) -> GridField:
        return replace(self, values=values, t=self.t if t is None else t)

    def integral(self) -> np.ndarray:
        return self.grid.integrate(self.values)
