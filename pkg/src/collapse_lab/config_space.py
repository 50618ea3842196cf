"""Discretized configuration space for N particles on a periodic 1-D box.

Coordinates of particle ``j`` live on ``q = -L/2 + k * dx`` for
``k = 0 .. M-1``.  A wavefunction is an ``M**N`` complex array whose axis
``j - 1`` belongs to particle label ``j`` (labels are 1-based throughout the
package).  Integrals are plain Riemann sums with cell volume ``dx**N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateInputError,
    DomainError,
    GridTooLargeError,
    IncompatibleGridError,
    ResolutionError,
)

DEFAULT_MAX_CELLS = 2**24


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the lattice plus per-particle masses."""

    num_particles: int
    points_per_axis: int = 256
    box_length: float = 40.0
    masses: tuple[float, ...] = ()
    max_cells: int = DEFAULT_MAX_CELLS

    def __post_init__(self):
        n, m = self.num_particles, self.points_per_axis
        if int(n) != n or n < 1:
            raise DomainError(f"num_particles must be an integer >= 1, got {n}")
        if int(m) != m or m < 2 or (m & (m - 1)) != 0:
            raise DomainError(f"points_per_axis must be a power of two, got {m}")
        if not self.box_length > 0 or not math.isfinite(self.box_length):
            raise DomainError(f"box_length must be positive, got {self.box_length}")
        masses = tuple(float(x) for x in self.masses) if self.masses else (1.0,) * n
        if len(masses) != n:
            raise DomainError(f"expected {n} masses, got {len(masses)}")
        if any(not (x > 0 and math.isfinite(x)) for x in masses):
            raise DomainError(f"masses must be strictly positive, got {masses}")
        object.__setattr__(self, "masses", masses)
        if m**n > self.max_cells:
            raise GridTooLargeError(
                f"grid has {m}**{n} = {m**n} cells, above the cap of {self.max_cells}"
            )

    @property
    def spacing(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.num_particles

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.num_particles

    @cached_property
    def axis(self) -> np.ndarray:
        q = -self.box_length / 2 + np.arange(self.points_per_axis) * self.spacing
        q.setflags(write=False)
        return q

    def check_label(self, i: int) -> int:
        """Return the array axis for particle label ``i`` (1-based)."""
        if int(i) != i or not 1 <= i <= self.num_particles:
            raise DomainError(f"particle label {i} outside 1..{self.num_particles}")
        return int(i) - 1

    def inside(self, x: float) -> bool:
        return -self.box_length / 2 <= x < self.box_length / 2

    def nearest_site(self, x: float) -> int:
        k = int(round((x + self.box_length / 2) / self.spacing))
        return k % self.points_per_axis


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex amplitudes over the ``M**N`` lattice.  Immutable."""

    grid: GridSpec
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != self.grid.shape:
            raise DomainError(f"amplitudes shape {amps.shape} != grid shape {self.grid.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real * self.grid.cell_volume)

    def norm(self) -> float:
        return math.sqrt(self.norm_squared())

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def normalized(self) -> "WaveFunction":
        nrm = self.norm()
        if nrm == 0 or not math.isfinite(nrm):
            raise DegenerateInputError("cannot normalize a zero or non-finite state")
        return WaveFunction(self.grid, self.amplitudes / nrm)

    def inner(self, other: "WaveFunction") -> complex:
        """<self|other> under the grid quadrature."""
        _same_grid(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.cell_volume)

    def distance(self, other: "WaveFunction") -> float:
        _same_grid(self, other)
        diff = self.amplitudes - other.amplitudes
        return math.sqrt(float(np.vdot(diff, diff).real) * self.grid.cell_volume)


def _same_grid(a: WaveFunction, b: WaveFunction) -> None:
    if a.grid != b.grid:
        raise IncompatibleGridError("states live on different grids")


def _broadcast(values, n, name):
    vals = [float(v) for v in np.atleast_1d(values)]
    if len(vals) == 1 and n > 1:
        vals = vals * n
    if len(vals) != n:
        raise DomainError(f"{name}: expected {n} values, got {len(vals)}")
    return vals


def gaussian_packet(
    grid: GridSpec,
    centers: Sequence[float],
    widths: Sequence[float],
    momenta: Sequence[float] | None = None,
) -> WaveFunction:
    """Normalized product of 1-D Gaussian packets.

    Each factor is ``exp(-(q - c)**2 / (4 sigma**2) + 1j * p * q)`` so that
    ``sigma`` is the standard deviation of the position density.
    """
    n = grid.num_particles
    centers = _broadcast(centers, n, "centers")
    widths = _broadcast(widths, n, "widths")
    momenta = _broadcast(0.0 if momenta is None else momenta, n, "momenta")
    q = grid.axis
    factors = []
    for c, s, p in zip(centers, widths, momenta):
        if not grid.inside(c) or c == -grid.box_length / 2:
            raise DomainError(f"center {c} outside the open box (-L/2, L/2)")
        if s < 2 * grid.spacing:
            raise ResolutionError(f"width {s} below twice the grid spacing {grid.spacing}")
        f = np.exp(-((q - c) ** 2) / (4 * s**2) + 1j * p * q)
        factors.append(f / math.sqrt(np.sum(np.abs(f) ** 2) * grid.spacing))
    amps = factors[0]
    for f in factors[1:]:
        amps = np.multiply.outer(amps, f)
    return WaveFunction(grid, amps).normalized()


def superpose(branches: Sequence[tuple[complex, WaveFunction]]) -> WaveFunction:
    """Normalized linear combination ``sum c_b * psi_b``."""
    if not branches:
        raise DegenerateInputError("no branches given")
    grid = branches[0][1].grid
    amps = np.zeros(grid.shape, dtype=complex)
    for coef, state in branches:
        if state.grid != grid:
            raise IncompatibleGridError("branches live on different grids")
        amps = amps + complex(coef) * state.amplitudes
    if all(complex(c) == 0 for c, _ in branches):
        raise DegenerateInputError("all superposition coefficients are zero")
    return WaveFunction(grid, amps).normalized()


def marginal_density(psi: WaveFunction, i: int) -> np.ndarray:
    """Position density of particle ``i``: |psi|**2 integrated over the others."""
    grid = psi.grid
    ax = grid.check_label(i)
    others = tuple(k for k in range(grid.num_particles) if k != ax)
    dens = psi.density()
    if others:
        dens = dens.sum(axis=others) * grid.spacing ** len(others)
    return dens


def swap_labels(psi: WaveFunction, i: int, j: int) -> WaveFunction:
    """Exchange the coordinates of particles ``i`` and ``j``."""
    a, b = psi.grid.check_label(i), psi.grid.check_label(j)
    if a == b:
        raise DomainError("swap_labels needs two distinct labels")
    return WaveFunction(psi.grid, np.swapaxes(psi.amplitudes, a, b))


def symmetrize(psi: WaveFunction, sign: int = 1) -> WaveFunction:
    """Project a two-particle state on the symmetric (+1) or antisymmetric (-1) sector."""
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    swapped = swap_labels(psi, 1, 2)
    return WaveFunction(psi.grid, psi.amplitudes + sign * swapped.amplitudes).normalized()
