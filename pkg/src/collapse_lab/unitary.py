"""Schrodinger propagation by symmetric split-step with spectral kinetic factor."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .config_space import GridSpec, WaveFunction
from .errors import DomainError, NumericalOverflowError

DEFAULT_DT = 1e-3
DEFAULT_DT_MAX = 0.1


@dataclass(frozen=True)
class Free:
    def potential(self, q, mass):
        return np.zeros_like(q)


@dataclass(frozen=True)
class Harmonic:
    omega: float = 1.0

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError(f"harmonic omega must be positive, got {self.omega}")

    def potential(self, q, mass):
        return 0.5 * mass * self.omega**2 * q**2


@dataclass(frozen=True)
class DoubleWell:
    """``V(q) = b * (q**2 - a**2)**2``: minima at +-a, barrier height b*a**4."""

    a: float = 2.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a > 0 or not self.b > 0:
            raise DomainError("double well needs a > 0 and b > 0")

    def potential(self, q, mass):
        return self.b * (q**2 - self.a**2) ** 2


@dataclass(frozen=True)
class GaussianWell:
    """Pair attraction ``-depth * exp(-r**2 / (2 width**2))`` in ``r = q_i - q_j``."""

    depth: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError("gaussian well width must be positive")

    def potential(self, r):
        return -self.depth * np.exp(-(r**2) / (2 * self.width**2))


ExternalPotential = Union[Free, Harmonic, DoubleWell]


@dataclass(frozen=True)
class HamiltonianSpec:
    """Kinetic term from the grid masses plus optional external and pair potentials.

    ``kinetic=False`` together with free potentials gives H = 0, which makes
    every unitary step the identity.
    """

    external: tuple = ()
    pair: GaussianWell | None = None
    kinetic: bool = True

    @classmethod
    def zero(cls) -> "HamiltonianSpec":
        return cls(kinetic=False)

    @property
    def is_zero(self) -> bool:
        return (
            not self.kinetic
            and self.pair is None
            and all(isinstance(v, Free) for v in self.external)
        )

    def potential_on(self, grid: GridSpec) -> np.ndarray:
        n = grid.num_particles
        ext = self.external or (Free(),) * n
        if len(ext) == 1 and n > 1:
            ext = ext * n
        if len(ext) != n:
            raise DomainError(f"expected {n} external potentials, got {len(ext)}")
        q = grid.axis
        grids = np.meshgrid(*([q] * n), indexing="ij", sparse=True)
        total = np.zeros(grid.shape)
        for j, pot in enumerate(ext):
            if not isinstance(pot, Free):
                total = total + pot.potential(grids[j], grid.masses[j])
        if self.pair is not None:
            for a in range(n):
                for b in range(a + 1, n):
                    total = total + self.pair.potential(grids[a] - grids[b])
        if not np.all(np.isfinite(total)):
            raise DomainError("potential is not finite on the grid")
        return total


def _kinetic_symbol(grid: GridSpec) -> np.ndarray:
    k = 2 * np.pi * np.fft.fftfreq(grid.points_per_axis, d=grid.spacing)
    n = grid.num_particles
    ks = np.meshgrid(*([k] * n), indexing="ij", sparse=True)
    total = np.zeros(grid.shape)
    for j in range(n):
        total = total + ks[j] ** 2 / (2 * grid.masses[j])
    return total


@lru_cache(maxsize=64)
def _factors(grid: GridSpec, ham: HamiltonianSpec, dt: float):
    pot = ham.potential_on(grid)
    half_v = np.exp(-0.5j * dt * pot) if np.any(pot) else None
    kin = np.exp(-1j * dt * _kinetic_symbol(grid)) if ham.kinetic else None
    return half_v, kin


def _split_step(amps: np.ndarray, grid: GridSpec, ham: HamiltonianSpec, dt: float) -> np.ndarray:
    half_v, kin = _factors(grid, ham, float(dt))
    out = amps
    if half_v is not None:
        out = out * half_v
    if kin is not None:
        axes = tuple(range(-grid.num_particles, 0))
        out = np.fft.ifftn(kin * np.fft.fftn(out, axes=axes), axes=axes)
    if half_v is not None:
        out = out * half_v
    return out


def step_unitary(
    psi: WaveFunction, ham: HamiltonianSpec, dt: float, dt_max: float = DEFAULT_DT_MAX, *, step_index=None
) -> WaveFunction:
    """One Strang step: half potential, full kinetic, half potential.

    Negative ``dt`` runs the step backwards in time.
    """
    if dt == 0 or not math.isfinite(dt) or abs(dt) > dt_max:
        raise DomainError(f"dt must satisfy 0 < |dt| <= {dt_max}, got {dt}")
    if ham.is_zero:
        return psi
    out = _split_step(psi.amplitudes, psi.grid, ham, dt)
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError("non-finite amplitudes after unitary step", step=step_index)
    return WaveFunction(psi.grid, out)


def step_schedule(total: float, dt: float) -> list[float]:
    """Step sizes covering ``[0, total]``: full steps, last one truncated."""
    if total < 0:
        raise DomainError(f"evolution time must be >= 0, got {total}")
    if total == 0:
        return []
    n_full = int(math.floor(total / dt + 1e-9))
    steps = [dt] * n_full
    rest = total - n_full * dt
    if rest > 1e-9 * dt:
        steps.append(rest)
    return steps


def evolve(
    psi: WaveFunction, ham: HamiltonianSpec, total_time: float, dt: float = DEFAULT_DT, dt_max: float = DEFAULT_DT_MAX
) -> WaveFunction:
    """Apply ``ceil(T / dt)`` split steps (the last one truncated to land on T)."""
    steps = step_schedule(total_time, dt)
    if ham.is_zero:
        return psi
    for k, h in enumerate(steps):
        psi = step_unitary(psi, ham, h, dt_max, step_index=k)
    return psi


def energy(psi: WaveFunction, ham: HamiltonianSpec) -> float:
    """Expectation value of H under the grid quadrature (spectral kinetic part)."""
    grid = psi.grid
    amps = psi.amplitudes
    dens = np.abs(amps) ** 2
    e_pot = float(np.sum(ham.potential_on(grid) * dens)) * grid.cell_volume
    e_kin = 0.0
    if ham.kinetic:
        axes = tuple(range(grid.num_particles))
        spec = np.fft.fftn(amps, axes=axes)
        # Parseval: sum |psi|^2 = sum |psi_k|^2 / M^N
        e_kin = float(np.sum(_kinetic_symbol(grid) * np.abs(spec) ** 2)) / amps.size * grid.cell_volume
    return e_kin + e_pot
