"""Matter-density field: mass-weighted sum of single-particle marginals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config_space import GridSpec, WaveFunction, marginal_density
from .errors import DomainError


@dataclass(frozen=True, eq=False)
class MatterDensityField:
    """``m(x)`` (mass per unit length) on the spatial axis."""

    axis: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    spacing: float
    total_mass: float = field(init=False)

    def __post_init__(self):
        for name in ("axis", "density"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "total_mass", float(self.density.sum() * self.spacing))


def matter_density(psi: WaveFunction) -> MatterDensityField:
    """Total matter density of ``psi``; component fields are not exposed."""
    grid = psi.grid
    m = np.zeros(grid.points_per_axis)
    for i, mass in enumerate(grid.masses, start=1):
        m += mass * marginal_density(psi, i)
    return MatterDensityField(grid.axis, m, grid.spacing)


def _mask(axis: np.ndarray, a: float, b: float) -> np.ndarray:
    # half-open so adjacent intervals never double count a site
    return (axis >= a) & (axis < b)


def region_mass(fld: MatterDensityField, interval: tuple[float, float]) -> float:
    """Mass inside ``[a, b)``."""
    a, b = interval
    if b < a:
        raise DomainError(f"inverted interval [{a}, {b}]")
    return float(fld.density[_mask(fld.axis, a, b)].sum() * fld.spacing)


@dataclass(frozen=True)
class RegionPartition:
    """Disjoint half-open intervals marking branch supports; the rest is tail."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        if not ivs:
            raise DomainError("a partition needs at least one interval")
        for a, b in ivs:
            if not a < b:
                raise DomainError(f"interval [{a}, {b}) is empty or inverted")
        ordered = sorted(ivs)
        for (a1, b1), (a2, b2) in zip(ordered, ordered[1:]):
            if a2 < b1:
                raise DomainError(f"intervals [{a1}, {b1}) and [{a2}, {b2}) overlap")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def halves(cls, grid: GridSpec) -> "RegionPartition":
        half = grid.box_length / 2
        return cls(((-half, 0.0), (0.0, half)))

    def check_inside(self, grid: GridSpec) -> None:
        half = grid.box_length / 2
        for a, b in self.intervals:
            if a < -half or b > half:
                raise DomainError(f"interval [{a}, {b}) leaves the box [-{half}, {half})")

    def masks(self, axis: np.ndarray) -> list[np.ndarray]:
        return [_mask(axis, a, b) for a, b in self.intervals]

    def __len__(self):
        return len(self.intervals)


def region_weights(fld: MatterDensityField, partition: RegionPartition) -> np.ndarray:
    """Region masses divided by total mass."""
    return np.array([region_mass(fld, iv) for iv in partition.intervals]) / fld.total_mass

