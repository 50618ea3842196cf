"""Measurements on GRW runs: tails, branch weights, distortion, symmetry,
flashes, ensemble decoherence and the continuum-limit ladder."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .config_space import WaveFunction, swap_labels
from .errors import DomainError, UndefinedBranchError, UnsupportedArityError
from .grw import CollapseEvent, GrwParams, run_grw
from .matter import MatterDensityField, RegionPartition, region_mass, region_weights
from .parallel import map_replicas
from .seeding import replica_seed
from .unitary import HamiltonianSpec

__all__ = [
    "RegionPartition",
    "DecoherenceCurve",
    "ScanLevel",
    "Flash",
    "bare_tail_mass",
    "branch_weights",
    "distortion_metric",
    "symmetry_violation",
    "export_flashes",
    "decoherence_scan",
    "continuum_limit_scan",
    "fit_decay_rate",
]


def bare_tail_mass(fld: MatterDensityField, partition: RegionPartition) -> float:
    """Fraction of the total mass lying outside every region of ``partition``."""
    inside = sum(region_mass(fld, iv) for iv in partition.intervals)
    return float(min(1.0, max(0.0, (fld.total_mass - inside) / fld.total_mass)))


def branch_weights(fld: MatterDensityField, partition: RegionPartition) -> list[float]:
    return [float(w) for w in region_weights(fld, partition)]


def _restricted(psi: WaveFunction, region: tuple[float, float]) -> np.ndarray:
    a, b = region
    if not a < b:
        raise DomainError(f"region [{a}, {b}) is empty or inverted")
    grid = psi.grid
    mask = (grid.axis >= a) & (grid.axis < b)
    full = mask
    for _ in range(grid.num_particles - 1):
        full = np.multiply.outer(full, mask)
    amps = np.where(full, psi.amplitudes, 0)
    weight = float(np.sum(np.abs(amps) ** 2)) * grid.cell_volume
    if weight < 1e-14:
        raise UndefinedBranchError(f"branch weight {weight:.3g} in [{a}, {b}) is below 1e-14")
    return amps / math.sqrt(weight)


def distortion_metric(collapsed: WaveFunction, reference: WaveFunction, region: tuple[float, float]) -> float:
    """L2 distance between the two states restricted to ``region``, each renormalized there.

    Weight suppression alone gives 0; only a change of branch shape counts.
    For ``N > 1`` the region applies to every coordinate.
    """
    if collapsed.grid != reference.grid:
        raise DomainError("states live on different grids")
    diff = _restricted(collapsed, region) - _restricted(reference, region)
    return math.sqrt(float(np.sum(np.abs(diff) ** 2)) * collapsed.grid.cell_volume)


def symmetry_violation(psi: WaveFunction) -> float:
    """``||psi - S psi||`` with ``S`` the exchange of the two particles."""
    if psi.grid.num_particles != 2:
        raise UnsupportedArityError("symmetry_violation needs exactly two particles")
    return psi.distance(swap_labels(psi, 1, 2))


class Flash(NamedTuple):
    t: float
    x: float


def export_flashes(events: Sequence[CollapseEvent]) -> list[Flash]:
    return [Flash(e.time, e.center) for e in events]


@dataclass(frozen=True, eq=False)
class DecoherenceCurve:
    """Normalized ensemble coherence ``|rho(q_L, q_R)| / sqrt(rho(q_L,q_L) rho(q_R,q_R))``."""

    times: np.ndarray
    coherence: np.ndarray
    replicas: int
    rate: float
    jumps: np.ndarray

    @property
    def max_jump(self) -> float:
        return float(self.jumps.max()) if self.jumps.size else 0.0

    def jump_quantile(self, q: float = 0.99) -> float:
        return float(np.quantile(self.jumps, q)) if self.jumps.size else 0.0


def fit_decay_rate(times, coherence, floor: float = 0.05) -> float:
    """Least-squares slope of ``-log coherence`` over points above ``floor``."""
    t = np.asarray(times, dtype=float)
    c = np.asarray(coherence, dtype=float)
    keep = np.isfinite(c) & (c > floor)
    if keep.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(t[keep], np.log(c[keep]), 1)
    return float(-slope)


def _probe_values(psi: WaveFunction, label: int, kl: int, kr: int) -> tuple[complex, float, float]:
    """Reduced density-matrix elements of particle ``label`` at the probe sites."""
    grid = psi.grid
    ax = grid.check_label(label)
    left = np.take(psi.amplitudes, kl, axis=ax)
    right = np.take(psi.amplitudes, kr, axis=ax)
    w = grid.spacing ** (grid.num_particles - 1)
    return (
        complex(np.vdot(right, left) * w),
        float(np.vdot(left, left).real * w),
        float(np.vdot(right, right).real * w),
    )


def _decoherence_replica(args):
    psi0, ham, params, times, dt, seed, label, kl, kr, partition = args
    rows = []

    def observe(t, psi):
        rows.append(_probe_values(psi, label, kl, kr))

    _, events = run_grw(
        psi0, ham, params, float(times[-1]), dt, seed,
        partition=partition, observe_times=times, observer=observe,
    )
    jumps = [e.weight_jump for e in events] if partition is not None else []
    return np.array(rows), np.array(jumps, dtype=float)


def decoherence_scan(
    psi0: WaveFunction,
    ham: HamiltonianSpec,
    params: GrwParams,
    *,
    replicas: int,
    probes: tuple[float, float],
    times: Sequence[float],
    dt: float,
    seed: int,
    label: int = 1,
    partition: RegionPartition | None = None,
    threads: int | None = None,
) -> DecoherenceCurve:
    """Average the pure-state projector over GRW replicas and fit its decay rate.

    Replica ``r`` uses ``replica_seed(seed, r)``; the fold over replicas runs
    in index order so the result does not depend on ``threads``.
    """
    if replicas < 1:
        raise DomainError("need at least one replica")
    if replicas < 100:
        warnings.warn(f"only {replicas} replicas; decay-rate fit has little statistical power")
    grid = psi0.grid
    for q in probes:
        if not grid.inside(q):
            raise DomainError(f"probe {q} outside the box")
    kl, kr = grid.nearest_site(probes[0]), grid.nearest_site(probes[1])
    times = np.asarray(sorted(times), dtype=float)
    jobs = [
        (psi0, ham, params, times, dt, replica_seed(seed, r), label, kl, kr, partition)
        for r in range(replicas)
    ]
    off = np.zeros(len(times), dtype=complex)
    diag_l = np.zeros(len(times))
    diag_r = np.zeros(len(times))
    jumps = []
    for rows, jmp in map_replicas(_decoherence_replica, jobs, threads):
        off += rows[:, 0]
        diag_l += rows[:, 1].real
        diag_r += rows[:, 2].real
        jumps.append(jmp)
    coherence = np.abs(off) / np.sqrt(diag_l * diag_r)
    return DecoherenceCurve(
        times, coherence, replicas, fit_decay_rate(times, coherence),
        np.concatenate(jumps) if jumps else np.array([]),
    )


@dataclass(frozen=True, eq=False)
class ScanLevel:
    level: int
    params: GrwParams
    curve: DecoherenceCurve


def continuum_limit_scan(
    psi0: WaveFunction,
    ham: HamiltonianSpec,
    base: GrwParams,
    *,
    levels: Sequence[int] = (1, 2, 4, 8),
    replicas: int,
    probes: tuple[float, float],
    times: Sequence[float],
    dt: float,
    seed: int,
    partition: RegionPartition | None = None,
    threads: int | None = None,
) -> list[ScanLevel]:
    """Decoherence curves along the ladder ``(k * lambda, alpha / k)``.

    The small-separation rate ``lambda * alpha * s**2 / 2`` is level-invariant
    while each single hit becomes weaker.  Every level reuses ``seed``.
    """
    partition = partition or RegionPartition.halves(psi0.grid)
    out = []
    for k in levels:
        if int(k) != k or k < 1:
            raise DomainError(f"levels must be positive integers, got {k}")
        params = base.scaled(k)
        curve = decoherence_scan(
            psi0, ham, params, replicas=replicas, probes=probes, times=times,
            dt=dt, seed=seed, partition=partition, threads=threads,
        )
        out.append(ScanLevel(int(k), params, curve))
    return out
