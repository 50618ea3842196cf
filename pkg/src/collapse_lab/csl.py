"""Continuous spontaneous localization for a single degree of freedom.

Norm-preserving Ito step of

    dpsi = [-i H dt + sqrt(gamma) sum_j (A_j - <A_j>) dW_j
            - gamma/2 sum_j (A_j - <A_j>)**2 dt] psi

where ``A_j`` is a Gaussian-smeared position operator centered on every
``stride``-th grid site.  ``A_j`` carries a ``sqrt(stride * dx)`` factor so
that the sum over sites approximates an integral over centers; with that
scaling the ensemble coherence between two points decays at the GRW rate
``gamma * (1 - exp(-alpha s**2 / 2))``.

Replicas are integrated as rows of one array.  Each row draws its noise from
its own generator, so a replica's path does not depend on which batch it
runs in (up to BLAS rounding).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config_space import GridSpec, WaveFunction
from .errors import DomainError, NumericalOverflowError, UnsupportedArityError
from .matter import RegionPartition
from .seeding import rng_for
from .unitary import DEFAULT_DT_MAX, HamiltonianSpec, _split_step, step_schedule

_NOISE_CHUNK = 512


@dataclass(frozen=True)
class CslParams:
    gamma: float = 1.0
    smearing_alpha: float = 4.0
    dt_sde: float = 1e-3
    stride: int = 4

    def __post_init__(self):
        # gamma = 0 is kept as the decoupled limit; the config layer demands gamma > 0
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")
        if not self.smearing_alpha > 0:
            raise DomainError(f"smearing alpha must be > 0, got {self.smearing_alpha}")
        if not self.dt_sde > 0:
            raise DomainError(f"dt_sde must be > 0, got {self.dt_sde}")
        if self.gamma > 0 and self.dt_sde > 1e-3 / self.gamma * (1 + 1e-12):
            raise DomainError(
                f"dt_sde={self.dt_sde} exceeds the stability guard 1e-3/gamma = {1e-3 / self.gamma}"
            )
        if int(self.stride) != self.stride or self.stride < 1:
            raise DomainError(f"stride must be a positive integer, got {self.stride}")


def smearing_operators(grid: GridSpec, params: CslParams) -> np.ndarray:
    """Rows are the diagonals of the ``A_j`` on the grid, shape ``(J, M)``."""
    q = grid.axis
    centers = q[:: params.stride]
    h = params.stride * grid.spacing
    amp = math.sqrt(h) * (2 * params.smearing_alpha / math.pi) ** 0.25
    return amp * np.exp(-params.smearing_alpha * (q[None, :] - centers[:, None]) ** 2)


def _check_single(grid: GridSpec):
    if grid.num_particles != 1:
        raise UnsupportedArityError("CSL is implemented for a single particle only")


class _Integrator:
    def __init__(self, grid: GridSpec, ham: HamiltonianSpec, params: CslParams, dt_max: float):
        _check_single(grid)
        self.grid, self.ham, self.params, self.dt_max = grid, ham, params, dt_max
        self.ops = smearing_operators(grid, params)
        self.ops_sq_sum = (self.ops**2).sum(axis=0)

    @property
    def sites(self) -> int:
        return self.ops.shape[0]

    def step(self, amps: np.ndarray, noise: np.ndarray, dt: float, step_index=None) -> np.ndarray:
        gamma, dx = self.params.gamma, self.grid.spacing
        out = amps
        if gamma > 0:
            a = self.ops
            dens = np.abs(amps) ** 2
            mean = dens @ a.T * dx
            dw = noise * math.sqrt(gamma * dt)
            # sqrt(g)(A - <A>)dW - (g dt / 2)(A - <A>)^2, expanded so one matmul serves both
            site_coef = dw + gamma * dt * mean
            const = np.sum(mean * dw, axis=-1, keepdims=True) + 0.5 * gamma * dt * np.sum(
                mean**2, axis=-1, keepdims=True
            )
            factor = 1 + site_coef @ a - 0.5 * gamma * dt * self.ops_sq_sum - const
            nrm = np.sqrt(np.sum(dens * factor**2, axis=-1, keepdims=True) * dx)
            out = amps * (factor / nrm)
        if not self.ham.is_zero:
            if abs(dt) > self.dt_max:
                raise DomainError(f"dt {dt} exceeds dt_max {self.dt_max}")
            out = _split_step(out, self.grid, self.ham, dt)
        if not np.all(np.isfinite(out)):
            raise NumericalOverflowError("non-finite amplitudes in CSL step", step=step_index)
        return out


def csl_step(psi: WaveFunction, ham: HamiltonianSpec, params: CslParams, noise, dt_max: float = DEFAULT_DT_MAX) -> WaveFunction:
    """One Euler-Maruyama step of size ``params.dt_sde``, renormalized.

    ``noise`` holds one standard normal draw per smearing site.
    """
    integ = _Integrator(psi.grid, ham, params, dt_max)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (integ.sites,):
        raise DomainError(f"expected {integ.sites} noise draws, got shape {noise.shape}")
    out = integ.step(psi.amplitudes[None, :], noise[None, :], params.dt_sde)
    return WaveFunction(psi.grid, out[0])


@dataclass(frozen=True, eq=False)
class WeightTrace:
    """Region weights over time; ``weights`` has shape ``(times, replicas, regions)``."""

    times: np.ndarray
    weights: np.ndarray

    def replica(self, r: int) -> "WeightTrace":
        return WeightTrace(self.times, self.weights[:, r : r + 1, :])

    def rows(self, r: int = 0):
        for t, w in zip(self.times, self.weights[:, r, :]):
            yield (float(t), *(float(v) for v in w))


@dataclass(frozen=True, eq=False)
class CslEnsemble:
    final: np.ndarray
    trace: WeightTrace
    coherence: np.ndarray | None = None


def run_csl_ensemble(
    psi0: WaveFunction,
    ham: HamiltonianSpec,
    params: CslParams,
    total_time: float,
    seeds: Sequence[int],
    *,
    partition: RegionPartition | None = None,
    record_every: int = 1,
    probes: tuple[float, float] | None = None,
    observe_times: Sequence[float] = (),
    observer: Callable[[float, np.ndarray], None] | None = None,
    dt_max: float = DEFAULT_DT_MAX,
) -> CslEnsemble:
    """Integrate one replica per seed; record weights every ``record_every`` steps.

    With ``probes`` the raw ensemble average of ``psi(q_L) psi*(q_R)`` is
    recorded alongside the weights.  ``observer(t, amps)`` fires at the first
    step boundary at or after each of ``observe_times``.
    """
    grid = psi0.grid
    integ = _Integrator(grid, ham, params, dt_max)
    partition = partition or RegionPartition.halves(grid)
    partition.check_inside(grid)
    masks = np.array(partition.masks(grid.axis), dtype=float)
    steps = step_schedule(total_time, params.dt_sde)
    gens = [rng_for(s) for s in seeds]
    amps = np.repeat(psi0.amplitudes[None, :], len(gens), axis=0)
    if probes is not None:
        kl, kr = grid.nearest_site(probes[0]), grid.nearest_site(probes[1])

    times, weights, coh = [], [], []

    def record(t):
        dens = np.abs(amps) ** 2
        times.append(t)
        weights.append(dens @ masks.T / dens.sum(axis=1, keepdims=True))
        if probes is not None:
            coh.append(np.mean(amps[:, kl] * np.conj(amps[:, kr])))

    ends = np.cumsum(steps)
    if len(steps):
        ends[-1] = total_time
    obs = sorted(observe_times)
    obs_k = 0

    def notify(t):
        nonlocal obs_k
        while obs_k < len(obs) and obs[obs_k] <= t + 1e-9 * params.dt_sde:
            if observer is not None:
                observer(t, amps)
            obs_k += 1

    record(0.0)
    notify(0.0)
    buf = None
    for k, h in enumerate(steps):
        if params.gamma > 0:
            j = k % _NOISE_CHUNK
            if j == 0:
                buf = np.stack([g.standard_normal((_NOISE_CHUNK, integ.sites)) for g in gens], axis=1)
            noise = buf[j]
        else:
            noise = np.zeros((len(gens), integ.sites))
        amps = integ.step(amps, noise, h, step_index=k)
        if (k + 1) % record_every == 0 or k == len(steps) - 1:
            record(float(ends[k]))
        notify(float(ends[k]))
    return CslEnsemble(
        amps,
        WeightTrace(np.array(times), np.array(weights)),
        np.array(coh) if probes is not None else None,
    )


def run_csl(
    psi0: WaveFunction,
    ham: HamiltonianSpec,
    params: CslParams,
    total_time: float,
    seed: int,
    *,
    partition: RegionPartition | None = None,
    record_every: int = 1,
    observe_times: Sequence[float] = (),
    observer: Callable[[float, WaveFunction], None] | None = None,
    dt_max: float = DEFAULT_DT_MAX,
) -> tuple[WaveFunction, WeightTrace]:
    """Single replica; returns the final state and its region-weight trace."""
    wrapped = None
    if observer is not None:
        def wrapped(t, amps):
            observer(t, WaveFunction(psi0.grid, amps[0]))

    ens = run_csl_ensemble(
        psi0, ham, params, total_time, [seed],
        partition=partition, record_every=record_every,
        observe_times=observe_times, observer=wrapped, dt_max=dt_max,
    )
    return WaveFunction(psi0.grid, ens.final[0]), ens.trace
