"""GRW jump process: Poisson clock, collapse-center law and the localization operator.

A hit on particle ``i`` at center ``x`` multiplies the wavefunction by the
kernel ``k(q_i - x)`` and renormalizes.  Centers are drawn from
``p(x) = ||k(q_i - x) psi||**2``; the kernel amplitude is chosen so that
``p`` integrates to one for every normalized state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .config_space import GridSpec, WaveFunction, marginal_density
from .errors import ClockOverrunError, DomainError, ZeroWeightError
from .matter import RegionPartition, matter_density
from .seeding import rng_for
from .unitary import DEFAULT_DT_MAX, HamiltonianSpec, step_unitary

DEFAULT_LAMBDA = 0.5
DEFAULT_ALPHA = 4.0
DEFAULT_MAX_EVENTS = 10**6


@dataclass(frozen=True)
class GrwParams:
    lambda_rate: float = DEFAULT_LAMBDA
    alpha: float = DEFAULT_ALPHA
    kernel: str = "gaussian"
    half_width: float | None = None

    def __post_init__(self):
        if not (self.lambda_rate > 0 and math.isfinite(self.lambda_rate)):
            raise DomainError(f"collapse rate must be > 0, got {self.lambda_rate}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if self.kernel not in ("gaussian", "compact"):
            raise DomainError(f"unknown kernel {self.kernel!r}")
        if self.kernel == "compact" and not (self.half_width and self.half_width > 0):
            raise DomainError("compact kernel needs a positive half_width")

    def check_grid(self, grid: GridSpec) -> None:
        if self.kernel == "compact":
            w = self.half_width
            if not 2 * grid.spacing <= w <= grid.box_length / 4:
                raise DomainError(
                    f"compact half_width {w} outside [2*dx, L/4] = "
                    f"[{2 * grid.spacing}, {grid.box_length / 4}]"
                )

    def scaled(self, k: float) -> "GrwParams":
        """Rate times ``k``, alpha over ``k``: the continuum-limit ladder."""
        return GrwParams(self.lambda_rate * k, self.alpha / k, self.kernel, self.half_width)


@dataclass(frozen=True)
class CollapseEvent:
    """One hit; ``(time, center)`` is the corresponding flash."""

    time: float
    label: int
    center: float
    pre_weights: tuple[float, ...] | None = None
    post_weights: tuple[float, ...] | None = None

    @property
    def weight_jump(self) -> float:
        if self.pre_weights is None or self.post_weights is None:
            return math.nan
        return max(abs(a - b) for a, b in zip(self.pre_weights, self.post_weights))


def kernel_values(params: GrwParams, u: np.ndarray) -> np.ndarray:
    """Localization kernel ``k(u)`` normalized so that ``int k(u)**2 du = 1``."""
    u = np.asarray(u, dtype=float)
    if params.kernel == "gaussian":
        amp = (2 * params.alpha / math.pi) ** 0.25
        return amp * np.exp(-params.alpha * u**2)
    w = params.half_width
    # int_{-w}^{w} cos^4(pi u / 2w) du = 3w/4
    amp = math.sqrt(4 / (3 * w))
    inside = np.abs(u) < w
    return np.where(inside, amp * np.cos(np.pi * u / (2 * w)) ** 2, 0.0)


@lru_cache(maxsize=16)
def _squared_kernel_matrix(grid: GridSpec, params: GrwParams) -> np.ndarray:
    q = grid.axis
    return kernel_values(params, q[None, :] - q[:, None]) ** 2


def collapse_center_density(psi: WaveFunction, i: int, params: GrwParams) -> np.ndarray:
    """Density of collapse centers for a hit on particle ``i``, on the grid sites."""
    grid = psi.grid
    marg = marginal_density(psi, i)
    p = _squared_kernel_matrix(grid, params) @ marg * grid.spacing
    # absorbs the quadrature error of the analytic amplitude and the box cut-off
    return p / (p.sum() * grid.spacing)


def apply_collapse(psi: WaveFunction, i: int, x: float, params: GrwParams) -> WaveFunction:
    """Multiply along coordinate ``i`` by the kernel centered at ``x`` and renormalize."""
    grid = psi.grid
    ax = grid.check_label(i)
    factor = kernel_values(params, grid.axis - x)
    shape = [1] * grid.num_particles
    shape[ax] = grid.points_per_axis
    amps = psi.amplitudes * factor.reshape(shape)
    nrm = math.sqrt(float(np.vdot(amps, amps).real) * grid.cell_volume)
    if nrm < 1e-12:
        raise ZeroWeightError(f"collapse at x={x} on particle {i} leaves norm {nrm:.3g}")
    return WaveFunction(grid, amps / nrm)


def sample_center(psi: WaveFunction, i: int, params: GrwParams, rng: np.random.Generator) -> float:
    grid = psi.grid
    cdf = np.cumsum(collapse_center_density(psi, i, params))
    site = min(int(np.searchsorted(cdf, rng.uniform() * cdf[-1], side="right")), grid.points_per_axis - 1)
    x = grid.axis[site] + rng.uniform(-0.5, 0.5) * grid.spacing
    return max(x, -grid.box_length / 2)


def boundary_mass(psi: WaveFunction, cells: int = 2) -> float:
    """Probability within ``cells`` sites of the box edge, for any coordinate."""
    grid = psi.grid
    dens = psi.density()
    edge = np.zeros(grid.points_per_axis, dtype=bool)
    edge[:cells] = edge[-cells:] = True
    inner = ~edge
    interior = dens
    for ax in range(grid.num_particles):
        idx = [slice(None)] * grid.num_particles
        idx[ax] = inner
        interior = interior[tuple(idx)]
    return float(dens.sum() - interior.sum()) * grid.cell_volume


Observer = Callable[[float, WaveFunction], None]


def run_grw(
    psi0: WaveFunction,
    ham: HamiltonianSpec,
    params: GrwParams,
    total_time: float,
    dt: float,
    seed: int,
    *,
    partition: RegionPartition | None = None,
    observe_times: Sequence[float] = (),
    observer: Observer | None = None,
    max_events: int = DEFAULT_MAX_EVENTS,
    dt_max: float = DEFAULT_DT_MAX,
) -> tuple[WaveFunction, list[CollapseEvent]]:
    """Unitary evolution interrupted by GRW hits at exponential waiting times.

    The total hit rate is ``N * lambda`` regardless of the state; the hit
    particle is uniform over the labels.  ``observer(t, psi)`` is called at
    every time in ``observe_times`` (sorted, within ``[0, T]``).
    """
    grid = psi0.grid
    params.check_grid(grid)
    if total_time < 0:
        raise DomainError(f"total time must be >= 0, got {total_time}")
    if not 0 < dt <= dt_max:
        raise DomainError(f"dt must satisfy 0 < dt <= {dt_max}, got {dt}")
    rng = rng_for(seed)
    rate = grid.num_particles * params.lambda_rate
    obs = sorted(t for t in observe_times if 0 <= t <= total_time * (1 + 1e-12))
    obs_k = 0
    events: list[CollapseEvent] = []
    psi = psi0
    t = 0.0
    step_k = 0
    next_hit = rng.exponential(1 / rate)

    if partition is not None:
        partition.check_inside(grid)
        masks = np.array(partition.masks(grid.axis), dtype=float)

    def weights(state):
        if partition is None:
            return None
        m = matter_density(state).density
        return tuple((masks @ m / m.sum()).tolist())

    def advance(state, t_from, t_to):
        if ham.is_zero or t_to <= t_from:
            return state
        h = t_to - t_from
        if abs(h - dt) <= 1e-9 * dt:
            h = dt  # keeps the cached propagator for full steps
        return step_unitary(state, ham, h, dt_max, step_index=step_k)

    while True:
        while obs_k < len(obs) and obs[obs_k] <= t + 1e-12 * max(1.0, t):
            if observer is not None:
                observer(obs[obs_k], psi)
            obs_k += 1
        if t >= total_time:
            break
        stop = min((step_k + 1) * dt, total_time)
        if stop - t <= 1e-12 * max(1.0, t):
            step_k += 1
            continue
        if obs_k < len(obs):
            stop = min(stop, obs[obs_k])
        if next_hit < stop:
            psi = advance(psi, t, next_hit)
            t = next_hit
            label = int(rng.integers(1, grid.num_particles + 1))
            x = sample_center(psi, label, params, rng)
            pre = weights(psi)
            psi = apply_collapse(psi, label, x, params)
            events.append(CollapseEvent(t, label, float(x), pre, weights(psi)))
            if len(events) > max_events:
                raise ClockOverrunError(f"more than {max_events} collapse events")
            next_hit = t + rng.exponential(1 / rate)
            continue
        psi = advance(psi, t, stop)
        t = stop
        if t >= (step_k + 1) * dt - 1e-12 * max(1.0, t):
            step_k += 1
    return psi, events
