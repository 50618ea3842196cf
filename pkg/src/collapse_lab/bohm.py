"""Bohmian guidance and quantum-equilibrium sampling on the lattice."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .config_space import WaveFunction, marginal_density
from .errors import DomainError, NodeError
from .seeding import rng_for
from .unitary import DEFAULT_DT_MAX, HamiltonianSpec, step_schedule, step_unitary

DEFAULT_NODE_EPS = 1e-10
NODE_RETRIES = 4


def _wrap(q: np.ndarray, box: float) -> np.ndarray:
    return (q + box / 2) % box - box / 2


def _gradients(psi: WaveFunction) -> list[np.ndarray]:
    """Spectral derivative along each coordinate (periodic, exact for grid plane waves)."""
    a = psi.amplitudes
    grid = psi.grid
    k = 2j * np.pi * np.fft.fftfreq(grid.points_per_axis, d=grid.spacing)
    grads = []
    for ax in range(a.ndim):
        shape = [1] * a.ndim
        shape[ax] = -1
        grads.append(np.fft.ifft(k.reshape(shape) * np.fft.fft(a, axis=ax), axis=ax))
    return grads


def _interpolate(fields: list[np.ndarray], grid, positions: np.ndarray) -> list[np.ndarray]:
    """Multilinear periodic interpolation of several real arrays at ``positions`` (n, N)."""
    m, dx = grid.points_per_axis, grid.spacing
    s = (positions + grid.box_length / 2) / dx
    base = np.floor(s).astype(int)
    frac = s - base
    out = [np.zeros(len(positions)) for _ in fields]
    for corner in itertools.product((0, 1), repeat=grid.num_particles):
        corner = np.array(corner)
        idx = tuple(((base + corner) % m).T)
        w = np.prod(np.where(corner == 1, frac, 1 - frac), axis=1)
        for o, f in zip(out, fields):
            o += w * f[idx]
    return out


class _VelocityField:
    """Velocity evaluator bound to one stored wavefunction.

    The guidance velocity is evaluated exactly on the grid sites and then
    interpolated; it is far smoother than psi itself, whose carrier phase
    would otherwise bias the interpolated ratio.
    """

    def __init__(self, psi: WaveFunction, node_eps: float):
        self.grid = psi.grid
        amp = psi.amplitudes
        dens = np.abs(amp) ** 2
        tiny = np.finfo(float).tiny
        safe = np.where(dens > tiny, dens, 1.0)
        self.velocity = [
            np.where(dens > tiny, np.imag(np.conj(amp) * g) / safe, 0.0) / m
            for g, m in zip(_gradients(psi), psi.grid.masses)
        ]
        self.density = dens
        self.threshold = node_eps * float(dens.max())

    def __call__(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Velocities (n, N) and a boolean mask of configurations at a node."""
        vals = _interpolate([self.density, *self.velocity], self.grid, positions)
        node = vals[0] < self.threshold
        return np.stack(vals[1:], axis=1), node


def velocity_field(psi: WaveFunction, positions, node_eps: float = DEFAULT_NODE_EPS) -> np.ndarray:
    """``v_k = (1/m_k) Im(psi* d_k psi) / |psi|**2`` at one or many configurations."""
    q = np.atleast_2d(np.asarray(positions, dtype=float))
    if q.shape[1] != psi.grid.num_particles:
        raise DomainError(f"configuration must have {psi.grid.num_particles} coordinates")
    v, node = _VelocityField(psi, node_eps)(_wrap(q, psi.grid.box_length))
    if np.any(node):
        raise NodeError("configuration too close to a node of the wavefunction")
    return v[0] if np.ndim(positions) == 1 else v


def sample_quantum_equilibrium(psi: WaveFunction, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. configurations from |psi|**2, shape ``(count, N)``.

    A grid cell is chosen with probability ``|psi|**2 dx**N``; the point is then
    jittered uniformly within the cell.
    """
    if int(count) != count or count <= 0:
        raise DomainError(f"count must be a positive integer, got {count}")
    grid = psi.grid
    rng = rng_for(seed)
    p = psi.density().ravel()
    cells = rng.choice(p.size, size=int(count), p=p / p.sum())
    idx = np.stack(np.unravel_index(cells, grid.shape), axis=1)
    jitter = rng.uniform(-0.5, 0.5, size=idx.shape)
    return _wrap(grid.axis[idx] + jitter * grid.spacing, grid.box_length)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Configurations at each stored time; ``positions`` has shape ``(times, n, N)``.

    ``status[j]`` is ``"ok"`` or ``"node_abort"``; an aborted trajectory keeps
    NaN positions from ``abort_index[j]`` on.
    """

    times: np.ndarray
    positions: np.ndarray
    status: tuple[str, ...] = field(default=())
    abort_index: np.ndarray | None = None

    def single(self, j: int = 0) -> np.ndarray:
        return self.positions[:, j, :]


def psi_timeline(psi0: WaveFunction, ham: HamiltonianSpec, total_time: float, dt: float, dt_max=DEFAULT_DT_MAX):
    """States at ``0, dt, 2dt, ..., T`` (last step truncated); negative ``dt`` runs backwards."""
    steps = step_schedule(total_time, abs(dt))
    sign = 1.0 if dt > 0 else -1.0
    times = [0.0]
    states = [psi0]
    psi = psi0
    for k, h in enumerate(steps):
        psi = step_unitary(psi, ham, sign * h, dt_max, step_index=k) if not ham.is_zero else psi
        times.append(times[-1] + sign * h)
        states.append(psi)
    if steps:
        times[-1] = sign * total_time
    return np.array(times), states


def _rk4_interval(q, v0, v1, h_total, substeps, box):
    """Integrate across one storage interval with linear-in-time velocity interpolation.

    Returns new positions and a mask of trajectories that touched a node.
    """
    h = h_total / substeps
    bad = np.zeros(len(q), dtype=bool)

    def vel(pos, s):
        a, na = v0(pos)
        b, nb = v1(pos)
        nonlocal bad
        bad |= na | nb
        return (1 - s) * a + s * b

    for j in range(substeps):
        s0 = j / substeps
        ds = 1 / substeps
        k1 = vel(q, s0)
        k2 = vel(_wrap(q + 0.5 * h * k1, box), s0 + 0.5 * ds)
        k3 = vel(_wrap(q + 0.5 * h * k2, box), s0 + 0.5 * ds)
        k4 = vel(_wrap(q + h * k3, box), s0 + ds)
        q = _wrap(q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), box)
    return q, bad


def integrate_trajectories(times, states, q0, node_eps: float = DEFAULT_NODE_EPS) -> Trajectory:
    """RK4 integration of many configurations through a stored state timeline."""
    grid = states[0].grid
    box = grid.box_length
    q = _wrap(np.atleast_2d(np.asarray(q0, dtype=float)), box)
    if q.shape[1] != grid.num_particles:
        raise DomainError(f"configurations must have {grid.num_particles} coordinates")
    n = len(q)
    out = np.full((len(times), n, grid.num_particles), np.nan)
    out[0] = q
    alive = np.ones(n, dtype=bool)
    abort = np.full(n, -1)
    fields = [_VelocityField(s, node_eps) for s in states]
    _, start_node = fields[0](q)
    alive &= ~start_node
    abort[start_node] = 0
    out[0, start_node] = np.nan
    for k in range(len(times) - 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        h = times[k + 1] - times[k]
        new, bad = _rk4_interval(q[idx], fields[k], fields[k + 1], h, 1, box)
        for r in range(1, NODE_RETRIES + 1):
            if not bad.any():
                break
            retry = idx[bad]
            sub, bad_sub = _rk4_interval(q[retry], fields[k], fields[k + 1], h, 4**r, box)
            new[bad] = sub
            bad_pos = np.flatnonzero(bad)
            bad = np.zeros_like(bad)
            bad[bad_pos[bad_sub]] = True
        failed = idx[bad]
        alive[failed] = False
        abort[failed] = k + 1
        ok = idx[~bad]
        q[ok] = new[~bad]
        out[k + 1, ok] = q[ok]
    status = tuple("ok" if a < 0 else "node_abort" for a in abort)
    return Trajectory(np.asarray(times), out, status, abort)


def run_bohm(
    psi0: WaveFunction,
    ham: HamiltonianSpec,
    q0,
    total_time: float,
    dt: float,
    *,
    node_eps: float = DEFAULT_NODE_EPS,
    dt_max: float = DEFAULT_DT_MAX,
) -> Trajectory:
    """Guide configuration(s) ``q0`` by the unitarily evolving ``psi0``.

    ``q0`` may be one configuration ``(N,)`` or an ensemble ``(n, N)``; the
    state timeline is computed once and shared.  Negative ``dt`` integrates
    backwards in time.
    """
    if dt == 0:
        raise DomainError("dt must be nonzero")
    times, states = psi_timeline(psi0, ham, total_time, dt, dt_max)
    return integrate_trajectories(times, states, q0, node_eps)


def ks_distance_to_marginal(samples: np.ndarray, psi: WaveFunction, i: int = 1) -> float:
    """Kolmogorov-Smirnov distance between samples of ``Q_i`` and the grid marginal.

    The marginal is read as a piecewise-constant density on cells centered at
    the grid sites, matching the equilibrium sampler.
    """
    grid = psi.grid
    x = np.sort(np.asarray(samples, dtype=float))
    x = x[np.isfinite(x)]
    p = marginal_density(psi, i) * grid.spacing
    edges = grid.axis - grid.spacing / 2
    cdf_edges = np.concatenate([[0.0], np.cumsum(p)])
    cdf_edges /= cdf_edges[-1]

    def cdf(v):
        pos = (v - edges[0]) / grid.spacing
        k = np.clip(np.floor(pos).astype(int), 0, grid.points_per_axis - 1)
        frac = np.clip(pos - k, 0, 1)
        return cdf_edges[k] + frac * (cdf_edges[k + 1] - cdf_edges[k])

    f = cdf(x)
    n = len(x)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(n) / n
    return float(max(upper.max(), lower.max()))
