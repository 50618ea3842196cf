"""End-to-end acceptance checks.

Each test appends one ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line to the session summary before asserting, so a run always shows the
state of every criterion even when some of them fail.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

import oracles
from conftest import ACCEPTANCE_LINES
from collapse_lab import (
    GridSpec,
    GrwParams,
    HamiltonianSpec,
    RegionPartition,
    apply_collapse,
    collapse_center_density,
    evolve,
    gaussian_packet,
    matter_density,
    run_grw,
    superpose,
    symmetrize,
)
from collapse_lab.analysis import (
    branch_weights,
    continuum_limit_scan,
    decoherence_scan,
    distortion_metric,
    symmetry_violation,
)
from collapse_lab.bohm import ks_distance_to_marginal, run_bohm, sample_quantum_equilibrium, velocity_field
from collapse_lab.config import parse_config
from collapse_lab.csl import CslParams, run_csl, run_csl_ensemble
from collapse_lab.grw import boundary_mass, kernel_values, sample_center
from collapse_lab.runner import run_scenario
from collapse_lab.seeding import replica_seed, rng_for
from collapse_lab.unitary import Harmonic


def report(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


def cat(grid, left, right, sigma, w_left=0.5, momenta=(0.0, 0.0)):
    return superpose([
        (math.sqrt(w_left), gaussian_packet(grid, [left], [sigma], [momenta[0]])),
        (math.sqrt(1 - w_left), gaussian_packet(grid, [right], [sigma], [momenta[1]])),
    ])


# -- 1. unitarity ------------------------------------------------------------

def test_criterion_01_unitarity():
    start = time.perf_counter()
    g = GridSpec(1, 256, 40.0)
    psi = evolve(gaussian_packet(g, [-3.0], [1.0], [1.5]), HamiltonianSpec(), 10.0, 1e-3)
    norm_err = abs(psi.norm() - 1)
    # the Strang split breathes at order dt**2; dt = 1e-4 keeps that below the drift bound
    ham = HamiltonianSpec(external=(Harmonic(1.0),))
    ground = gaussian_packet(g, [0.0], [math.sqrt(0.5)])
    drift = float(np.max(np.abs(evolve(ground, ham, 1.0, 1e-4).density() - ground.density())))
    ok = norm_err <= 1e-9 and drift <= 1e-8
    report(1, ok, f"norm error {norm_err:.2e} <= 1e-9, ground-state drift {drift:.2e} <= 1e-8 "
                  f"({time.perf_counter() - start:.1f} s)")
    assert ok


# -- 2. free dispersion ------------------------------------------------------

def test_criterion_02_free_dispersion():
    g = GridSpec(1, 256, 40.0)
    psi = gaussian_packet(g, [0.0], [1.0])
    worst, edge = 0.0, 0.0
    for t in (0.5, 1.0, 1.5, 2.0):
        out = evolve(psi, HamiltonianSpec(), t, 1e-3)
        rho = out.density() * g.spacing
        mean = float(np.sum(g.axis * rho))
        width = math.sqrt(float(np.sum((g.axis - mean) ** 2 * rho)))
        worst = max(worst, abs(width / oracles.free_width(1.0, 1.0, t) - 1))
        edge = max(edge, boundary_mass(out))
    ok = worst <= 5e-3 and edge < 1e-6
    report(2, ok, f"worst relative width error {worst:.2e} <= 5e-3, boundary mass {edge:.1e} < 1e-6")
    assert ok


# -- 3. matter conservation ----------------------------------------------------

SCENARIO = """\
[grid]
points = 128
box = 40
[initial]
kind = cat
centers = -5 ; 5
widths = 1
weights = 0.7, 0.3
[dynamics]
dt = 0.01
t_final = 1
[process]
kind = {kind}
lambda = 5
alpha = 1
trajectories = 20
[analysis]
regions = -20:0, 0:20
snapshot_every = 0.1
[run]
replicas = 2
seed = 5
output = out
"""


def _matter_totals(out: Path):
    totals = []
    for path in sorted(out.glob("replica_*/matter_*.csv")):
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        totals.append(float(data[:, 1].sum() * (data[1, 0] - data[0, 0])))
    return totals


def test_criterion_03_matter_conservation(tmp_path):
    worst, count = 0.0, 0
    for kind in ("unitary", "grw", "csl", "bohm"):
        run_scenario(parse_config(SCENARIO.format(kind=kind)), tmp_path / kind)
        totals = _matter_totals(tmp_path / kind / "out")
        count += len(totals)
        worst = max(worst, max(abs(m - 1) for m in totals))
    # two-particle field with unequal masses, before and after each of many hits
    g = GridSpec(2, 64, 24.0, masses=(1.0, 3.0))
    psi = gaussian_packet(g, [-2.0, 2.0], [1.0, 1.5])
    rng = rng_for(9)
    params = GrwParams(1.0, 1.0)
    for k in range(20):
        label = 1 + k % 2
        psi = apply_collapse(psi, label, sample_center(psi, label, params, rng), params)
        psi = evolve(psi, HamiltonianSpec(), 0.05, 0.01)
        worst = max(worst, abs(matter_density(psi).total_mass - 4.0))
        count += 1
    ok = worst <= 1e-9
    report(3, ok, f"max |sum m dx - sum m_i| = {worst:.2e} <= 1e-9 over {count} snapshots")
    assert ok


# -- 4. collapse-center law ----------------------------------------------------

def test_criterion_04_center_law():
    g = GridSpec(1, 512, 40.0)
    mu, sigma, alpha = 1.3, 1.0, 4.0
    psi = gaussian_packet(g, [mu], [sigma])
    params = GrwParams(1.0, alpha)
    rng = rng_for(2024)
    xs = np.array([sample_center(psi, 1, params, rng) for _ in range(10_000)])
    ks = stats.kstest(xs, "norm", args=(mu, math.sqrt(sigma**2 + 1 / (4 * alpha))))
    # the sampler density and the raw squared kernel both carry unit mass; the
    # compact cos^4 sums exactly only when its support spans whole cells (2w = 64 dx)
    norms = []
    for p in (params, GrwParams(1.0, 1.0, "compact", 2.5)):
        norms.append(abs(float(collapse_center_density(psi, 1, p).sum() * g.spacing) - 1))
        norms.append(abs(float(np.sum(kernel_values(p, g.axis) ** 2) * g.spacing) - 1))
    ok = ks.pvalue > 0.01 and max(norms) <= 1e-9
    report(4, ok, f"KS p-value {ks.pvalue:.3f} > 0.01, density normalization error {max(norms):.1e} <= 1e-9")
    assert ok


# -- 5. Poisson clock --------------------------------------------------------

def _poisson_chi2(counts, mean):
    lo, hi = int(counts.min()), int(counts.max())
    ks = np.arange(lo, hi + 1)
    expected = stats.poisson.pmf(ks, mean) * len(counts)
    expected[0] += stats.poisson.cdf(lo - 1, mean) * len(counts)
    expected[-1] += stats.poisson.sf(hi, mean) * len(counts)
    observed = np.array([(counts == k).sum() for k in ks], dtype=float)
    # merge neighbouring bins until each expects at least five counts
    obs_b, exp_b, o, e = [], [], 0.0, 0.0
    for ob, ex in zip(observed, expected):
        o, e = o + ob, e + ex
        if e >= 5:
            obs_b.append(o)
            exp_b.append(e)
            o, e = 0.0, 0.0
    obs_b[-1] += o
    exp_b[-1] += e
    return stats.chisquare(obs_b, exp_b).pvalue


def test_criterion_05_poisson_clock():
    g = GridSpec(2, 64, 40.0)
    psi = gaussian_packet(g, [-3.0, 3.0], [1.5, 1.5])
    params = GrwParams(5.0, 1.0)
    counts = np.array([
        len(run_grw(psi, HamiltonianSpec.zero(), params, 10.0, 0.1, replica_seed(55, r))[1])
        for r in range(400)
    ])
    mean = counts.mean()
    p = _poisson_chi2(counts, 100.0)
    ok = abs(mean - 100) <= 1.5 and p > 0.01
    report(5, ok, f"mean count {mean:.2f} in 100 +- 1.5, chi-square p-value {p:.3f} > 0.01")
    assert ok


# -- 6. Born rule ------------------------------------------------------------

def test_criterion_06_born_rule():
    g = GridSpec(1, 256, 40.0)
    psi = cat(g, -5.0, 5.0, 1.0, w_left=0.7)
    part = RegionPartition.halves(g)
    params = GrwParams(20.0, 4.0)
    right, weakest = 0, 1.0
    for r in range(1000):
        final, _ = run_grw(psi, HamiltonianSpec.zero(), params, 1.0, 0.1, replica_seed(6, r))
        w = branch_weights(matter_density(final), part)
        right += w[1] > 0.5
        weakest = min(weakest, max(w))
    freq = right / 1000
    ok = abs(freq - 0.3) <= 0.045 and weakest >= 0.99
    report(6, ok, f"right-branch frequency {freq:.3f} in 0.3 +- 0.045, min final max-weight {weakest:.6f} >= 0.99")
    assert ok


# -- 7. structured tails -----------------------------------------------------

def test_criterion_07_structured_tails():
    alpha, sigma = 0.01, 0.2
    g = GridSpec(1, 1024, 64.0)
    part = RegionPartition.halves(g)
    worst = 0.0
    for k in (1, 2, 3):
        s = k / math.sqrt(alpha)
        psi = cat(g, -s / 2, s / 2, sigma)
        wl, wr = branch_weights(matter_density(apply_collapse(psi, 1, s / 2, GrwParams(1, alpha))), part)
        worst = max(worst, abs((wl / wr) / math.exp(-2 * alpha * s**2) - 1))
    base = cat(g, -5.0, 5.0, 1.0)
    d_gauss = distortion_metric(apply_collapse(base, 1, 5.0, GrwParams(1, 0.05)), base, (-32.0, 0.0))
    d_flat = distortion_metric(apply_collapse(base, 1, 5.0, GrwParams(1, 1e-8)), base, (-32.0, 0.0))
    ok = worst <= 0.05 and d_gauss > 0 and d_flat <= 1e-6
    report(7, ok, f"worst weight-ratio error {worst:.3f} <= 0.05, distortion {d_gauss:.2e} > 0, "
                  f"alpha -> 0 distortion {d_flat:.1e} <= 1e-6")
    assert ok


# -- 8. compact support --------------------------------------------------------

def test_criterion_08_compact_support():
    g = GridSpec(1, 256, 40.0)
    psi = cat(g, -5.0, 5.0, 1.0)
    # separation 10 and sigma 1 give s - 6 sigma = 4 > w = 2
    post = apply_collapse(psi, 1, 5.0, GrwParams(1, 1, "compact", 2.0))
    far = branch_weights(matter_density(post), RegionPartition.halves(g))[0]
    later = evolve(post, HamiltonianSpec(), 0.5, 1e-3)
    regrown = branch_weights(matter_density(later), RegionPartition(((-20.0, -3.0),)))[0]
    ok = far <= 1e-12 and regrown > 0
    report(8, ok, f"far weight after hit {far:.1e} <= 1e-12, far mass after T = 0.5 {regrown:.2e} > 0")
    assert ok


# -- 9. symmetry violation -------------------------------------------------------

def test_criterion_09_symmetry():
    g = GridSpec(2, 128, 32.0)
    sym = symmetrize(gaussian_packet(g, [-3.0, 3.0], [1.0, 1.0]))
    pre = symmetry_violation(sym)
    post = symmetry_violation(apply_collapse(sym, 1, -2.0, GrwParams(1, 1.0)))
    ok = pre <= 1e-12 and post >= 1e-3
    report(9, ok, f"pre-collapse violation {pre:.1e} <= 1e-12, post-collapse {post:.3f} >= 1e-3")
    assert ok


# -- 10. decoherence oracle --------------------------------------------------------

def test_criterion_10_decoherence():
    g = GridSpec(1, 64, 64.0)
    psi = gaussian_packet(g, [0.0], [2.0])
    lam, alpha = 10.0, 0.05
    kl, kr = g.nearest_site(-1.0), g.nearest_site(1.0)
    s = g.axis[kr] - g.axis[kl]
    rate = oracles.grw_rate(lam, alpha, s)
    times = np.linspace(0, 2.5 / rate, 26)
    curve = decoherence_scan(psi, HamiltonianSpec.zero(), GrwParams(lam, alpha), replicas=1000,
                             probes=(-1.0, 1.0), times=times, dt=0.05, seed=10)
    fitted = oracles.log_linear_rate(times, curve.coherence)
    rho0 = np.outer(psi.amplitudes, psi.amplitudes.conj())
    brute = oracles.grw_master_equation_coherence(g.axis, rho0, lam, alpha, times, -1.0, 1.0)
    brute_rate = oracles.log_linear_rate(times, brute)
    err_a = abs(fitted / rate - 1)
    err_b = abs(fitted / brute_rate - 1)
    ok = err_a <= 0.05 and err_b <= 0.05
    report(10, ok, f"fitted rate {fitted:.4f} vs analytic {rate:.4f} ({err_a:.3f}) and "
                   f"master equation {brute_rate:.4f} ({err_b:.3f}), both <= 0.05")
    assert ok


# -- 11. continuum limit -----------------------------------------------------------

@pytest.fixture(scope="module")
def ladder():
    g = GridSpec(1, 128, 64.0)
    psi = gaussian_packet(g, [0.0], [1.0])
    return continuum_limit_scan(psi, HamiltonianSpec.zero(), GrwParams(20.0, 0.1), levels=(1, 2, 4, 8),
                                replicas=1000, probes=(-0.5, 0.5), times=np.linspace(0, 3, 31),
                                dt=0.01, seed=11)


def test_criterion_11_continuum_limit(ladder):
    rates = [lv.curve.rate for lv in ladder]
    p99 = [lv.curve.jump_quantile(0.99) for lv in ladder]
    spread = max(rates) / min(rates) - 1
    decreasing = all(a > b for a, b in zip(p99, p99[1:]))
    ok = spread <= 0.10 and decreasing
    report(11, ok, f"rates {', '.join(f'{r:.3f}' for r in rates)} spread {spread:.3f} <= 0.10, "
                   f"p99 jumps {', '.join(f'{j:.3f}' for j in p99)} strictly decreasing")
    assert ok


@pytest.mark.xfail(strict=True, reason="the largest single jump shrinks only about twofold from k = 1 to 8")
def test_continuum_max_jump_quarter(ladder):
    assert ladder[-1].curve.max_jump <= ladder[0].curve.max_jump / 4


# -- 12. CSL ------------------------------------------------------------------------

def test_criterion_12_csl():
    g = GridSpec(1, 64, 24.0)
    psi = cat(g, -5.0, 5.0, 0.75, w_left=0.7)
    free = CslParams(gamma=0.0, smearing_alpha=1.0, dt_sde=1e-3, stride=2)
    unitary_err = run_csl(psi, HamiltonianSpec(), free, 1.0, 1)[0].distance(evolve(psi, HamiltonianSpec(), 1.0, 1e-3))

    params = CslParams(gamma=1.0, smearing_alpha=1.0, dt_sde=1e-3, stride=2)
    n = 1000
    seeds = [replica_seed(12, r) for r in range(n)]
    ens = run_csl_ensemble(psi, HamiltonianSpec.zero(), params, 10.0, seeds, record_every=2500)
    right = ens.trace.weights[:, :, 1]
    drift = max(abs(right[k].mean() - 0.3) / (right[k].std(ddof=1) / math.sqrt(n) or 1.0)
                for k in range(1, len(right)))
    freq = float(np.mean(right[-1] > 0.5))
    band = 3 * math.sqrt(0.21 / n)

    # a diffusive trace shrinks its per-step increments like sqrt(dt); a jump process would not
    def p99_step(dt):
        p = CslParams(gamma=1.0, smearing_alpha=1.0, dt_sde=dt, stride=2)
        tr = run_csl_ensemble(psi, HamiltonianSpec.zero(), p, 0.5, seeds[:200]).trace
        return float(np.quantile(np.abs(np.diff(tr.weights[:, :, 1], axis=0)), 0.99))

    ratio = p99_step(5e-4) / p99_step(1e-3)
    ok = unitary_err <= 1e-10 and drift <= 3 and abs(freq - 0.3) <= band and 0.5 <= ratio <= 0.85
    report(12, ok, f"gamma = 0 error {unitary_err:.1e} <= 1e-10, mean drift {drift:.2f} <= 3 SE, "
                   f"survival {freq:.3f} in 0.3 +- {band:.3f}, dt-halving jump ratio {ratio:.3f} in [0.5, 0.85]")
    assert ok


# -- 13. Bohmian equivariance -----------------------------------------------------

def test_criterion_13_equivariance():
    g = GridSpec(1, 256, 40.0)
    psi = cat(g, -3.0, 3.0, 1.0, momenta=(1.0, -1.0))
    q0 = sample_quantum_equilibrium(psi, 10_000, seed=13)
    traj = run_bohm(psi, HamiltonianSpec(), q0, 1.0, 1e-2)
    dists = []
    for t in (0.5, 1.0):
        k = int(np.argmin(np.abs(traj.times - t)))
        dists.append(ks_distance_to_marginal(traj.positions[k, :, 0], evolve(psi, HamiltonianSpec(), t, 1e-2)))
    real = gaussian_packet(g, [0.0], [1.0])
    v = float(np.max(np.abs(velocity_field(real, np.linspace(-4, 4, 81)[:, None]))))
    aborted = sum(st != "ok" for st in traj.status)
    ok = max(dists) <= 0.02 and v <= 1e-8
    report(13, ok, f"KS distances {dists[0]:.4f}, {dists[1]:.4f} <= 0.02 ({aborted} node aborts), "
                   f"real-state velocity {v:.1e} <= 1e-8")
    assert ok


# -- 14. reproducibility ------------------------------------------------------------

def test_criterion_14_reproducibility(tmp_path):
    mismatched = []
    for kind in ("unitary", "grw", "csl", "bohm"):
        cfg = parse_config(SCENARIO.format(kind=kind).replace("replicas = 2", "replicas = 4"))
        manifests = []
        for tag, threads in (("a", 1), ("b", 1), ("c", 8)):
            run_scenario(cfg, tmp_path / kind / tag, threads=threads)
            manifests.append((tmp_path / kind / tag / "out" / "manifest").read_bytes())
        if len(set(manifests)) != 1:
            mismatched.append(kind)
    ok = not mismatched
    report(14, ok, "manifests byte-identical across reruns and 1 vs 8 threads"
                   + (f", mismatch in {mismatched}" if mismatched else " for all four process kinds"))
    assert ok
