"""Scenario execution: seeded replicas, CSV artifacts, manifest and figures."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analysis import continuum_limit_scan, export_flashes
from .bohm import run_bohm, sample_quantum_equilibrium
from .config import ScenarioConfig, serialize
from .csl import run_csl
from .errors import CollapseLabError
from .grw import boundary_mass, run_grw
from .matter import RegionPartition, matter_density, region_weights
from .parallel import map_replicas
from .seeding import replica_seed
from .unitary import evolve

log = logging.getLogger(__name__)

BOUNDARY_WARN = 1e-6


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class CsvArtifact:
    name: str
    header: tuple[str, ...]
    rows: list = field(default_factory=list)

    def to_bytes(self) -> bytes:
        lines = [",".join(self.header)]
        lines.extend(",".join(fmt(v) for v in row) for row in self.rows)
        return ("\n".join(lines) + "\n").encode("utf-8")


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    rows: int
    sha256: str


@dataclass
class RunRecord:
    config_text: str
    config: str
    seeds: list[int]
    wall_time: float = 0.0
    manifest: list[ManifestEntry] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    figures: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _ensure_writable(out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out_dir, prefix=".probe", delete=True):
            pass
    except OSError as exc:
        raise OSError(f"output directory {out_dir} is not writable: {exc}") from exc


def write_outputs(record: RunRecord, artifacts: Sequence[CsvArtifact], out_dir: Path) -> list[ManifestEntry]:
    """Write every artifact plus ``manifest`` (name, rows, sha256) and ``run_record.json``."""
    out_dir = Path(out_dir)
    _ensure_writable(out_dir)
    entries = []
    for art in artifacts:
        data = art.to_bytes()
        path = out_dir / art.name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        entries.append(ManifestEntry(art.name, len(art.rows), hashlib.sha256(data).hexdigest()))
    manifest = CsvArtifact("manifest", ("name", "rows", "sha256"))
    manifest.rows = [(e.name, e.rows, e.sha256) for e in entries]
    # manifest rows are strings/ints; fmt only touches numbers
    text = [",".join(manifest.header)] + [f"{n},{r},{h}" for n, r, h in manifest.rows]
    (out_dir / "manifest").write_bytes(("\n".join(text) + "\n").encode("utf-8"))
    record.manifest = entries
    (out_dir / "run_record.json").write_text(record.to_json() + "\n", encoding="utf-8")
    return entries


# ---- replicas ----------------------------------------------------------------


@dataclass
class _ReplicaResult:
    artifacts: list[CsvArtifact]
    plot_data: dict
    warnings: list[str]


def _matter_artifact(prefix: str, k: int, psi) -> tuple[CsvArtifact, tuple]:
    fld = matter_density(psi)
    art = CsvArtifact(f"{prefix}matter_{k:04d}.csv", ("x", "m"), list(zip(fld.axis, fld.density)))
    return art, fld


def _region_header(partition: RegionPartition) -> tuple[str, ...]:
    return ("t",) + tuple(f"w_region_{j + 1}" for j in range(len(partition)))


def _run_replica(cfg: ScenarioConfig, index: int, seed: int) -> _ReplicaResult:
    grid = cfg.build_grid()
    psi0 = cfg.build_initial(grid)
    ham = cfg.build_hamiltonian()
    dyn, proc, ana = cfg.dynamics, cfg.process, cfg.analysis
    partition = cfg.partition()
    prefix = f"replica_{index:04d}/"
    times = cfg.snapshot_times()
    snaps: list[tuple[float, object]] = []
    arts: list[CsvArtifact] = []
    plot: dict = {}

    def observe(t, psi):
        snaps.append((t, psi))

    if proc.kind == "unitary":
        psi, t_prev = psi0, 0.0
        for t in times:
            psi = evolve(psi, ham, t - t_prev, dyn.dt, dyn.dt_max)
            observe(t, psi)
            t_prev = t
    elif proc.kind == "grw":
        _, events = run_grw(
            psi0, ham, cfg.grw_params(), dyn.t_final, dyn.dt, seed,
            partition=partition, observe_times=times, observer=observe,
            max_events=proc.max_events, dt_max=dyn.dt_max,
        )
        arts.append(CsvArtifact(prefix + "flashes.csv", ("t", "i", "x"), [(e.time, e.label, e.center) for e in events]))
        flashes = export_flashes(events)
        arts.append(CsvArtifact(prefix + "flash_set.csv", ("t", "x"), [tuple(f) for f in flashes]))
        plot["flashes"] = flashes
    elif proc.kind == "csl":
        part = partition or RegionPartition.halves(grid)
        _, trace = run_csl(
            psi0, ham, cfg.csl_params(), dyn.t_final, seed, partition=part,
            record_every=ana.record_every, observe_times=times, observer=observe, dt_max=dyn.dt_max,
        )
        arts.append(CsvArtifact(prefix + "weights.csv", _region_header(part), list(trace.rows(0))))
        plot["trace"] = (trace.times, trace.weights[:, 0, :])
    elif proc.kind == "bohm":
        q0 = sample_quantum_equilibrium(psi0, proc.trajectories, seed)
        traj = run_bohm(psi0, ham, q0, dyn.t_final, dyn.dt, node_eps=proc.node_eps, dt_max=dyn.dt_max)
        header = ("t",) + tuple(f"Q_{i + 1}" for i in range(grid.num_particles))
        for j in range(q0.shape[0]):
            rows = [(t, *q) for t, q in zip(traj.times, traj.positions[:, j, :]) if np.all(np.isfinite(q))]
            arts.append(CsvArtifact(prefix + f"trajectory_{j:04d}.csv", header, rows))
        arts.append(CsvArtifact(
            prefix + "trajectory_status.csv", ("j", "status", "abort_index"),
            [(j, s, int(a)) for j, (s, a) in enumerate(zip(traj.status, traj.abort_index))],
        ))
        # matter snapshots from the same unitary timeline
        psi, t_prev = psi0, 0.0
        for t in times:
            psi = evolve(psi, ham, t - t_prev, dyn.dt, dyn.dt_max)
            observe(t, psi)
            t_prev = t
        plot["trajectories"] = (traj.times, traj.positions)

    warns = []
    fields = []
    for k, (t, psi) in enumerate(snaps):
        art, fld = _matter_artifact(prefix, k, psi)
        arts.append(art)
        fields.append((t, fld))
        edge = boundary_mass(psi)
        if edge > BOUNDARY_WARN:
            warns.append(f"replica {index}: boundary mass {edge:.3g} at t={t:.6g} exceeds {BOUNDARY_WARN}")
    if partition is not None and proc.kind in ("unitary", "grw", "bohm"):
        rows = [(t, *region_weights(fld, partition)) for t, fld in fields]
        arts.append(CsvArtifact(prefix + "weights.csv", _region_header(partition), rows))
    plot["snapshots"] = [(t, fld.axis, fld.density) for t, fld in fields]
    return _ReplicaResult(arts, plot, warns)


def _replica_job(args):
    cfg, index, seed = args
    try:
        return index, _run_replica(cfg, index, seed), None
    except (CollapseLabError, FloatingPointError, ArithmeticError) as exc:
        return index, None, {"replica": index, "seed": seed, "error": type(exc).__name__, "message": str(exc)}


def _render_run_figures(cfg: ScenarioConfig, plot: dict, fig_dir: Path) -> list[str]:
    from . import plotting

    out = []
    regions = cfg.analysis.regions
    if plot.get("snapshots"):
        out.append(plotting.plot_matter_snapshots(plot["snapshots"], fig_dir / "matter.png", regions))
        out.append(plotting.plot_matter_log(plot["snapshots"][-1], fig_dir / "matter_tails.png"))
    if "flashes" in plot:
        out.append(plotting.plot_flashes(plot["flashes"], fig_dir / "flashes.png", cfg.dynamics.t_final))
    if "trace" in plot:
        out.append(plotting.plot_weight_trace(*plot["trace"], fig_dir / "weights.png"))
    if "trajectories" in plot:
        out.append(plotting.plot_trajectories(*plot["trajectories"], fig_dir / "trajectories.png"))
    return [str(p) for p in out]


def resolve_output(cfg: ScenarioConfig, base_dir: str | os.PathLike = ".") -> Path:
    out = Path(cfg.run.output)
    return out if out.is_absolute() else Path(base_dir) / out


def run_scenario(
    cfg: ScenarioConfig,
    base_dir: str | os.PathLike = ".",
    threads: int | None = None,
) -> RunRecord:
    """Run every replica of ``cfg`` and write its outputs.

    Replica ``r`` is seeded with ``replica_seed(seed, r)``; artifacts are merged
    in replica order, so the manifest is independent of ``threads``.
    """
    out_dir = resolve_output(cfg, base_dir)
    _ensure_writable(out_dir)
    start = time.perf_counter()
    seeds = [replica_seed(cfg.run.seed, r) for r in range(cfg.run.replicas)]
    record = RunRecord(cfg.source, serialize(cfg), seeds)
    results = map_replicas(_replica_job, [(cfg, r, s) for r, s in enumerate(seeds)], threads)
    artifacts: list[CsvArtifact] = []
    first_plot = None
    for index, res, failure in sorted(results, key=lambda x: x[0]):
        if failure is not None:
            log.error("replica %d failed: %s", index, failure["message"])
            record.failures.append(failure)
            continue
        artifacts.extend(res.artifacts)
        record.warnings.extend(res.warnings)
        if first_plot is None:
            first_plot = res.plot_data
    for w in record.warnings:
        warnings.warn(w)
    if cfg.analysis.figures and first_plot is not None:
        record.figures = _render_run_figures(cfg, first_plot, out_dir / "figures")
    record.wall_time = time.perf_counter() - start
    write_outputs(record, artifacts, out_dir)
    return record


def run_scan(
    cfg: ScenarioConfig,
    levels: Sequence[int] | None = None,
    base_dir: str | os.PathLike = ".",
    threads: int | None = None,
) -> RunRecord:
    """Continuum-limit ladder for a GRW scenario: one decoherence curve per level."""
    if cfg.process.kind != "grw":
        raise CollapseLabError("scan needs a grw scenario ([process] kind = grw)")
    if len(cfg.analysis.probes) != 2:
        raise CollapseLabError("scan needs [analysis] probes = q_L, q_R")
    out_dir = resolve_output(cfg, base_dir)
    _ensure_writable(out_dir)
    start = time.perf_counter()
    levels = tuple(levels or cfg.analysis.levels)
    grid = cfg.build_grid()
    psi0 = cfg.build_initial(grid)
    record = RunRecord(cfg.source, serialize(cfg), [cfg.run.seed])
    scan = continuum_limit_scan(
        psi0, cfg.build_hamiltonian(), cfg.grw_params(), levels=levels,
        replicas=cfg.run.replicas, probes=tuple(cfg.analysis.probes), times=cfg.snapshot_times(),
        dt=cfg.dynamics.dt, seed=cfg.run.seed, partition=cfg.partition(), threads=threads,
    )
    artifacts = []
    table = CsvArtifact("scan.csv", ("k", "rate", "max_jump"))
    for lv in scan:
        c = lv.curve
        artifacts.append(CsvArtifact(f"decoherence_k{lv.level}.csv", ("t", "coherence"), list(zip(c.times, c.coherence))))
        table.rows.append((lv.level, c.rate, c.max_jump))
        record.summary[f"k{lv.level}"] = {
            "lambda": lv.params.lambda_rate,
            "alpha": lv.params.alpha,
            "rate": c.rate,
            "max_jump": c.max_jump,
            "jump_p99": c.jump_quantile(0.99),
            "hits": int(c.jumps.size),
        }
    artifacts.append(table)
    if cfg.analysis.figures:
        from . import plotting

        fig_dir = out_dir / "figures"
        record.figures = [
            str(plotting.plot_decoherence(
                [(f"k={lv.level}", lv.curve.times, lv.curve.coherence, lv.curve.rate) for lv in scan],
                fig_dir / "decoherence.png",
            )),
            str(plotting.plot_scan_summary(
                [lv.level for lv in scan], [lv.curve.rate for lv in scan],
                [lv.curve.max_jump for lv in scan], fig_dir / "scan.png",
            )),
        ]
    record.wall_time = time.perf_counter() - start
    write_outputs(record, artifacts, out_dir)
    return record
