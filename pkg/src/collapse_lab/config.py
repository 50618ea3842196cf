"""Scenario files: a small INI dialect with strict keys and located errors.

    [grid]        particles, points, box, masses, max_cells
    [initial]     kind (gaussian|cat), centers, widths, momenta, weights, phases, symmetry
    [dynamics]    hamiltonian (free|zero|harmonic|double_well), omega, well_a, well_b,
                  pair (none|gaussian_well), pair_depth, pair_width, dt, dt_max, t_final
    [process]     kind (unitary|grw|csl|bohm), lambda, alpha, kernel (gaussian|compact),
                  half_width, max_events, gamma, smearing_alpha, dt_sde, stride,
                  trajectories, node_eps
    [analysis]    regions, probes, snapshot_every, record_every, levels, figures
    [run]         replicas, seed, output

Per-particle lists are comma separated; for ``centers``/``widths``/``momenta``
branches of a cat state are separated by ``;``.  Regions are ``a:b`` pairs.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .config_space import GridSpec, WaveFunction, gaussian_packet, superpose, symmetrize
from .csl import CslParams
from .errors import CollapseLabError
from .grw import GrwParams
from .matter import RegionPartition
from .unitary import DoubleWell, Free, GaussianWell, HamiltonianSpec, Harmonic


@dataclass(frozen=True)
class ConfigIssue:
    line: int | None
    section: str | None
    key: str | None
    message: str

    def __str__(self):
        where = f"line {self.line}" if self.line else "config"
        loc = f"[{self.section}]" + (f" {self.key}" if self.key else "") if self.section else ""
        return f"{where}: {loc}: {self.message}" if loc else f"{where}: {self.message}"


class ConfigError(CollapseLabError, ValueError):
    def __init__(self, issues: list[ConfigIssue]):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


# ---- value converters -------------------------------------------------------


def _float(raw: str) -> float:
    v = float(raw)
    if not math.isfinite(v):
        raise ValueError(f"{raw!r} is not a finite number")
    return v


def _int(raw: str) -> int:
    v = float(raw)
    if not v.is_integer():
        raise ValueError(f"{raw!r} is not an integer")
    return int(v)


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"{raw!r} is not a boolean")


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(_float(p) for p in raw.split(",") if p.strip())


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(_int(p) for p in raw.split(",") if p.strip())


def _branches(raw: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_floats(part) for part in raw.split(";"))


def _regions(raw: str) -> tuple[tuple[float, float], ...]:
    out = []
    for part in raw.split(","):
        if not part.strip():
            continue
        a, sep, b = part.partition(":")
        if not sep:
            raise ValueError(f"region {part.strip()!r} is not of the form a:b")
        out.append((_float(a), _float(b)))
    return tuple(out)


def _choice(*options):
    def conv(raw: str) -> str:
        v = raw.strip().lower()
        if v not in options:
            raise ValueError(f"{raw!r} is not one of {', '.join(options)}")
        return v

    return conv


def _text(raw: str) -> str:
    return raw.strip()


def _optional(conv):
    def wrapped(raw: str):
        return None if raw.strip().lower() in ("", "none") else conv(raw)

    return wrapped


# ---- formatters (inverse of the converters) ---------------------------------


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _fmt_seq(vals) -> str:
    return ", ".join(_fmt_float(v) if isinstance(v, float) else str(v) for v in vals)


def _fmt_branches(vals) -> str:
    return "; ".join(_fmt_seq(b) for b in vals)


def _fmt_regions(vals) -> str:
    return ", ".join(f"{_fmt_float(a)}:{_fmt_float(b)}" for a, b in vals)


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_float(v)
    return str(v)


def _spec(conv, fmt=_fmt_value):
    return {"conv": conv, "fmt": fmt}


# ---- sections ---------------------------------------------------------------


@dataclass(frozen=True)
class GridSection:
    particles: int = field(default=1, metadata=_spec(_int))
    points: int = field(default=256, metadata=_spec(_int))
    box: float = field(default=40.0, metadata=_spec(_float))
    masses: tuple = field(default=(), metadata=_spec(_floats, _fmt_seq))
    max_cells: int = field(default=2**24, metadata=_spec(_int))


@dataclass(frozen=True)
class InitialSection:
    kind: str = field(default="gaussian", metadata=_spec(_choice("gaussian", "cat")))
    centers: tuple = field(default=((0.0,),), metadata=_spec(_branches, _fmt_branches))
    widths: tuple = field(default=((1.0,),), metadata=_spec(_branches, _fmt_branches))
    momenta: tuple = field(default=((0.0,),), metadata=_spec(_branches, _fmt_branches))
    weights: tuple = field(default=(), metadata=_spec(_floats, _fmt_seq))
    phases: tuple = field(default=(), metadata=_spec(_floats, _fmt_seq))
    symmetry: str = field(default="none", metadata=_spec(_choice("none", "symmetric", "antisymmetric")))


@dataclass(frozen=True)
class DynamicsSection:
    hamiltonian: str = field(default="free", metadata=_spec(_choice("free", "zero", "harmonic", "double_well")))
    omega: float = field(default=1.0, metadata=_spec(_float))
    well_a: float = field(default=2.0, metadata=_spec(_float))
    well_b: float = field(default=1.0, metadata=_spec(_float))
    pair: str = field(default="none", metadata=_spec(_choice("none", "gaussian_well")))
    pair_depth: float = field(default=1.0, metadata=_spec(_float))
    pair_width: float = field(default=1.0, metadata=_spec(_float))
    dt: float = field(default=1e-3, metadata=_spec(_float))
    dt_max: float = field(default=0.1, metadata=_spec(_float))
    t_final: float = field(default=1.0, metadata=_spec(_float))


@dataclass(frozen=True)
class ProcessSection:
    kind: str = field(default="unitary", metadata=_spec(_choice("unitary", "grw", "csl", "bohm")))
    # "lambda" is a keyword; the file key maps onto this attribute
    lambda_rate: float = field(default=0.5, metadata={**_spec(_float), "key": "lambda"})
    alpha: float = field(default=4.0, metadata=_spec(_float))
    kernel: str = field(default="gaussian", metadata=_spec(_choice("gaussian", "compact")))
    half_width: float | None = field(default=None, metadata=_spec(_optional(_float)))
    max_events: int = field(default=10**6, metadata=_spec(_int))
    gamma: float = field(default=1.0, metadata=_spec(_float))
    smearing_alpha: float = field(default=4.0, metadata=_spec(_float))
    dt_sde: float = field(default=1e-3, metadata=_spec(_float))
    stride: int = field(default=4, metadata=_spec(_int))
    trajectories: int = field(default=100, metadata=_spec(_int))
    node_eps: float = field(default=1e-10, metadata=_spec(_float))


@dataclass(frozen=True)
class AnalysisSection:
    regions: tuple = field(default=(), metadata=_spec(_regions, _fmt_regions))
    probes: tuple = field(default=(), metadata=_spec(_floats, _fmt_seq))
    snapshot_every: float | None = field(default=None, metadata=_spec(_optional(_float)))
    record_every: int = field(default=10, metadata=_spec(_int))
    levels: tuple = field(default=(1, 2, 4, 8), metadata=_spec(_ints, _fmt_seq))
    figures: bool = field(default=False, metadata=_spec(_bool))


@dataclass(frozen=True)
class RunSection:
    replicas: int = field(default=1, metadata=_spec(_int))
    seed: int = field(default=0, metadata=_spec(_int))
    output: str = field(default="out", metadata=_spec(_text))


SECTIONS = {
    "grid": GridSection,
    "initial": InitialSection,
    "dynamics": DynamicsSection,
    "process": ProcessSection,
    "analysis": AnalysisSection,
    "run": RunSection,
}


def _file_key(f: dataclasses.Field) -> str:
    return f.metadata.get("key", f.name)


@dataclass(frozen=True)
class ScenarioConfig:
    grid: GridSection = GridSection()
    initial: InitialSection = InitialSection()
    dynamics: DynamicsSection = DynamicsSection()
    process: ProcessSection = ProcessSection()
    analysis: AnalysisSection = AnalysisSection()
    run: RunSection = RunSection()
    source: str = field(default="", compare=False, repr=False)
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    # ---- builders; each assumes validate() passed ----

    def build_grid(self) -> GridSpec:
        g = self.grid
        return GridSpec(g.particles, g.points, g.box, tuple(g.masses), g.max_cells)

    def build_initial(self, grid: GridSpec | None = None) -> WaveFunction:
        grid = grid or self.build_grid()
        ini = self.initial
        n_branches = len(ini.centers)

        def pick(values, b):
            return values[b] if len(values) > 1 else values[0]

        states = [
            gaussian_packet(grid, ini.centers[b], pick(ini.widths, b), pick(ini.momenta, b))
            for b in range(n_branches)
        ]
        if ini.kind == "cat":
            weights = ini.weights or (1.0,) * n_branches
            phases = ini.phases or (0.0,) * n_branches
            psi = superpose(
                [(math.sqrt(w) * np.exp(1j * ph), s) for w, ph, s in zip(weights, phases, states)]
            )
        else:
            psi = states[0]
        if ini.symmetry != "none":
            psi = symmetrize(psi, 1 if ini.symmetry == "symmetric" else -1)
        return psi

    def build_hamiltonian(self) -> HamiltonianSpec:
        d = self.dynamics
        if d.hamiltonian == "zero":
            return HamiltonianSpec.zero()
        if d.hamiltonian == "harmonic":
            ext = Harmonic(d.omega)
        elif d.hamiltonian == "double_well":
            ext = DoubleWell(d.well_a, d.well_b)
        else:
            ext = Free()
        pair = GaussianWell(d.pair_depth, d.pair_width) if d.pair == "gaussian_well" else None
        return HamiltonianSpec(external=(ext,), pair=pair)

    def grw_params(self) -> GrwParams:
        p = self.process
        return GrwParams(p.lambda_rate, p.alpha, p.kernel, p.half_width)

    def csl_params(self) -> CslParams:
        p = self.process
        return CslParams(p.gamma, p.smearing_alpha, p.dt_sde, p.stride)

    def partition(self) -> RegionPartition | None:
        return RegionPartition(self.analysis.regions) if self.analysis.regions else None

    def snapshot_times(self) -> list[float]:
        every = self.analysis.snapshot_every
        total = self.dynamics.t_final
        if not every:
            return [0.0, total] if total > 0 else [0.0]
        n = int(math.floor(total / every + 1e-9))
        times = [k * every for k in range(n + 1)]
        if total - times[-1] > 1e-9 * every:
            times.append(total)
        return times


# ---- parsing ----------------------------------------------------------------


def _strip_comment(line: str) -> str:
    s = line.strip()
    if s.startswith(("#", ";")):
        return ""
    for marker in (" #", "\t#"):
        k = s.find(marker)
        if k >= 0:
            s = s[:k].rstrip()
    return s


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario; raises ConfigError listing every problem."""
    issues: list[ConfigIssue] = []
    values: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    lines: dict[tuple[str, str], int] = {}
    fields_by_key = {
        name: {_file_key(f): f for f in dataclasses.fields(cls)} for name, cls in SECTIONS.items()
    }
    section = None
    seen_sections = set()
    for lineno, raw in enumerate(str(text).splitlines(), start=1):
        s = _strip_comment(raw)
        if not s:
            continue
        if s.startswith("["):
            if not s.endswith("]"):
                issues.append(ConfigIssue(lineno, None, None, f"malformed section header {s!r}"))
                section = None
                continue
            name = s[1:-1].strip().lower()
            if name not in SECTIONS:
                issues.append(ConfigIssue(lineno, name, None, f"unknown section [{name}]"))
                section = None
                continue
            if name in seen_sections:
                issues.append(ConfigIssue(lineno, name, None, f"section [{name}] repeated"))
            seen_sections.add(name)
            section = name
            continue
        key, sep, val = s.partition("=")
        key = key.strip().lower()
        if not sep or not key:
            issues.append(ConfigIssue(lineno, section, None, f"expected 'key = value', got {s!r}"))
            continue
        if section is None:
            issues.append(ConfigIssue(lineno, None, key, "key outside of a known section"))
            continue
        f = fields_by_key[section].get(key)
        if f is None or f.name in ("source", "lines"):
            issues.append(ConfigIssue(lineno, section, key, f"unknown key {key!r} in [{section}]"))
            continue
        if (section, f.name) in lines:
            issues.append(ConfigIssue(lineno, section, key, "key given twice"))
            continue
        try:
            values[section][f.name] = f.metadata["conv"](val)
        except (ValueError, TypeError, OverflowError) as exc:
            issues.append(ConfigIssue(lineno, section, key, f"type mismatch: {exc}"))
            continue
        lines[(section, f.name)] = lineno
    cfg = ScenarioConfig(
        **{name: SECTIONS[name](**values[name]) for name in SECTIONS},
        source=str(text),
        lines=lines,
    )
    # rule checks run on whatever parsed, so one pass reports every problem
    try:
        validate(cfg)
    except ConfigError as exc:
        issues.extend(exc.issues)
    if issues:
        raise ConfigError(issues)
    return cfg


def serialize(cfg: ScenarioConfig) -> str:
    """Full explicit text of ``cfg``; ``parse_config(serialize(c)) == c``."""
    out = []
    for name in SECTIONS:
        out.append(f"[{name}]")
        sec = getattr(cfg, name)
        for f in dataclasses.fields(sec):
            out.append(f"{_file_key(f)} = {f.metadata['fmt'](getattr(sec, f.name))}")
        out.append("")
    return "\n".join(out)


# ---- validation -------------------------------------------------------------


class _Collector:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.issues: list[ConfigIssue] = []

    def add(self, section: str, key: str | None, message: str):
        attr = {"lambda": "lambda_rate"}.get(key, key)
        line = self.cfg.lines.get((section, attr)) if key else None
        self.issues.append(ConfigIssue(line, section, key, message))

    def check(self, cond: bool, section: str, key: str, message: str) -> bool:
        if not cond:
            self.add(section, key, message)
        return cond


def validate(cfg: ScenarioConfig) -> None:
    """Check every module precondition reachable from the config."""
    c = _Collector(cfg)
    g, ini, dyn, proc, ana, run = cfg.grid, cfg.initial, cfg.dynamics, cfg.process, cfg.analysis, cfg.run

    grid = None
    ok = c.check(g.particles >= 1, "grid", "particles", "rule: particles >= 1")
    ok &= c.check(g.points >= 2 and g.points & (g.points - 1) == 0, "grid", "points", "rule: points is a power of two")
    ok &= c.check(g.box > 0, "grid", "box", "rule: box > 0")
    ok &= c.check(not g.masses or len(g.masses) == g.particles, "grid", "masses", "rule: one mass per particle")
    ok &= c.check(all(m > 0 for m in g.masses), "grid", "masses", "rule: masses > 0")
    ok &= c.check(g.max_cells >= 1, "grid", "max_cells", "rule: max_cells >= 1")
    if ok:
        if c.check(g.points**g.particles <= g.max_cells, "grid", "points",
                   f"rule: points**particles <= max_cells ({g.max_cells})"):
            grid = GridSpec(g.particles, g.points, g.box, tuple(g.masses), g.max_cells)

    # initial state
    nb = len(ini.centers)
    if ini.kind == "gaussian":
        c.check(nb == 1, "initial", "centers", "rule: a gaussian state has exactly one branch")
    else:
        c.check(nb >= 1, "initial", "centers", "rule: a cat state needs at least one branch")
        if ini.weights:
            c.check(len(ini.weights) == nb, "initial", "weights", "rule: one weight per branch")
            c.check(all(w >= 0 for w in ini.weights) and any(w > 0 for w in ini.weights),
                    "initial", "weights", "rule: weights >= 0, not all zero")
        if ini.phases:
            c.check(len(ini.phases) == nb, "initial", "phases", "rule: one phase per branch")
    for key in ("widths", "momenta"):
        vals = getattr(ini, key)
        c.check(len(vals) in (1, nb), "initial", key, "rule: one entry, or one per branch")
    if ini.symmetry != "none":
        c.check(g.particles == 2, "initial", "symmetry", "rule: symmetrization needs exactly 2 particles")
    if grid is not None:
        half = grid.box_length / 2
        for branch in ini.centers:
            if c.check(len(branch) in (1, grid.num_particles), "initial", "centers",
                       "rule: one center per particle"):
                for x in branch:
                    c.check(-half < x < half, "initial", "centers", f"rule: center {x} inside (-L/2, L/2)")
        for branch in ini.widths:
            if c.check(len(branch) in (1, grid.num_particles), "initial", "widths",
                       "rule: one width per particle"):
                for w in branch:
                    c.check(w >= 2 * grid.spacing, "initial", "widths",
                            f"rule: width {w} >= 2*dx = {2 * grid.spacing}")
        for branch in ini.momenta:
            c.check(len(branch) in (1, grid.num_particles), "initial", "momenta",
                    "rule: one momentum per particle")

    # dynamics
    c.check(dyn.dt_max > 0, "dynamics", "dt_max", "rule: dt_max > 0")
    c.check(0 < dyn.dt <= dyn.dt_max, "dynamics", "dt", "rule: 0 < dt <= dt_max")
    c.check(dyn.t_final >= 0, "dynamics", "t_final", "rule: t_final >= 0")
    if dyn.hamiltonian == "harmonic":
        c.check(dyn.omega > 0, "dynamics", "omega", "rule: omega > 0")
    if dyn.hamiltonian == "double_well":
        c.check(dyn.well_a > 0, "dynamics", "well_a", "rule: well_a > 0")
        c.check(dyn.well_b > 0, "dynamics", "well_b", "rule: well_b > 0")
    if dyn.pair == "gaussian_well":
        c.check(dyn.pair_width > 0, "dynamics", "pair_width", "rule: pair_width > 0")
        c.check(g.particles >= 2, "dynamics", "pair", "rule: a pair potential needs >= 2 particles")
        c.check(dyn.hamiltonian != "zero", "dynamics", "pair", "rule: hamiltonian = zero excludes a pair potential")

    # process
    if proc.kind == "grw":
        c.check(proc.lambda_rate > 0, "process", "lambda", "rule: lambda > 0")
        c.check(proc.alpha > 0, "process", "alpha", "rule: alpha > 0")
        c.check(proc.max_events >= 1, "process", "max_events", "rule: max_events >= 1")
        if proc.kernel == "compact":
            if c.check(proc.half_width is not None and proc.half_width > 0, "process", "half_width",
                       "rule: compact kernel needs half_width > 0") and grid is not None:
                c.check(2 * grid.spacing <= proc.half_width <= grid.box_length / 4, "process", "half_width",
                        f"rule: 2*dx <= half_width <= L/4 = [{2 * grid.spacing}, {grid.box_length / 4}]")
    elif proc.kind == "csl":
        c.check(g.particles == 1, "process", "kind", "rule: csl runs a single particle only")
        c.check(proc.gamma > 0, "process", "gamma", "rule: gamma > 0")
        c.check(proc.smearing_alpha > 0, "process", "smearing_alpha", "rule: smearing_alpha > 0")
        if c.check(proc.dt_sde > 0, "process", "dt_sde", "rule: dt_sde > 0") and proc.gamma > 0:
            c.check(proc.dt_sde <= 1e-3 / proc.gamma * (1 + 1e-12), "process", "dt_sde",
                    "rule: dt_sde <= 1e-3 / gamma")
            c.check(proc.dt_sde <= dyn.dt_max, "process", "dt_sde", "rule: dt_sde <= dt_max")
        c.check(proc.stride >= 1, "process", "stride", "rule: stride >= 1")
    elif proc.kind == "bohm":
        c.check(proc.trajectories >= 1, "process", "trajectories", "rule: trajectories >= 1")
        c.check(0 < proc.node_eps < 1, "process", "node_eps", "rule: 0 < node_eps < 1")

    # analysis
    if ana.regions:
        try:
            part = RegionPartition(ana.regions)
            if grid is not None:
                part.check_inside(grid)
        except CollapseLabError as exc:
            c.add("analysis", "regions", f"rule: disjoint intervals inside the box ({exc})")
    if ana.probes:
        if c.check(len(ana.probes) == 2, "analysis", "probes", "rule: exactly two probe points") and grid is not None:
            for q in ana.probes:
                c.check(grid.inside(q), "analysis", "probes", f"rule: probe {q} inside the box")
    if ana.snapshot_every is not None:
        c.check(ana.snapshot_every > 0, "analysis", "snapshot_every", "rule: snapshot_every > 0")
    c.check(ana.record_every >= 1, "analysis", "record_every", "rule: record_every >= 1")
    c.check(len(ana.levels) >= 1 and all(k >= 1 for k in ana.levels), "analysis", "levels",
            "rule: levels are integers >= 1")

    # run
    c.check(run.replicas >= 1, "run", "replicas", "rule: replicas >= 1")
    c.check(run.seed >= 0, "run", "seed", "rule: seed >= 0")
    c.check(bool(run.output), "run", "output", "rule: output directory must be named")

    if not c.issues:
        # last line of defence: the constructors themselves
        try:
            grid = cfg.build_grid()
            cfg.build_initial(grid)
            cfg.build_hamiltonian().potential_on(grid)
            if proc.kind == "grw":
                cfg.grw_params().check_grid(grid)
            elif proc.kind == "csl":
                cfg.csl_params()
        except CollapseLabError as exc:
            c.add("initial", None, str(exc))
    if c.issues:
        raise ConfigError(c.issues)
