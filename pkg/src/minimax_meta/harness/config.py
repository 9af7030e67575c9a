"""INI parsing of task-suite files and experiment specs.

Suite file::

    [suite]
    kind = quadratic            ; or trig
    m = 4
    d = 5
    seed = 0                    ; generator seed for random tasks
    eig_min = 0.5
    eig_max = 2.0
    offset_scale = 1.0
    floors = 0                  ; loss floors c_i, one value or m values
    amplitude = 0.5             ; trig only
    frequency = 2.0             ; trig only

    [noise]
    sigma_f = 0.0
    sigma_r = 0.0
    sigma_h = 0.0

    [domain]
    kind = ball                 ; or all
    radius = 2.0
    center = 0                  ; one value or d values
    region_radius = 3.0         ; kind = all: ball used for the constants

    [task.0]                    ; optional explicit tasks replace random ones
    A = 1, 0; 0, 2              ; rows separated by ';'
    b = 1, -1
    c = 0

Experiment spec::

    [experiment]
    suite = suite.ini           ; relative to the spec file
    output = results            ; relative to the spec file

    [run]
    alpha = 0.1
    T = 1000
    C = 1
    D = 1
    regime = convex             ; nonconvex-unconstrained, nonconvex-constrained, manual
    beta =
    eta_w =                     ; manual regime
    eta_p =
    termination =               ; average or random, default by regime
    seed = 0
    seeds =                     ; list, replaces seed
    w_init = center             ; center, zero or a vector
    record_every = 1
    reduction = sequential

    [comparison]
    baseline = false
    task_probs =                ; ambient task distribution of the baseline

    [certificate]
    eps =
    delta =

    [sweep]
    T = 100, 1000, 10000
    seeds = 0, 1, 2
    estimator = sampled         ; or trajectory

Every error names the failing entry as ``section.key``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..geometry import FeasibleSet
from ..solver import RunConfig
from ..tasks import (
    NoiseModel,
    QuadraticTask,
    TaskSet,
    TrigQuadraticTask,
    quadratic_suite,
    trig_suite,
)

__all__ = ["ExperimentSpec", "load_suite", "load_spec", "parse_vector", "SEED_ENV"]

SEED_ENV = "MINIMAX_META_SEED"
SUITE_KINDS = ("quadratic", "trig")
ESTIMATORS = ("sampled", "trajectory")


@dataclass(frozen=True)
class ExperimentSpec:
    path: Path
    suite_path: Path
    tasks: TaskSet
    run: RunConfig
    seeds: tuple
    baseline: bool
    task_probs: np.ndarray | None
    certificate: tuple | None
    sweep_T: tuple | None
    sweep_seeds: tuple | None
    estimator: str
    output: Path


def parse_vector(text, name="vector") -> np.ndarray:
    """Parse ``"1, 2.5, -3"`` into a float vector."""
    try:
        values = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as a comma-separated vector", field=name)
    if not values:
        raise ConfigError("empty vector", field=name)
    out = np.array(values)
    if not np.all(np.isfinite(out)):
        raise ConfigError("entries must be finite", field=name)
    return out


def _parse_matrix(text, name):
    rows = [parse_vector(r, name) for r in str(text).split(";") if r.strip()]
    if not rows or any(r.size != rows[0].size for r in rows):
        raise ConfigError("rows must be nonempty and of equal length", field=name)
    return np.vstack(rows)


class _Section:
    """Typed access to one INI section with ``section.key`` error paths."""

    def __init__(self, parser, name):
        self.name = name
        self.data = parser[name] if parser.has_section(name) else {}

    def path(self, key):
        return f"{self.name}.{key}"

    def raw(self, key):
        v = self.data.get(key)
        return None if v is None or not str(v).strip() else str(v).strip()

    def _conv(self, key, conv, default, what):
        v = self.raw(key)
        if v is None:
            return default
        try:
            return conv(v)
        except ValueError:
            raise ConfigError(f"expected {what}, got {v!r}", field=self.path(key))

    def int(self, key, default=None):
        return self._conv(key, int, default, "an integer")

    def float(self, key, default=None):
        return self._conv(key, float, default, "a number")

    def bool(self, key, default=False):
        v = self.raw(key)
        if v is None:
            return default
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {v!r}", field=self.path(key))

    def str(self, key, default=None):
        v = self.raw(key)
        return default if v is None else v

    def vector(self, key, default=None):
        v = self.raw(key)
        return default if v is None else parse_vector(v, self.path(key))

    def ints(self, key):
        v = self.raw(key)
        if v is None:
            return None
        try:
            return tuple(int(x) for x in v.split(",") if x.strip())
        except ValueError:
            raise ConfigError(f"expected a list of integers, got {v!r}", field=self.path(key))

    def require(self, key, conv):
        if self.raw(key) is None:
            raise ConfigError("required entry is missing", field=self.path(key))
        return conv(key)


def _read(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}", field="file")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", field="file")
    return parser


def _sized(vec, n, name):
    if vec.size == 1:
        return np.full(n, vec[0])
    if vec.size != n:
        raise ConfigError(f"expected 1 or {n} values, got {vec.size}", field=name)
    return vec


def load_suite(path) -> TaskSet:
    """Build the :class:`TaskSet` described by a suite file."""
    parser = _read(path)
    suite, noise_s, dom = (_Section(parser, n) for n in ("suite", "noise", "domain"))
    kind = suite.str("kind", "quadratic")
    if kind not in SUITE_KINDS:
        raise ConfigError(f"must be one of {SUITE_KINDS}", field="suite.kind")
    try:
        noise = NoiseModel(noise_s.float("sigma_f", 0.0), noise_s.float("sigma_r", 0.0),
                           noise_s.float("sigma_h", 0.0))
    except ValueError as exc:
        raise ConfigError(str(exc), field="noise")

    task_sections = sorted(
        (s for s in parser.sections() if s.startswith("task.")),
        key=lambda s: int(s.split(".", 1)[1]) if s.split(".", 1)[1].isdigit() else -1,
    )
    d = suite.int("d") if task_sections == [] else None
    if task_sections:
        first = _Section(parser, task_sections[0])
        d = first.require("b", first.vector).size
    elif d is None or d < 1:
        raise ConfigError("required positive integer", field="suite.d")

    dom_kind = dom.str("kind", "ball")
    center = _sized(dom.vector("center", np.zeros(1)), d, "domain.center")
    region = None
    try:
        if dom_kind == "ball":
            domain = FeasibleSet.ball(dom.require("radius", dom.float), center)
        elif dom_kind == "all":
            domain = FeasibleSet("all", center)
            rr = dom.float("region_radius")
            if rr is not None:
                region = FeasibleSet.ball(rr, center)
        else:
            raise ConfigError("must be 'ball' or 'all'", field="domain.kind")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), field="domain")

    amplitude = suite.float("amplitude", 0.5)
    frequency = suite.float("frequency", 2.0)
    if task_sections:
        tasks = []
        for name in task_sections:
            sec = _Section(parser, name)
            b = sec.require("b", sec.vector)
            A = _parse_matrix(sec.require("A", sec.str), sec.path("A"))
            try:
                if kind == "quadratic":
                    tasks.append(QuadraticTask(A, b, sec.float("c", 0.0), noise))
                else:
                    tasks.append(TrigQuadraticTask(A, b, sec.float("c", 0.0), amplitude,
                                                   frequency, noise))
            except ValueError as exc:
                raise ConfigError(str(exc), field=name)
        try:
            return TaskSet(tuple(tasks), domain, region)
        except ValueError as exc:
            raise ConfigError(str(exc), field="task")

    m = suite.int("m")
    if m is None or m < 1:
        raise ConfigError("required positive integer", field="suite.m")
    common = dict(
        seed=suite.int("seed", 0),
        eig_min=suite.float("eig_min", 0.5),
        eig_max=suite.float("eig_max", 2.0),
        offset_scale=suite.float("offset_scale", 1.0),
        noise=noise,
        region=region,
        c=_sized(suite.vector("floors", np.zeros(1)), m, "suite.floors"),
    )
    if not 0 <= common["eig_min"] <= common["eig_max"]:
        raise ConfigError("need 0 <= eig_min <= eig_max", field="suite.eig_min")
    if kind == "quadratic":
        return quadratic_suite(m, d, domain, **common)
    return trig_suite(m, d, domain, amplitude=amplitude, frequency=frequency, **common)


def _run_config(sec: _Section, seed_override):
    w_init = sec.str("w_init", "center")
    if w_init not in ("center", "zero"):
        w_init = parse_vector(w_init, sec.path("w_init"))
    kwargs = dict(
        alpha=sec.require("alpha", sec.float),
        T=sec.require("T", sec.int),
        C=sec.int("C", 1),
        D=sec.int("D", 1),
        beta=sec.float("beta"),
        regime=sec.str("regime", "convex"),
        eta_w=sec.float("eta_w"),
        eta_p=sec.float("eta_p"),
        termination=sec.str("termination"),
        seed=seed_override if seed_override is not None else sec.int("seed", 0),
        w_init=w_init,
        record_every=sec.int("record_every", 1),
        reduction=sec.str("reduction", "sequential"),
    )
    try:
        return RunConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], field=f"run.{exc.field}")


def _seed_override():
    v = os.environ.get(SEED_ENV)
    if v is None or not v.strip():
        return None
    try:
        seed = int(v)
    except ValueError:
        raise ConfigError(f"expected an integer, got {v!r}", field=SEED_ENV)
    if not 0 <= seed < 2**64:
        raise ConfigError("must lie in [0, 2^64)", field=SEED_ENV)
    return seed


def load_spec(path, output=None) -> ExperimentSpec:
    """Parse an experiment spec; ``output`` overrides ``experiment.output``.

    The environment variable ``MINIMAX_META_SEED`` replaces ``run.seed``
    (and a ``run.seeds`` list) but not the sweep seeds.
    """
    path = Path(path)
    parser = _read(path)
    exp, run, comp, cert, sweep = (
        _Section(parser, n) for n in ("experiment", "run", "comparison", "certificate", "sweep")
    )
    base = path.parent
    suite_path = base / exp.require("suite", exp.str)
    try:
        tasks = load_suite(suite_path)
    except ConfigError as exc:
        raise ConfigError(str(exc), field=f"suite({suite_path.name})")

    override = _seed_override()
    config = _run_config(run, override)
    seeds = run.ints("seeds")
    if override is not None or not seeds:
        seeds = (config.seed,)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct", field="run.seeds")

    probs = comp.vector("task_probs")
    if probs is not None:
        if probs.size != tasks.m or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ConfigError(f"must be {tasks.m} nonnegative weights summing to 1",
                              field="comparison.task_probs")

    certificate = None
    if cert.raw("eps") is not None or cert.raw("delta") is not None:
        certificate = (cert.require("eps", cert.float), cert.require("delta", cert.float))

    sweep_T = sweep.ints("T")
    sweep_seeds = sweep.ints("seeds")
    if sweep_T is not None:
        if any(t < 1 for t in sweep_T) or any(a >= b for a, b in zip(sweep_T, sweep_T[1:])):
            raise ConfigError("T values must be positive and strictly increasing",
                              field="sweep.T")
        sweep_seeds = sweep_seeds or seeds
        if len(set(sweep_seeds)) != len(sweep_seeds):
            raise ConfigError("seeds must be distinct", field="sweep.seeds")
    estimator = sweep.str("estimator", "sampled")
    if estimator not in ESTIMATORS:
        raise ConfigError(f"must be one of {ESTIMATORS}", field="sweep.estimator")

    out = Path(output) if output is not None else base / exp.str("output", "results")
    return ExperimentSpec(
        path=path,
        suite_path=suite_path,
        tasks=tasks,
        run=config,
        seeds=tuple(seeds),
        baseline=comp.bool("baseline", False),
        task_probs=probs,
        certificate=certificate,
        sweep_T=sweep_T,
        sweep_seeds=sweep_seeds,
        estimator=estimator,
        output=out,
    )
