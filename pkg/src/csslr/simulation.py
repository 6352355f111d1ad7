"""Monte Carlo study of variable selection on two-class Gaussian data.

Each replication draws ``K`` good and ``K`` bad observations.  Strong and
weak predictors are normal with unit variance and mean ``+mu`` on good rows,
``-mu`` on bad rows; nuisance predictors are standard normal throughout.

Random streams
--------------
Replication ``r`` of a study with seed ``s`` uses
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(r,))))``.  Columns
are generated in name order S1.., W1.., R1..; each column consumes ``2K``
standard normals (good rows first).  This mapping is part of the public
contract and must not change.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import yaml

from . import baselines
from .data import ConfigError, Dataset, PROFILES, SelectionConfig, Sign, SignExpectation
from .engine import representative_model, run_csslr

BASELINE_METHODS = ("AIC", "Coeff")
CLASSES = ("s", "w", "nd")
BASELINE_MAX_STEPS = 100
# "representative": the max-AUC leader; "union": every variable of any final model
COUNTING_RULES = ("representative", "union")


@dataclass(frozen=True)
class StudySpec:
    n_strong: int = 3
    n_weak: int = 3
    n_nuisance: int = 14
    mu_strong: float = 1.0
    mu_weak: float = 0.5
    K: int = 500
    replications: int = 1000
    seed: int = 20240101
    methods: tuple[str, ...] = ("CSSLR1a", "CSSLR1b", "CSSLR2a", "CSSLR2b", "AIC", "Coeff")
    coeff_alpha: float = 0.05
    counting: str = "representative"

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        for name in ("n_strong", "n_weak", "n_nuisance"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{name} must be a nonnegative integer, got {v!r}")
        if self.n_strong + self.n_weak + self.n_nuisance < 1:
            raise ConfigError("study needs at least one variable")
        if not isinstance(self.K, int) or self.K < 2:
            raise ConfigError(f"K must be an integer >= 2, got {self.K!r}")
        if self.counting not in COUNTING_RULES:
            raise ConfigError(f"counting must be one of {', '.join(COUNTING_RULES)}, got {self.counting!r}")
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError("replications must be a positive integer")
        if self.mu_strong < 0 or self.mu_weak < 0:
            raise ConfigError("means must be nonnegative")
        if self.n_strong and self.n_weak and not self.mu_strong > self.mu_weak:
            raise ConfigError("mu_strong must exceed mu_weak")
        if not 0 < self.coeff_alpha < 1:
            raise ConfigError("coeff_alpha must lie in (0, 1)")
        if not self.methods:
            raise ConfigError("no methods requested")

    @property
    def classes_present(self) -> tuple[str, ...]:
        counts = {"s": self.n_strong, "w": self.n_weak, "nd": self.n_nuisance}
        return tuple(c for c in CLASSES if counts[c])


BUILTIN_STUDIES: dict[str, StudySpec] = {
    "table3": StudySpec(3, 3, 14, 1.0, 0.5),
    "table4": StudySpec(3, 3, 14, 0.3, 0.15),
    "table5": StudySpec(0, 3, 17, 0.0, 0.15),
    "table6": StudySpec(0, 0, 20, 0.0, 0.0),
}


def load_study(source: str) -> StudySpec:
    """A built-in study name or a YAML file of :class:`StudySpec` fields.

    A file may name a built-in via ``base: table3`` and override fields.
    """
    if source in BUILTIN_STUDIES:
        return BUILTIN_STUDIES[source]
    try:
        with open(source, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"unknown study {source!r}; built-ins: {', '.join(BUILTIN_STUDIES)}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparsable study file: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("study file must be a key/value mapping")
    return study_from_mapping(raw)


def study_from_mapping(raw: Mapping) -> StudySpec:
    raw = dict(raw)
    base = {}
    if "base" in raw:
        name = raw.pop("base")
        if name not in BUILTIN_STUDIES:
            raise ConfigError(f"unknown base study {name!r}")
        b = BUILTIN_STUDIES[name]
        base = {f: getattr(b, f) for f in b.__dataclass_fields__}
    allowed = set(StudySpec.__dataclass_fields__)
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown study key {unknown[0]!r}")
    try:
        return StudySpec(**{**base, **raw})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def replication_rng(seed: int, replication_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication_index),))
    return np.random.Generator(np.random.PCG64(ss))


def variable_names(spec: StudySpec) -> tuple[str, ...]:
    return (tuple(f"S{i + 1}" for i in range(spec.n_strong))
            + tuple(f"W{i + 1}" for i in range(spec.n_weak))
            + tuple(f"R{i + 1}" for i in range(spec.n_nuisance)))


def generate_dataset(spec: StudySpec, replication_index: int) -> Dataset:
    rng = replication_rng(spec.seed, replication_index)
    K = spec.K
    means = ([spec.mu_strong] * spec.n_strong + [spec.mu_weak] * spec.n_weak
             + [0.0] * spec.n_nuisance)
    cols = np.empty((2 * K, len(means)))
    for j, mu in enumerate(means):
        z = rng.standard_normal(2 * K)
        z[:K] += mu
        z[K:] -= mu
        cols[:, j] = z
    y = np.concatenate([np.zeros(K), np.ones(K)])
    return Dataset(y, variable_names(spec), cols)


def study_signs(spec: StudySpec) -> SignExpectation:
    """Discriminating columns lower the bad probability; nuisance has no expectation."""
    signs = {n: Sign.NEGATIVE for n in variable_names(spec) if n[0] in "SW"}
    return SignExpectation(signs)


def variable_class(name: str) -> str:
    return {"S": "s", "W": "w", "R": "nd"}[name[0]]


# ---------------------------------------------------------------------------
# Running a study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodMetrics:
    """Selection frequencies for one method.

    ``percent[c]`` is the share of (successful) replications selecting at
    least one class-``c`` variable; ``average[c]`` is the mean count given at
    least one, or NaN when never selected.
    """

    method: str
    replications: int
    failures: int
    percent: dict[str, float]
    average: dict[str, float]


@dataclass
class StudyResult:
    spec: StudySpec
    metrics: dict[str, MethodMetrics]
    counts: dict[str, list[Optional[tuple[int, int, int]]]] = field(repr=False, default_factory=dict)

    def columns(self) -> list[str]:
        cols = []
        for c in self.spec.classes_present:
            cols += [f"P_{c}", f"A_{c}"]
        return cols

    def rows(self) -> list[list]:
        out = []
        for name, m in self.metrics.items():
            row: list = [name]
            for c in self.spec.classes_present:
                row += [m.percent[c], m.average[c]]
            out.append(row)
        return out

    def to_table(self) -> str:
        header = ["Method", *self.columns()]
        body = [[r[0], *(_fmt(v) for v in r[1:])] for r in self.rows()]
        widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
        lines = ["  ".join(str(h).rjust(w) for h, w in zip(header, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for r in body:
            lines.append("  ".join(str(x).rjust(w) for x, w in zip(r, widths)))
        fails = {k: m.failures for k, m in self.metrics.items() if m.failures}
        if fails:
            lines.append(f"failed replications: {fails}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Method", *self.columns(), "replications", "failures"])
        for name, m in self.metrics.items():
            row = [name]
            for c in self.spec.classes_present:
                row += [_fmt(m.percent[c]), _fmt(m.average[c])]
            w.writerow([*row, m.replications, m.failures])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return "NaN" if math.isnan(v) else f"{v:.2f}"


def _count(names: Sequence[str]) -> tuple[int, int, int]:
    c = {"s": 0, "w": 0, "nd": 0}
    for n in names:
        c[variable_class(n)] += 1
    return c["s"], c["w"], c["nd"]


def resolve_configs(methods: Sequence[str],
                    configs: Mapping[str, SelectionConfig] | None = None) -> dict[str, SelectionConfig]:
    configs = dict(configs or {})
    out = {}
    for m in methods:
        if m in BASELINE_METHODS:
            continue
        if m in configs:
            out[m] = configs[m]
        elif m in PROFILES:
            out[m] = PROFILES[m]
        else:
            valid = sorted(set(PROFILES) | set(BASELINE_METHODS) | set(configs))
            raise ConfigError(f"unknown method {m!r}; valid methods: {', '.join(valid)}")
    return out


def select_variables(method: str, data: Dataset, spec: StudySpec,
                     configs: Mapping[str, SelectionConfig]) -> tuple[str, ...]:
    if method == "AIC":
        return baselines.select_aic(data, BASELINE_MAX_STEPS).variable_names
    if method == "Coeff":
        return baselines.select_pvalue(data, spec.coeff_alpha, BASELINE_MAX_STEPS).variable_names
    result = run_csslr(data, study_signs(spec), configs[method])
    if spec.counting == "union":
        seen = dict.fromkeys(v for m in result.final_models for v in m.variable_names)
        return tuple(seen)
    return representative_model(result).variable_names


def run_replication(spec: StudySpec, configs: Mapping[str, SelectionConfig],
                    index: int) -> dict[str, Optional[tuple[int, int, int]]]:
    """Selected-variable counts per method for one replication (None on failure)."""
    data = generate_dataset(spec, index)
    out: dict[str, Optional[tuple[int, int, int]]] = {}
    for method in spec.methods:
        try:
            out[method] = _count(select_variables(method, data, spec, configs))
        except Exception:  # noqa: BLE001 - a failed method is recorded, not fatal
            out[method] = None
    return out


def _replication_job(args):
    spec, configs, index = args
    return run_replication(spec, configs, index)


def aggregate(spec: StudySpec, per_rep: Sequence[Mapping[str, Optional[tuple[int, int, int]]]]
              ) -> StudyResult:
    metrics = {}
    counts: dict[str, list] = {m: [r[m] for r in per_rep] for m in spec.methods}
    for method, rows in counts.items():
        ok = [r for r in rows if r is not None]
        n = len(ok)
        percent, average = {}, {}
        for j, c in enumerate(CLASSES):
            hits = [r[j] for r in ok if r[j] > 0]
            percent[c] = 100.0 * len(hits) / n if n else float("nan")
            average[c] = sum(hits) / len(hits) if hits else float("nan")
        metrics[method] = MethodMetrics(method, n, len(rows) - n, percent, average)
    return StudyResult(spec, metrics, counts)


def run_study(spec: StudySpec, configs: Mapping[str, SelectionConfig] | None = None,
              jobs: int = 1, progress: Callable[[int], None] | None = None) -> StudyResult:
    """Run every method on every replication and aggregate the metrics.

    Results do not depend on ``jobs``: replications are seeded by index and
    aggregated in index order.
    """
    resolved = resolve_configs(spec.methods, configs)
    tasks = [(spec, resolved, i) for i in range(spec.replications)]
    if jobs <= 1:
        per_rep = []
        for i, t in enumerate(tasks):
            per_rep.append(_replication_job(t))
            if progress:
                progress(i + 1)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rep = list(pool.map(_replication_job, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return aggregate(spec, per_rep)


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
