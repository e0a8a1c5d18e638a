"""Seed sweeps, CSV result tables and the trend report.

A sweep is the Cartesian product of the ``alpha``, ``k``, ``M``, ``scheme``
and ``mode`` axes, each point repeated over ``seeds`` consecutive seeds
starting at ``base_seed``.  Points and seeds are independent, so they may run
in a process pool; rows are sorted before anything is written.

The CSV holds one data row per (point, seed) under :data:`HEADER`, then a
blank line and a second table (:data:`SUMMARY_HEADER`) with one mean/std row
per point.  Floats are written with ``repr`` so the file does not depend on
the locale and reads back bit-exactly.
"""

from __future__ import annotations

import itertools
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import tomli

from .config import (ConfigError, Mode, NetworkConfig, Scheme, TimingConfig, config_from_dict,
                     load_config, validate_config)
from .sim import run

HEADER = ("alpha", "k", "M", "scheme", "mode", "seed", "mse_mean", "throughput", "jain",
          "sensing_count", "comm_count")
METRICS = ("mse_mean", "throughput", "jain", "sensing_count", "comm_count")
SUMMARY_HEADER = ("alpha", "k", "M", "scheme", "mode", "n_seeds") + tuple(
    f"{m}_{s}" for m in METRICS for s in ("mean", "std"))

ALPHAS = (0.01, 0.1, 0.5, 0.9)
# relative margins used by the trend checks
STEP_TOL = 0.02
STRICT_MARGIN = 0.02
K_TOL = 0.10
M_OVERALL = 0.05
SCHEME_MSE_MARGIN = 0.05
SAME_PROC_TOL = 0.05


@dataclass(frozen=True, order=True)
class Point:
    alpha: float
    k: int
    M: int
    scheme: str
    mode: str

    def config(self, base: NetworkConfig) -> NetworkConfig:
        return base.replace(alpha=self.alpha, k=self.k, n_stas=self.M,
                            scheme=Scheme(self.scheme), mode=Mode(self.mode))


@dataclass(frozen=True)
class SweepSpec:
    base: NetworkConfig = field(default_factory=NetworkConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    alpha: tuple[float, ...] = (0.5,)
    k: tuple[int, ...] = (4,)
    M: tuple[int, ...] = (12,)
    scheme: tuple[str, ...] = (Scheme.ORIGINAL.value,)
    mode: tuple[str, ...] = (Mode.NON_COOPERATIVE.value,)
    seeds: int = 20
    base_seed: int = 0
    out: Path | None = None

    def __post_init__(self) -> None:
        errors = [f"axis {name} is empty" for name in ("alpha", "k", "M", "scheme", "mode")
                  if not getattr(self, name)]
        if self.seeds < 1:
            errors.append("seeds must be >= 1")
        if errors:
            raise ConfigError(errors)

    def points(self) -> list[Point]:
        pts = [Point(float(a), int(k), int(m), Scheme(s).value, Mode(md).value)
               for a, k, m, s, md in itertools.product(self.alpha, self.k, self.M,
                                                        self.scheme, self.mode)]
        return sorted(set(pts))

    def seed_list(self) -> list[int]:
        return [self.base_seed + i for i in range(self.seeds)]

    def validate(self) -> None:
        errors: list[str] = []
        for p in self.points():
            for v in validate_config(p.config(self.base), self.timing):
                errors.append(f"{p}: {v}")
        last = self.base_seed + self.seeds - 1
        if self.base_seed < 0 or last >= 2**63:
            errors.append("seed range must lie in [0, 2**63)")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True, order=True)
class ResultRow:
    alpha: float
    k: int
    M: int
    scheme: str
    mode: str
    seed: int
    mse_mean: float
    throughput: float
    jain: float
    sensing_count: int
    comm_count: int

    @property
    def point(self) -> Point:
        return Point(self.alpha, self.k, self.M, self.scheme, self.mode)


def _sweep_from_dict(data: dict[str, Any], base_dir: Path) -> SweepSpec:
    known = {"config", "seeds", "base_seed", "out", "axes", "network", "timing"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError([f"unknown sweep key {k!r}" for k in unknown])
    if "config" in data:
        base, timing = load_config(base_dir / data["config"])
    else:
        base, timing = config_from_dict({k: data[k] for k in ("network", "timing") if k in data})
    axes = dict(data.get("axes", {}))
    bad = sorted(set(axes) - {"alpha", "k", "M", "scheme", "mode"})
    if bad:
        raise ConfigError([f"unknown axis {k!r}" for k in bad])
    try:
        return SweepSpec(
            base=base, timing=timing,
            alpha=tuple(float(a) for a in axes.get("alpha", [base.alpha])),
            k=tuple(int(k) for k in axes.get("k", [base.k])),
            M=tuple(int(m) for m in axes.get("M", [base.n_stas])),
            scheme=tuple(Scheme(s).value for s in axes.get("scheme", [base.scheme.value])),
            mode=tuple(Mode(m).value for m in axes.get("mode", [base.mode.value])),
            seeds=int(data.get("seeds", 20)),
            base_seed=int(data.get("base_seed", base.seed)),
            out=Path(data["out"]) if "out" in data else None,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError([f"bad sweep value: {exc}"]) from exc


def load_sweep(path: str | Path) -> SweepSpec:
    """Read a TOML sweep file; ``default`` names the bundled default sweep."""
    if str(path) == "default":
        text = resources.files("emlsr_isac").joinpath("default_sweep.toml").read_text()
        return _sweep_from_dict(tomli.loads(text), Path.cwd())
    path = Path(path)
    try:
        data = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return _sweep_from_dict(data, path.parent)


def run_point(base: NetworkConfig, timing: TimingConfig, point: Point, seed: int,
              trace_dir: Path | None = None) -> ResultRow:
    cfg = point.config(base)
    m = run(cfg, timing, seed=seed, record_trace=trace_dir is not None)
    if trace_dir is not None:
        name = (f"a{point.alpha!r}_k{point.k}_M{point.M}_{point.scheme}_{point.mode}"
                f"_s{seed}.trace")
        (trace_dir / name).write_text("\n".join(m.trace) + "\n")
    return ResultRow(point.alpha, point.k, point.M, point.scheme, point.mode, seed,
                     m.mse_mean, m.throughput, m.jain, m.sensing_count, m.comm_count)


def _run_job(job) -> ResultRow:
    return run_point(*job)


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def run_jobs(base: NetworkConfig, timing: TimingConfig,
             jobs: Iterable[tuple[Point, int]], workers: int | None = None,
             trace_dir: Path | None = None) -> list[ResultRow]:
    """Run ``(point, seed)`` jobs, in parallel when ``workers > 1``; rows sorted."""
    tasks = [(base, timing, p, s, trace_dir) for p, s in jobs]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            rows = list(pool.map(_run_job, tasks, chunksize=1))
    else:
        rows = [_run_job(t) for t in tasks]
    return sorted(rows)


def execute(spec: SweepSpec, workers: int | None = None,
            trace_dir: Path | None = None) -> list[ResultRow]:
    spec.validate()
    if trace_dir is not None:
        trace_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(p, s) for p in spec.points() for s in spec.seed_list()]
    return run_jobs(spec.base, spec.timing, jobs, workers, trace_dir)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summarize(rows: Sequence[ResultRow]) -> list[tuple]:
    """One ``(point fields, n, mean, std, ...)`` tuple per point.

    Standard deviations are population (ddof 0), so a single seed gives 0.
    """
    groups: dict[Point, list[ResultRow]] = {}
    for r in sorted(rows):
        groups.setdefault(r.point, []).append(r)
    out = []
    for p, rs in groups.items():
        vals: list[float] = []
        for name in METRICS:
            xs = [float(getattr(r, name)) for r in rs]
            vals += [statistics.fmean(xs), statistics.pstdev(xs)]
        out.append((p.alpha, p.k, p.M, p.scheme, p.mode, len(rs), *vals))
    return out


def format_csv(rows: Sequence[ResultRow]) -> str:
    lines = [",".join(HEADER)]
    for r in sorted(rows):
        lines.append(",".join(_fmt(getattr(r, h)) for h in HEADER))
    lines.append("")
    lines.append(",".join(SUMMARY_HEADER))
    for s in summarize(rows):
        lines.append(",".join(_fmt(v) for v in s))
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> tuple[list[ResultRow], list[dict[str, str]]]:
    """Inverse of :func:`format_csv`: data rows and raw summary records."""
    data_part, _, summary_part = text.partition("\n\n")
    data_lines = data_part.strip().splitlines()
    if tuple(data_lines[0].split(",")) != HEADER:
        raise ValueError("unexpected CSV header")
    rows = []
    for line in data_lines[1:]:
        f = line.split(",")
        rows.append(ResultRow(float(f[0]), int(f[1]), int(f[2]), f[3], f[4], int(f[5]),
                              float(f[6]), float(f[7]), float(f[8]), int(f[9]), int(f[10])))
    s_lines = summary_part.strip().splitlines()
    summary = [dict(zip(s_lines[0].split(","), line.split(","))) for line in s_lines[1:]]
    return rows, summary


def run_sweep(spec: SweepSpec, out: str | Path | None = None, workers: int | None = None,
              trace_dir: Path | None = None) -> list[ResultRow]:
    """Execute the sweep and write the CSV to ``out`` (or ``spec.out``)."""
    rows = execute(spec, workers, trace_dir)
    target = out if out is not None else spec.out
    if target is not None:
        Path(target).write_text(format_csv(rows), encoding="ascii", newline="")
    return rows


# -- trend report ------------------------------------------------------------

@dataclass(frozen=True)
class TrendLine:
    name: str
    status: str  # PASS, FAIL or SKIP
    detail: str

    @property
    def passed(self) -> bool:
        return self.status != "FAIL"

    def __str__(self) -> str:
        return f"{self.status} {self.name}: {self.detail}"


def point_means(rows: Iterable[ResultRow]) -> dict[Point, dict[str, float]]:
    groups: dict[Point, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault(r.point, []).append(r)
    return {p: {m: statistics.fmean(float(getattr(r, m)) for r in rs) for m in METRICS}
            for p, rs in groups.items()}


def rel(a: float, b: float) -> float:
    """Relative change of ``a`` with respect to ``b``."""
    return (a - b) / b


def decreasing_trend(values: Sequence[float], step_tol: float = STEP_TOL,
                     strict_margin: float = STRICT_MARGIN, strict_steps: int = 2) -> bool:
    """No step rises by more than ``step_tol`` and enough steps fall by the margin."""
    steps = [rel(b, a) for a, b in zip(values, values[1:])]
    if any(s > step_tol for s in steps):
        return False
    return sum(s <= -strict_margin for s in steps) >= strict_steps


def _fmt_series(vals: Sequence[float]) -> str:
    return " > ".join(f"{v:.4g}" for v in vals)


def compare_schemes(rows: Iterable[ResultRow], k: int = 4, M: int = 12, M_scheme: int = 8,
                    alpha_scheme: float = 0.5) -> list[TrendLine]:
    """Evaluate the published trends on sweep results.

    Checks whose sweep points are missing come back as ``SKIP`` lines naming
    what is missing; nothing is interpolated.
    """
    means = point_means(rows)
    orig = Scheme.ORIGINAL.value
    nc, co = Mode.NON_COOPERATIVE.value, Mode.COOPERATIVE.value
    lines: list[TrendLine] = []

    def get(alpha, kk, m, scheme, mode):
        return means.get(Point(alpha, kk, m, scheme, mode))

    def missing(name, what):
        lines.append(TrendLine(name, "SKIP", f"missing coverage: {what}"))

    # alpha tradeoff per mode
    for mode in (nc, co):
        pts = [get(a, k, M, orig, mode) for a in ALPHAS]
        name = f"alpha tradeoff [{mode}]"
        if any(p is None for p in pts):
            missing(name, f"alpha={ALPHAS} at k={k}, M={M}")
            continue
        for metric in ("mse_mean", "throughput"):
            vals = [p[metric] for p in pts]
            ok = decreasing_trend(vals)
            lines.append(TrendLine(f"{name} {metric} decreasing", "PASS" if ok else "FAIL",
                                   _fmt_series(vals)))

    # k insensitivity
    for mode in (nc, co):
        for a in ALPHAS:
            p4, p12 = get(a, 4, M, orig, mode), get(a, 12, M, orig, mode)
            name = f"k insensitivity [{mode}, alpha={a}]"
            if p4 is None or p12 is None:
                missing(name, f"k=4 and k=12 at M={M}")
                continue
            for metric in ("mse_mean", "throughput"):
                d = abs(rel(p4[metric], p12[metric]))
                lines.append(TrendLine(f"{name} {metric}", "PASS" if d <= K_TOL else "FAIL",
                                       f"|rel diff| {d:.3%} (limit {K_TOL:.0%})"))

    # mode ordering
    for a in ALPHAS:
        pn, pc = get(a, k, M, orig, nc), get(a, k, M, orig, co)
        name = f"mode ordering [alpha={a}]"
        if pn is None or pc is None:
            missing(name, f"both modes at k={k}, M={M}")
            continue
        margin = STRICT_MARGIN if a == alpha_scheme else 0.0
        mse_gain = -rel(pc["mse_mean"], pn["mse_mean"])
        thr_gain = rel(pn["throughput"], pc["throughput"])
        ok_mse = mse_gain > margin if margin == 0 else mse_gain >= margin
        ok_thr = thr_gain > margin if margin == 0 else thr_gain >= margin
        lines.append(TrendLine(f"{name} coop MSE < non-coop MSE", "PASS" if ok_mse else "FAIL",
                               f"coop {pc['mse_mean']:.4g} vs non-coop {pn['mse_mean']:.4g} "
                               f"(gain {mse_gain:.2%}, need {margin:.0%})"))
        lines.append(TrendLine(f"{name} non-coop throughput > coop", "PASS" if ok_thr else "FAIL",
                               f"non-coop {pn['throughput']:.6g} vs coop {pc['throughput']:.6g} "
                               f"(gain {thr_gain:.3%}, need {margin:.0%})"))

    # station count
    for mode in (nc, co):
        ms = sorted({p.M for p in means if p.k == k and p.scheme == orig and p.mode == mode
                     and p.alpha == alpha_scheme})
        name = f"station count [{mode}, alpha={alpha_scheme}]"
        if not {4, 8, 12} <= set(ms):
            missing(name, "M in {4, 8, 12}")
            continue
        vals = [get(alpha_scheme, k, m, orig, mode)["mse_mean"] for m in (4, 8, 12)]
        steps_ok = all(rel(b, a) <= STEP_TOL for a, b in zip(vals, vals[1:]))
        overall = -rel(vals[-1], vals[0])
        ok = steps_ok and overall >= M_OVERALL
        lines.append(TrendLine(f"{name} MSE decreasing in M", "PASS" if ok else "FAIL",
                               f"{_fmt_series(vals)} (overall {overall:.2%})"))

    # scheme ordering
    modes_present = sorted({p.mode for p in means if p.M == M_scheme and p.alpha == alpha_scheme
                            and p.k == k and p.scheme != orig})
    if not modes_present:
        missing("scheme ordering", f"RSMS schemes at k={k}, alpha={alpha_scheme}, M={M_scheme}")
    for mode in modes_present:
        lines.extend(_scheme_lines(
            {s.value: get(alpha_scheme, k, M_scheme, s.value, mode) for s in Scheme}, mode))
    return lines


def scheme_checks(o: dict, s: dict, c: dict, sc: dict) -> list[tuple[str, bool, str]]:
    """Scheme-ordering checks on per-scheme metric means."""
    out = []
    gain = -rel(o["mse_mean"], s["mse_mean"])
    out.append(("Original MSE <= RSMS-S MSE", gain >= SCHEME_MSE_MARGIN,
                f"{o['mse_mean']:.4g} vs {s['mse_mean']:.4g} (gain {gain:.2%}, need 5%)"))
    for metric in ("throughput", "jain"):
        g = rel(o[metric], c[metric])
        out.append((f"Original {metric} >= RSMS-C", g >= STRICT_MARGIN,
                    f"{o[metric]:.6g} vs {c[metric]:.6g} (gain {g:.3%}, need 2%)"))
    no_worse = (o["mse_mean"] <= sc["mse_mean"] and o["throughput"] >= sc["throughput"]
                and o["jain"] >= sc["jain"])
    strictly = (o["mse_mean"] < sc["mse_mean"] or o["throughput"] > sc["throughput"]
                or o["jain"] > sc["jain"])
    out.append(("Original dominates RSMS-SC", no_worse and strictly,
                f"mse {o['mse_mean']:.4g}/{sc['mse_mean']:.4g}, "
                f"thr {o['throughput']:.6g}/{sc['throughput']:.6g}, "
                f"jain {o['jain']:.6f}/{sc['jain']:.6f}"))
    for metric in ("throughput", "jain"):
        d = abs(rel(o[metric], s[metric]))
        out.append((f"Original vs RSMS-S {metric} within 5%", d <= SAME_PROC_TOL,
                    f"|rel diff| {d:.3%}"))
    d = abs(rel(o["mse_mean"], c["mse_mean"]))
    out.append(("Original vs RSMS-C MSE within 5%", d <= SAME_PROC_TOL, f"|rel diff| {d:.3%}"))
    return out


def _scheme_lines(by_scheme: dict, mode: str) -> list[TrendLine]:
    if any(v is None for v in by_scheme.values()):
        gone = [k for k, v in by_scheme.items() if v is None]
        return [TrendLine(f"scheme ordering [{mode}]", "SKIP", f"missing coverage: {gone}")]
    o, s = by_scheme[Scheme.ORIGINAL.value], by_scheme[Scheme.RSMS_S.value]
    c, sc = by_scheme[Scheme.RSMS_C.value], by_scheme[Scheme.RSMS_SC.value]
    return [TrendLine(f"scheme ordering [{mode}] {name}", "PASS" if ok else "FAIL", detail)
            for name, ok, detail in scheme_checks(o, s, c, sc)]
