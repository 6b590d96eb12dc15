"""Seeded sweeps over learning budgets, aggregation, best-cell selection and tables."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from gansense.channel import ChannelKind, ChannelModel, FadingGranularity
from gansense.frame import GanPlan, run_frame
from gansense.gan import GanSpec
from gansense.sensing import FrameConfig, SensingError, TrainingConfig

log = logging.getLogger(__name__)


class HarnessError(RuntimeError):
    pass


class Mode(str, Enum):
    NO_GAN = "no-gan"
    GAN = "gan"


# (L_hat -> n values) for the GAN sweeps and the matching real-only budgets
REFERENCE_GRIDS = {
    ChannelKind.AWGN: {
        10: list(range(5, 45, 5)),
        15: list(range(5, 95, 10)),
        20: list(range(20, 200, 20)),
        25: list(range(15, 195, 20)),
        30: list(range(10, 190, 20)),
    },
    ChannelKind.RAYLEIGH: {
        50: [50, 100, 150, 200],
        100: [50, 100, 200, 300, 400, 500],
        200: [50, 100, 200, 300, 400],
        300: [100, 200, 300],
    },
}


def reference_cells(channel: ChannelKind | str, mode: Mode | str) -> list[tuple[int, int]]:
    grid = REFERENCE_GRIDS[ChannelKind(channel)]
    if Mode(mode) is Mode.GAN:
        return [(lh, n) for lh, ns in grid.items() for n in ns]
    return [(b, 0) for b in sorted({lh + n for lh, ns in grid.items() for n in ns})]


@dataclass(frozen=True)
class SweepSpec:
    channel: ChannelKind
    mode: Mode
    cells: tuple[tuple[int, int], ...]
    seeds: int = 10
    master_seed: int = 0
    frame: FrameConfig = FrameConfig()
    training: TrainingConfig = TrainingConfig()
    gan: GanSpec | None = None
    fading: FadingGranularity = FadingGranularity.PER_SLOT
    eval_per_class: int = 2000
    output: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "channel", ChannelKind(self.channel))
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "fading", FadingGranularity(self.fading))
        object.__setattr__(self, "cells", tuple((int(L), int(n)) for L, n in self.cells))
        if self.seeds < 1:
            raise HarnessError("need at least one seed per cell")
        if not self.cells:
            raise HarnessError("empty grid")
        for L, n in self.cells:
            if self.mode is Mode.NO_GAN and n != 0:
                raise HarnessError(f"no-gan cell ({L}, {n}) has synthetic slots")
            if n < 0 or L < 1:
                raise HarnessError(f"invalid cell ({L}, {n})")
            try:
                self.frame.with_learning(L + n)
            except SensingError as exc:
                raise HarnessError(f"cell ({L}, {n}): {exc}") from exc

    def channel_model(self) -> ChannelModel:
        return ChannelModel(self.channel, fading_granularity=self.fading)

    def gan_spec(self) -> GanSpec:
        return self.gan or GanSpec(output_width=self.frame.sensing_per_slot)

    @property
    def config_id(self) -> str:
        """Fingerprint of every setting that changes a trial's outcome, except
        the cell and replicate. Resuming refuses rows with another fingerprint."""
        parts = [replace(self.frame, L=0), self.training, self.fading.value, self.eval_per_class]
        if self.mode is Mode.GAN:
            parts.append(self.gan_spec())
        return hashlib.sha256(repr(parts).encode()).hexdigest()[:12]


def stable_seed(*parts) -> int:
    """63-bit seed from a SHA-256 of the parts; independent of grid layout."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def cell_seed(master: int, channel, mode, L: int, n: int, replicate: int) -> int:
    return stable_seed(master, ChannelKind(channel).value, Mode(mode).value, L, n, replicate)


def learning_seed(master: int, channel, L: int, replicate: int) -> int:
    """Learning-phase stream; shared by every cell with the same real budget."""
    return stable_seed(master, ChannelKind(channel).value, "learning", L, replicate)


def eval_seed(master: int, channel, replicate: int) -> int:
    return stable_seed(master, ChannelKind(channel).value, "eval", replicate)


@dataclass(frozen=True)
class TrialResult:
    channel: str
    mode: str
    L: int
    n: int
    budget: int
    replicate: int
    seed: int
    analytic_r: float
    empirical_r: float
    p_FA: float
    p_MD: float
    p_N: float
    inframe_p_FA: float
    inframe_p_MD: float
    collisions: int
    degenerate: int
    config: str = ""

    @property
    def key(self) -> tuple:
        return (self.channel, self.mode, self.L, self.n, self.replicate)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(f"{v:.10g}" if isinstance(v, float) else str(v))
        return out

    @classmethod
    def from_row(cls, row: dict) -> "TrialResult":
        kw = {}
        for f in fields(cls):
            v = row[f.name]
            kw[f.name] = v if f.type == "str" else (int(v) if f.type == "int" else float(v))
        return cls(**kw)


def read_results(path) -> list[TrialResult]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open(newline="", encoding="utf-8") as fh:
        return [TrialResult.from_row(r) for r in csv.DictReader(fh)]


def _run_group(args) -> list[TrialResult]:
    spec, L, replicate, ns = args
    channel = spec.channel_model()
    config = spec.frame.with_learning(L)
    lseed = learning_seed(spec.master_seed, spec.channel, L, replicate)
    eseed = eval_seed(spec.master_seed, spec.channel, replicate)
    cache: dict = {}
    out = []
    for n in ns:
        seed = cell_seed(spec.master_seed, spec.channel, spec.mode, L, n, replicate)
        plan = GanPlan(n, spec.gan_spec()) if spec.mode is Mode.GAN else None
        report, _ = run_frame(config, channel, plan, seed, training=spec.training,
                              learning_seed=lseed, eval_seed=eseed,
                              eval_per_class=spec.eval_per_class, gan_cache=cache)
        out.append(TrialResult(
            spec.channel.value, spec.mode.value, L, n, L + n, replicate, seed,
            report.analytic_r, report.empirical_r, report.p_FA, report.p_MD, report.p_N,
            report.inframe_p_FA, report.inframe_p_MD, report.collisions, int(report.degenerate),
            spec.config_id))
    return out


def run_sweep(spec: SweepSpec, jobs: int = 1, progress=None) -> list[TrialResult]:
    """Simulate every (cell, replicate) not already in ``spec.output``.

    Rows are appended in a fixed order (replicate, L, n), so a sweep that is
    interrupted and resumed produces the same file as an uninterrupted one.
    Returns all results for the spec's cells, old and new.
    """
    done = {r.key: r for r in read_results(spec.output)} if spec.output else {}
    stale = {r.config for r in done.values()} - {spec.config_id}
    if stale:
        raise HarnessError(f"{spec.output} holds trials from another configuration "
                           f"({', '.join(sorted(stale))}); use a fresh output directory")
    by_L = defaultdict(list)
    for L, n in spec.cells:
        by_L[L].append(n)
    groups = []
    for rep in range(spec.seeds):
        for L in sorted(by_L):
            todo = [n for n in sorted(set(by_L[L]))
                    if (spec.channel.value, spec.mode.value, L, n, rep) not in done]
            if todo:
                groups.append((spec, L, rep, todo))

    writer = fh = None
    if spec.output is not None and groups:
        path = Path(spec.output)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            new_file = not path.exists() or path.stat().st_size == 0
            fh = path.open("a", newline="", encoding="utf-8")
        except OSError as exc:
            raise HarnessError(f"cannot write {path}: {exc}") from exc
        writer = csv.writer(fh, lineterminator="\n")
        if new_file:
            writer.writerow(TrialResult.columns())
    try:
        if jobs > 1:
            pool = ProcessPoolExecutor(jobs)
            batches = pool.map(_run_group, groups)
        else:
            pool = None
            batches = map(_run_group, groups)
        for i, batch in enumerate(batches):
            for res in batch:
                done[res.key] = res
                if writer:
                    writer.writerow(res.row())
            if fh:
                fh.flush()
            if progress:
                progress(i + 1, len(groups))
        if pool:
            pool.shutdown()
    finally:
        if fh:
            fh.close()
    wanted = {(spec.channel.value, spec.mode.value, L, n, rep)
              for L, n in spec.cells for rep in range(spec.seeds)}
    return [r for k, r in sorted(done.items()) if k in wanted]


@dataclass(frozen=True)
class AggregateRow:
    channel: str
    mode: str
    L: int
    n: int
    budget: int
    count: int
    r_mean: float
    r_std: float
    empirical_r_mean: float
    p_FA_mean: float
    p_MD_mean: float
    p_MD_std: float
    improvement: float | None = None
    matched_r: float | None = None
    matched_p_MD: float | None = None

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append("" if v is None else (f"{v:.10g}" if isinstance(v, float) else str(v)))
        return out

    @classmethod
    def from_row(cls, row: dict) -> "AggregateRow":
        kw = {}
        for f in fields(cls):
            v = row[f.name]
            if f.type == "str":
                kw[f.name] = v
            elif f.type == "int":
                kw[f.name] = int(v)
            else:
                kw[f.name] = None if v == "" else float(v)
        return cls(**kw)


def improvement_ratio(r_gan: float, r_plain: float) -> float:
    """Throughput gain of the GAN cell in percent."""
    return (r_gan - r_plain) / r_plain * 100.0


def _summarise(rows: Sequence[TrialResult]) -> dict:
    r = np.array([x.analytic_r for x in rows])
    md = np.array([x.p_MD for x in rows])
    ddof = 1 if len(rows) > 1 else 0
    return dict(count=len(rows), r_mean=float(r.mean()), r_std=float(r.std(ddof=ddof)),
                empirical_r_mean=float(np.mean([x.empirical_r for x in rows])),
                p_FA_mean=float(np.mean([x.p_FA for x in rows])),
                p_MD_mean=float(md.mean()), p_MD_std=float(md.std(ddof=ddof)))


def aggregate(results: Iterable[TrialResult], baseline: Iterable[TrialResult] = (),
              strict: bool = True) -> list[AggregateRow]:
    """Per-cell means/stddevs; GAN cells get the improvement over the
    real-only cell with the same total budget ``L_hat + n``."""
    cells = defaultdict(list)
    for r in list(results) + list(baseline):
        cells[(r.channel, r.mode, r.L, r.n)].append(r)
    plain = {}
    out = []
    for (channel, mode, L, n), rows in sorted(cells.items()):
        row = AggregateRow(channel, mode, L, n, L + n, **_summarise(rows))
        if mode == Mode.NO_GAN.value:
            plain[(channel, L)] = row
        out.append(row)
    final = []
    for row in out:
        if row.mode == Mode.GAN.value:
            match = plain.get((row.channel, row.budget))
            if match is None:
                if strict:
                    raise HarnessError(f"no real-only cell with L={row.budget} to match {row.L}+{row.n}")
            else:
                row = replace(row, improvement=improvement_ratio(row.r_mean, match.r_mean),
                              matched_r=match.r_mean, matched_p_MD=match.p_MD_mean)
        final.append(row)
    return final


def _rank(row: AggregateRow):
    return (-row.r_mean, row.n, row.L)


def select_best(aggregates: Iterable[AggregateRow], p_md_ceiling: float) -> dict[int, AggregateRow]:
    """For each L_hat, the GAN cell with the highest mean throughput among
    those whose mean p_MD is below the ceiling (ties: smaller n, then L_hat)."""
    groups = defaultdict(list)
    seen = set()
    for row in aggregates:
        if row.mode != Mode.GAN.value:
            continue
        seen.add(row.L)
        if row.p_MD_mean < p_md_ceiling:
            groups[row.L].append(row)
    chosen = {L: min(rows, key=_rank) for L, rows in sorted(groups.items())}
    for L in sorted(seen - set(chosen)):
        log.warning("no cell with L_hat=%d meets p_MD < %.3g", L, p_md_ceiling)
    return chosen


def best_overall(selection: dict[int, AggregateRow]) -> AggregateRow | None:
    return min(selection.values(), key=_rank) if selection else None


def improvement_curve(aggregates: Iterable[AggregateRow]) -> list[AggregateRow]:
    """Highest-throughput GAN cell at every total budget that has a match."""
    best = {}
    for row in aggregates:
        if row.mode != Mode.GAN.value or row.improvement is None:
            continue
        if row.budget not in best or _rank(row) < _rank(best[row.budget]):
            best[row.budget] = row
    return [best[b] for b in sorted(best)]


def write_aggregates(path, rows: Sequence[AggregateRow]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AggregateRow.columns())
        for row in rows:
            w.writerow(row.row())


def read_aggregates(path) -> list[AggregateRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [AggregateRow.from_row(r) for r in csv.DictReader(fh)]


def _pct(x: float | None) -> str:
    return "" if x is None else f"{100 * x:.2f}"


def markdown_tables(aggregates: Sequence[AggregateRow], p_md_ceiling: float = 0.10) -> str:
    plain = {r.L: r for r in aggregates if r.mode == Mode.NO_GAN.value}
    gan = defaultdict(list)
    for r in aggregates:
        if r.mode == Mode.GAN.value:
            gan[r.L].append(r)
    channel = aggregates[0].channel if aggregates else ""
    parts = []
    for L_hat in sorted(gan):
        parts.append(f"### {channel}, L_hat = {L_hat}\n")
        parts.append("| L | r | p_MD (%) | L_hat+n | r_hat | p_MD_hat (%) |")
        parts.append("|---|---|---|---|---|---|")
        for r in sorted(gan[L_hat], key=lambda x: x.n):
            p = plain.get(r.budget)
            left = f"{p.L} | {p.r_mean:.0f} | {_pct(p.p_MD_mean)}" if p else f"{r.budget} | | "
            parts.append(f"| {left} | {L_hat}+{r.n} | {r.r_mean:.0f} | {_pct(r.p_MD_mean)} |")
        parts.append("")
    selection = select_best(aggregates, p_md_ceiling)
    parts.append(f"### {channel}, best n per L_hat (p_MD < {100 * p_md_ceiling:g}%)\n")
    parts.append("| L or L_hat+n | r | p_MD (%) | n | r_hat | p_MD_hat (%) | improvement (%) |")
    parts.append("|---|---|---|---|---|---|---|")
    for L_hat, r in selection.items():
        imp = "" if r.improvement is None else f"{r.improvement:.2f}"
        parts.append(f"| {r.budget} | {'' if r.matched_r is None else f'{r.matched_r:.0f}'} | "
                     f"{_pct(r.matched_p_MD)} | {r.n} | {r.r_mean:.0f} | {_pct(r.p_MD_mean)} | {imp} |")
    parts.append("")
    return "\n".join(parts)


def render_tables(aggregates: Sequence[AggregateRow], out_dir, formats: Sequence[str] = ("csv", "md", "plot"),
                  p_md_ceiling: float = 0.10, stem: str | None = None) -> list[Path]:
    """Write aggregate CSV, markdown tables and improvement-vs-budget plot data."""
    if not aggregates:
        raise HarnessError("nothing to render")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise HarnessError(f"cannot create {out_dir}: {exc}") from exc
    stem = stem or aggregates[0].channel
    written = []
    if "csv" in formats:
        p = out_dir / f"aggregates_{stem}.csv"
        write_aggregates(p, aggregates)
        written.append(p)
    if "md" in formats:
        p = out_dir / f"tables_{stem}.md"
        p.write_text(markdown_tables(aggregates, p_md_ceiling), encoding="utf-8")
        written.append(p)
    if "plot" in formats:
        p = out_dir / f"improvement_{stem}.csv"
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["budget", "L_hat", "n", "r_hat", "r", "improvement_pct"])
            for r in improvement_curve(aggregates):
                w.writerow([r.budget, r.L, r.n, f"{r.r_mean:.10g}", f"{r.matched_r:.10g}",
                            f"{r.improvement:.10g}"])
        written.append(p)
    return written


def trials_path(out_dir, channel, mode) -> Path:
    return Path(out_dir) / f"trials_{ChannelKind(channel).value}_{Mode(mode).value}.csv"
