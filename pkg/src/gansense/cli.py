"""Command-line entry point: ``gansense {sweep,aggregate,best,tables}``.

Sweeps read an optional INI file (section ``[sweep]``); flags given on the
command line override it. Example config::

    [sweep]
    channel = rayleigh
    mode = gan
    Lhat = 100, 200
    n_grid = 50:500:50
    seeds = 10
    master_seed = 7
    out = runs/rayleigh
    epochs = 200
    gan_iterations = 2000
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import replace
from pathlib import Path

from gansense.channel import ChannelKind, FadingGranularity
from gansense.gan import GanSpec
from gansense.harness import (
    HarnessError,
    Mode,
    SweepSpec,
    aggregate,
    best_overall,
    reference_cells,
    read_aggregates,
    read_results,
    render_tables,
    run_sweep,
    select_best,
    trials_path,
    write_aggregates,
)
from gansense.sensing import FrameConfig, LabelSource, TrainingConfig

log = logging.getLogger("gansense")

# config key -> (target, field, converter)
_FRAME_KEYS = {"T": int, "S": int, "F": int, "p_s": float, "p_B": float, "threshold": float}
_TRAIN_KEYS = {"epochs": int, "batch_size": int, "dropout": float, "lr": float}
_GAN_KEYS = {"gan_iterations": ("iterations", int), "gan_batch_size": ("batch_size", int),
             "latent_dim": ("latent_dim", int), "gan_lr": ("learning_rate", float),
             "gan_beta1": ("beta1", float), "gan_hidden_activation": ("hidden_activation", str)}


def parse_grid(text: str) -> list[int]:
    """``"15:50:5"`` (inclusive range), ``"10,20,40"``, or a mix of both."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if ":" in part:
            bits = [int(b) for b in part.split(":")]
            if len(bits) not in (2, 3) or (len(bits) == 3 and bits[2] <= 0):
                raise argparse.ArgumentTypeError(f"bad range {part!r}; use start:stop[:step]")
            start, stop = bits[0], bits[1]
            step = bits[2] if len(bits) == 3 else 1
            out.extend(range(start, stop + 1, step))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty grid {text!r}")
    return out


def _grid_arg(text):
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _load_config(path) -> dict:
    if path is None:
        return {}
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep T, S, F, p_B case
    if not cp.read(path, encoding="utf-8"):
        raise HarnessError(f"cannot read config {path}")
    if not cp.has_section("sweep"):
        raise HarnessError(f"{path}: missing [sweep] section")
    return dict(cp.items("sweep"))


def build_spec(args) -> SweepSpec:
    cfg = _load_config(args.config)

    def pick(name, conv=str, default=None):
        val = getattr(args, name, None)
        if val is not None:
            return val
        if name in cfg:
            return conv(cfg[name])
        return default

    channel = pick("channel", default=None)
    mode = pick("mode", default=None)
    if channel is None or mode is None:
        raise HarnessError("--channel and --mode are required (flag or config)")
    channel, mode = ChannelKind(channel), Mode(mode)
    preset = pick("preset")
    if preset == "reference":
        cells = reference_cells(channel, mode)
    elif mode is Mode.NO_GAN:
        Ls = pick("L", parse_grid)
        if not Ls:
            raise HarnessError("no-gan sweeps need --L")
        cells = [(L, 0) for L in Ls]
    else:
        lhats, ns = pick("Lhat", parse_grid), pick("n_grid", parse_grid)
        if not lhats or not ns:
            raise HarnessError("gan sweeps need --Lhat and --n-grid")
        cells = [(lh, n) for lh in lhats for n in ns]

    frame = FrameConfig(**{k: conv(cfg[k]) for k, conv in _FRAME_KEYS.items() if k in cfg})
    if "label_source" in cfg:
        frame = replace(frame, label_source=LabelSource(cfg["label_source"]))
    training = TrainingConfig(**{k: conv(cfg[k]) for k, conv in _TRAIN_KEYS.items() if k in cfg})
    if args.epochs is not None:
        training = replace(training, epochs=args.epochs)
    gan_kw = {f: conv(cfg[k]) for k, (f, conv) in _GAN_KEYS.items() if k in cfg}
    if args.gan_iterations is not None:
        gan_kw["iterations"] = args.gan_iterations
    gan = GanSpec(output_width=frame.sensing_per_slot, **gan_kw)
    out = Path(pick("out", default="."))
    return SweepSpec(
        channel=channel, mode=mode, cells=cells,
        seeds=pick("seeds", int, 10), master_seed=pick("master_seed", int, 0),
        frame=frame, training=training, gan=gan,
        fading=FadingGranularity(cfg.get("fading", FadingGranularity.PER_SLOT.value)),
        eval_per_class=int(cfg.get("eval_per_class", 2000)),
        output=trials_path(out, channel, mode),
    )


def cmd_sweep(args) -> int:
    spec = build_spec(args)
    jobs = args.jobs if args.jobs is not None else 1
    before = len(read_results(spec.output))
    results = run_sweep(spec, jobs=jobs,
                        progress=lambda i, n: log.info("group %d/%d done", i, n))
    after = len(read_results(spec.output))
    print(f"{spec.output}: {len(results)} trials for this grid, {after - before} newly simulated")
    return 0


def _channel_aggregates(out: Path, channel: str, strict: bool = True):
    plain = read_results(trials_path(out, channel, Mode.NO_GAN))
    gan = read_results(trials_path(out, channel, Mode.GAN))
    if not plain and not gan:
        raise HarnessError(f"no trial CSVs for {channel} in {out}")
    return aggregate(gan, plain, strict=strict)


def _channels(args) -> list[str]:
    return [args.channel] if args.channel else [c.value for c in ChannelKind]


def cmd_aggregate(args) -> int:
    out = Path(args.out)
    done = 0
    for ch in _channels(args):
        if not (trials_path(out, ch, Mode.NO_GAN).exists() or trials_path(out, ch, Mode.GAN).exists()):
            continue
        rows = _channel_aggregates(out, ch, strict=not args.allow_unmatched)
        path = out / f"aggregates_{ch}.csv"
        write_aggregates(path, rows)
        print(f"{path}: {len(rows)} cells")
        done += 1
    if not done:
        raise HarnessError(f"no trial CSVs in {out}")
    return 0


def _load_aggregates(out: Path, channel: str):
    path = out / f"aggregates_{channel}.csv"
    if path.exists():
        return read_aggregates(path)
    return _channel_aggregates(out, channel)


def cmd_best(args) -> int:
    out = Path(args.out)
    for ch in _channels(args):
        try:
            rows = _load_aggregates(out, ch)
        except HarnessError:
            if args.channel:
                raise
            continue
        chosen = select_best(rows, args.ceiling)
        print(f"[{ch}] p_MD < {args.ceiling:g}")
        if not chosen:
            print("  no cell satisfies the ceiling")
            continue
        for L_hat, r in chosen.items():
            imp = "n/a" if r.improvement is None else f"{r.improvement:+.2f}%"
            print(f"  L_hat={L_hat:<4d} n={r.n:<4d} budget={r.budget:<4d} r_hat={r.r_mean:.1f} "
                  f"p_MD={r.p_MD_mean:.4f} improvement={imp}")
        top = best_overall(chosen)
        print(f"  best: L_hat={top.L} n={top.n} r_hat={top.r_mean:.1f}")
    return 0


def cmd_tables(args) -> int:
    out = Path(args.out)
    formats = args.format or ["csv", "md", "plot"]
    for ch in _channels(args):
        try:
            rows = _load_aggregates(out, ch)
        except HarnessError:
            if args.channel:
                raise
            continue
        for p in render_tables(rows, out, formats, args.ceiling, stem=ch):
            print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gansense", description="GAN-augmented spectrum sensing experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    sw = sub.add_parser("sweep", help="simulate a grid of cells (resumable)")
    sw.add_argument("--channel", choices=[c.value for c in ChannelKind])
    sw.add_argument("--mode", choices=[m.value for m in Mode])
    sw.add_argument("--L", type=_grid_arg, help="real-only learning lengths, e.g. 15:50:5")
    sw.add_argument("--Lhat", type=_grid_arg, help="real learning slots for GAN cells")
    sw.add_argument("--n-grid", dest="n_grid", type=_grid_arg, help="synthetic slots per class")
    sw.add_argument("--preset", choices=["reference"], help="use the reference grid for this channel/mode")
    sw.add_argument("--seeds", type=int)
    sw.add_argument("--master-seed", dest="master_seed", type=int)
    sw.add_argument("--out")
    sw.add_argument("--config")
    sw.add_argument("--jobs", type=int)
    sw.add_argument("--epochs", type=int)
    sw.add_argument("--gan-iterations", dest="gan_iterations", type=int)
    sw.set_defaults(func=cmd_sweep)

    ag = sub.add_parser("aggregate", help="fold trial CSVs into per-cell statistics")
    ag.add_argument("--out", default=".")
    ag.add_argument("--channel", choices=[c.value for c in ChannelKind])
    ag.add_argument("--allow-unmatched", action="store_true",
                    help="leave improvement empty for GAN cells without a matched budget")
    ag.set_defaults(func=cmd_aggregate)

    be = sub.add_parser("best", help="best n per L_hat under a p_MD ceiling")
    be.add_argument("--out", default=".")
    be.add_argument("--channel", choices=[c.value for c in ChannelKind])
    be.add_argument("--ceiling", type=float, default=0.10)
    be.set_defaults(func=cmd_best)

    tb = sub.add_parser("tables", help="render CSV, markdown and plot data")
    tb.add_argument("--out", default=".")
    tb.add_argument("--channel", choices=[c.value for c in ChannelKind])
    tb.add_argument("--ceiling", type=float, default=0.10)
    tb.add_argument("--format", action="append", choices=["csv", "md", "plot"])
    tb.set_defaults(func=cmd_tables)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (HarnessError, ValueError, OSError) as exc:
        print(f"gansense: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
