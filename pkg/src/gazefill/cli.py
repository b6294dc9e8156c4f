"""Command-line interface: gen, inject, train, impute, eval, report, plot.

The subcommands compose into the full workflow:
  gen -> inject -> train (saits, rae) -> impute -> eval -> report -> plot
All stages exit nonzero on failure and are deterministic for fixed seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import blinks as blinks_mod
from .blinks import BlinkStats, inject_blinks, large_gap_inject
from .classic import KnnConfig, SsaConfig, impute_knn, impute_pchip, impute_ssa
from .core import (
    Dataset,
    FormatError,
    GazeSequence,
    MissingMask,
    load_dataset,
    load_sequence,
    save_dataset,
    save_sequence,
    zscore,
)
from .harness import emit_plots, make_folds, _fold_dataset
from .metrics import METRIC_ORDER, MetricsReport, evaluate
from .rae import RaeConfig, RaeLayerSpec, load_rae, refine, save_rae, train_rae
from .resample import DEFAULT_FACTOR, downsample, upsample
from .saits import SaitsConfig, impute_saits, load_saits, save_saits, train_saits
from .synthgen import ModelRanges, make_corpus


def _read_json(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _load_stats(path: str | None, seed: int) -> BlinkStats:
    if path is None:
        return blinks_mod.reference_stats(seed)
    return BlinkStats.load(path)


def _mask_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".mask")


def _write_mask(mask: MissingMask, path: Path) -> None:
    path.write_text("".join(f"{i}\n" for i in mask.indices))


def _read_mask(path: Path, length: int) -> MissingMask:
    text = path.read_text().split()
    return MissingMask.from_indices([int(t) for t in text], length)


# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = _read_json(args.config)
    ranges = ModelRanges(**{k: tuple(v) for k, v in cfg.get("model_ranges", {}).items()})
    ds = make_corpus(
        n_participants=cfg.get("n_participants", args.participants),
        tasks=cfg.get("tasks", [int(t) for t in args.tasks.split(",")] if args.tasks else None),
        model_ranges=ranges,
        seed=cfg.get("seed", args.seed),
        duration_s=cfg.get("duration_s", args.duration_s),
        rate_hz=cfg.get("rate_hz", args.rate_hz),
    )
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} sequences to {args.out}")
    return 0


def cmd_inject(args) -> int:
    ds = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = _load_stats(args.stats, args.seed)
    n = 0
    for i, seq in enumerate(ds.sequences):
        if not seq.is_complete():
            continue
        if args.large_gap:
            corrupted, mask = large_gap_inject(seq)
        else:
            corrupted, mask = inject_blinks(seq, stats, args.seed + i)
        path = out / seq.meta.filename()
        save_sequence(corrupted, path)
        _write_mask(mask, _mask_path(path))
        n += 1
    print(f"corrupted {n} sequences into {args.out}")
    return 0


def _training_split(ds: Dataset, seqs: list[GazeSequence]) -> list[GazeSequence]:
    if ds.split:
        subset = [s for s in seqs if s.meta and ds.split.get(s.meta.participant) == "train"]
        if subset:
            return subset
    return seqs


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    overrides = _read_json(args.config)
    if args.method == "saits":
        train_pool = _training_split(ds, list(ds.sequences))
        coarse = []
        for s in train_pool:
            z, _ = zscore(downsample(s, args.factor))
            coarse.append(z)
        folds = make_folds(len(coarse), args.folds, args.seed)
        val_set = set(folds[args.fold].tolist())
        fold_ds = _fold_dataset(coarse, val_set)
        cfg = SaitsConfig(**{"seq_len": len(coarse[0]), **overrides})
        stats = _load_stats(args.stats, args.seed).scaled(args.factor)
        model = train_saits(fold_ds, cfg, args.seed + args.fold, mask_stats=stats)
        save_saits(model, args.out)
    else:
        complete = [s for s in _training_split(ds, list(ds.sequences)) if s.is_complete()]
        if "layers" in overrides:
            overrides["layers"] = tuple(RaeLayerSpec(**d) for d in overrides["layers"])
        cfg = RaeConfig(**{"degradation_factor": args.factor, **overrides})
        model = train_rae(complete, cfg, args.seed + args.fold)
        save_rae(model, args.out)
    print(f"saved {args.method} checkpoint to {args.out}")
    return 0


def cmd_impute(args) -> int:
    data = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _read_json(args.config)
    saits_model = load_saits(args.model) if args.model else None
    rae_model = load_rae(args.rae_model) if args.rae_model else None
    library = None
    if args.library:
        lib_ds = load_dataset(args.library)
        library = Dataset(
            tuple(downsample(s, args.factor) for s in lib_ds.sequences if s.is_complete())
        )
    ssa_cfg = SsaConfig(**cfg.get("ssa", {}))
    knn_cfg = KnnConfig(**cfg.get("knn", {}))

    for path in sorted(data.glob("*.csv")):
        seq = load_sequence(path)
        coarse = downsample(seq, args.factor)
        if args.method == "pchip":
            imputed = impute_pchip(coarse)
        elif args.method == "ssa":
            imputed = impute_ssa(coarse, ssa_cfg)
        elif args.method == "knn":
            if library is None:
                print("error: --library is required for knn", file=sys.stderr)
                return 2
            imputed = impute_knn(coarse, library, knn_cfg)
        else:
            if saits_model is None:
                print("error: --model is required for saits", file=sys.stderr)
                return 2
            z, params = zscore(coarse)
            raw = impute_saits(saits_model, z)
            denorm = params.invert(raw.sequence).samples.copy()
            obs = ~coarse.missing
            denorm[obs] = coarse.samples[obs]
            imputed = type(raw)(coarse.with_samples(denorm), raw.filled)

        if args.scenario == "d":
            result, mask = imputed.sequence, imputed.filled
        else:
            result = upsample(imputed.sequence, len(seq), args.factor)
            mask = MissingMask.from_bool(seq.missing)
            if args.scenario == "rae":
                if rae_model is None:
                    print("error: --rae-model is required for scenario rae", file=sys.stderr)
                    return 2
                result = refine(rae_model, result)
        out_path = out / path.name
        save_sequence(result, out_path)
        _write_mask(mask, _mask_path(out_path))
    print(f"imputed {args.method} ({args.scenario}) into {args.out}")
    return 0


def cmd_eval(args) -> int:
    orig_dir = Path(args.original)
    imp_dir = Path(args.imputed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for path in sorted(imp_dir.glob("*.csv")):
        imputed = load_sequence(path)
        original = load_sequence(orig_dir / path.name)
        mask = _read_mask(_mask_path(path), len(imputed))
        if len(imputed) != len(original):
            if len(original) % len(imputed):
                print(
                    f"error: {path.name}: imputed length {len(imputed)} does not "
                    f"divide original {len(original)}",
                    file=sys.stderr,
                )
                return 2
            factor = len(original) // len(imputed)
            original = downsample(original, factor)
        report = evaluate(original, imputed, mask, original.rate_hz)
        report.save(out / (path.stem + ".json"))
        n += 1
    print(f"evaluated {n} sequences into {args.out}")
    return 0


def cmd_report(args) -> int:
    root = Path(args.reports)
    rows: dict[str, dict[str, float | None]] = {}
    labels = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not labels:
        print(f"error: no report subdirectories under {root}", file=sys.stderr)
        return 2
    for label in labels:
        reports = [MetricsReport.load(p) for p in sorted((root / label).glob("*.json"))]
        if not reports:
            continue
        row = {}
        for m in METRIC_ORDER:
            vals = [getattr(r, m) for r in reports if getattr(r, m) is not None]
            row[m] = float(np.mean(vals)) if vals else None
        rows[label] = row
    lines = ["Method," + ",".join(m.upper() for m in METRIC_ORDER)]
    for label, row in rows.items():
        cells = [label] + [
            "" if row[m] is None else repr(float(row[m])) for m in METRIC_ORDER
        ]
        lines.append(",".join(cells))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return 0


def cmd_plot(args) -> int:
    rae_model = load_rae(args.rae_model) if args.rae_model else None
    made = emit_plots(args.results, rae_model=rae_model, factor=args.factor)
    print(f"wrote {len(made)} images under {args.results}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gazefill")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic pursuit corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--participants", type=int, default=25)
    g.add_argument("--tasks", default=None, help="comma-separated task numbers")
    g.add_argument("--duration-s", type=float, default=15.0)
    g.add_argument("--rate-hz", type=float, default=1000.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", default=None, help="JSON config overriding flags")
    g.set_defaults(fn=cmd_gen)

    i = sub.add_parser("inject", help="insert blink-shaped missing data")
    i.add_argument("--data", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--stats", default=None, help="BlinkStats JSON")
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--large-gap", action="store_true")
    i.set_defaults(fn=cmd_inject)

    t = sub.add_parser("train", help="train the attention imputer or the refiner")
    t.add_argument("--method", choices=("saits", "rae"), required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--fold", type=int, default=0)
    t.add_argument("--folds", type=int, default=5)
    t.add_argument("--factor", type=int, default=DEFAULT_FACTOR)
    t.add_argument("--stats", default=None)
    t.add_argument("--config", default=None, help="JSON config overrides")
    t.set_defaults(fn=cmd_train)

    im = sub.add_parser("impute", help="fill gaps in corrupted sequences")
    im.add_argument("--method", choices=("pchip", "ssa", "knn", "saits"), required=True)
    im.add_argument("--data", required=True)
    im.add_argument("--out", required=True)
    im.add_argument("--scenario", choices=("d", "u", "rae"), default="u")
    im.add_argument("--model", default=None, help="attention-imputer checkpoint")
    im.add_argument("--rae-model", default=None, help="refiner checkpoint")
    im.add_argument("--library", default=None, help="complete-sequence dir for knn")
    im.add_argument("--factor", type=int, default=DEFAULT_FACTOR)
    im.add_argument("--config", default=None)
    im.set_defaults(fn=cmd_impute)

    e = sub.add_parser("eval", help="score imputed sequences against originals")
    e.add_argument("--original", required=True)
    e.add_argument("--imputed", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("report", help="aggregate report JSONs into a CSV table")
    r.add_argument("--reports", required=True, help="dir of per-method subdirs")
    r.add_argument("--out", required=True)
    r.set_defaults(fn=cmd_report)

    pl = sub.add_parser("plot", help="overlay and spectrogram images")
    pl.add_argument("--results", required=True)
    pl.add_argument("--rae-model", default=None)
    pl.add_argument("--factor", type=int, default=DEFAULT_FACTOR)
    pl.set_defaults(fn=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FormatError, FileNotFoundError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
