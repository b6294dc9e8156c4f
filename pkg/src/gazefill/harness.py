"""Experiment orchestration: pipeline assembly, cross-validation folds,
the three evaluation scenarios and report/plot emission.

Ground truth never reaches an imputer: methods receive only the corrupted
sequence (and, for the exemplar matcher, a library built from the training
split). Scenario suffixes follow the -D / -U / -RAE convention: scored on
the coarse grid, after upsampling, or after refinement respectively.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import blinks as blinks_mod
from .blinks import BlinkStats, inject_blinks, large_gap_inject
from .classic import ImputerOutput, KnnConfig, SsaConfig, impute_knn, impute_pchip, impute_ssa
from .core import (
    Dataset,
    GazeSequence,
    MissingMask,
    SequenceMeta,
    save_sequence,
    split_by_participant,
    zscore,
)
from .metrics import METRIC_ORDER, MetricsReport, evaluate
from .rae import RaeConfig, RaeModel, refine, train_rae
from .resample import downsample, upsample
from .saits import SaitsConfig, SaitsModel, impute_saits, train_saits
from .synthgen import make_corpus

__all__ = [
    "ExperimentConfig",
    "ModelBundle",
    "ResultsTable",
    "ExperimentError",
    "run_pipeline",
    "run_experiment",
    "emit_plots",
]

SCENARIOS = ("downsampled", "upsampled", "refined")
SUFFIX = {"downsampled": "-D", "upsampled": "-U", "refined": "-RAE"}
METHOD_LABEL = {"pchip": "PCHIP", "ssa": "SSA", "knn": "KNN", "saits": "SAITS"}


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    methods: tuple[str, ...] = ("pchip", "ssa", "knn", "saits")
    scenario: str = "refined"
    folds: int = 10
    seed: int = 0
    out_dir: str | Path = "results"
    # corpus: load from corpus_path if set, otherwise synthesize
    corpus_path: str | None = None
    n_participants: int = 25
    tasks: tuple[int, ...] = (1, 2, 3, 5)
    duration_s: float = 12.0
    rate_hz: float = 1000.0
    train_participants: int | None = None  # default: all but test
    test_participants: int | None = None  # default: ~20%
    factor: int = 30
    large_gap: bool = False
    stats_path: str | None = None  # default: blinks.reference_stats(seed)
    saits_overrides: dict = field(default_factory=dict)
    rae_overrides: dict = field(default_factory=dict)
    ssa: SsaConfig = field(default_factory=SsaConfig)
    knn: KnnConfig = field(default_factory=KnnConfig)
    max_failure_rate: float = 0.10
    n_plot_sequences: int = 3

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods must be nonempty")
        for m in self.methods:
            if m not in METHOD_LABEL:
                raise ValueError(f"unknown method {m!r}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.folds < 1:
            raise ValueError("folds must be >= 1")


@dataclass
class ModelBundle:
    """Everything one fold needs to run the pipeline."""

    factor: int
    saits_model: SaitsModel | None = None
    rae_model: RaeModel | None = None
    library: Dataset | None = None  # coarse complete sequences, degrees
    ssa_cfg: SsaConfig = field(default_factory=SsaConfig)
    knn_cfg: KnnConfig = field(default_factory=KnnConfig)


def _impute_coarse(coarse: GazeSequence, method: str, bundle: ModelBundle) -> ImputerOutput:
    if method == "pchip":
        return impute_pchip(coarse)
    if method == "ssa":
        return impute_ssa(coarse, bundle.ssa_cfg)
    if method == "knn":
        if bundle.library is None:
            raise ExperimentError("knn requires a library in the model bundle")
        return impute_knn(coarse, bundle.library, bundle.knn_cfg)
    if method == "saits":
        if bundle.saits_model is None:
            raise ExperimentError("saits requires a trained model in the bundle")
        z, params = zscore(coarse)
        out = impute_saits(bundle.saits_model, z)
        denorm = params.invert(out.sequence).samples.copy()
        # reinstate observed values bit-exactly after the affine round trip
        obs = ~coarse.missing
        denorm[obs] = coarse.samples[obs]
        return ImputerOutput(coarse.with_samples(denorm), out.filled)
    raise ExperimentError(f"unknown method {method!r}")


def run_pipeline(
    seq_corrupted: GazeSequence,
    method: str,
    models: ModelBundle,
    cfg: ExperimentConfig,
) -> GazeSequence:
    """Decimate, impute, interpolate back, optionally refine.

    In the 'downsampled' scenario the coarse imputed sequence is returned
    for coarse-grid scoring; otherwise the result is at full resolution.
    """
    coarse = downsample(seq_corrupted, models.factor)
    imputed = _impute_coarse(coarse, method, models)
    if cfg.scenario == "downsampled":
        return imputed.sequence
    fine = upsample(imputed.sequence, len(seq_corrupted), models.factor)
    if cfg.scenario == "refined":
        if models.rae_model is None:
            raise ExperimentError("refined scenario requires a trained refiner")
        fine = refine(models.rae_model, fine)
    return fine


# ---------------------------------------------------------------------------
# Experiment assembly
# ---------------------------------------------------------------------------


def _seq_id(seq: GazeSequence) -> int:
    name = seq.meta.filename() if seq.meta else "anonymous"
    return zlib.crc32(name.encode())


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _prepare_corpus(cfg: ExperimentConfig) -> Dataset:
    if cfg.corpus_path is not None:
        from .core import load_dataset

        ds = load_dataset(cfg.corpus_path)
    else:
        ds = make_corpus(
            cfg.n_participants,
            tasks=list(cfg.tasks),
            seed=cfg.seed,
            duration_s=cfg.duration_s,
            rate_hz=cfg.rate_hz,
        )
    if not ds.split:
        n = len(ds.participants())
        n_test = cfg.test_participants if cfg.test_participants is not None else max(1, n // 5)
        n_train = cfg.train_participants if cfg.train_participants is not None else n - n_test
        ds = split_by_participant(ds, n_train, n_test, cfg.seed)
    return ds


def _load_stats(cfg: ExperimentConfig) -> BlinkStats:
    if cfg.stats_path is not None:
        return BlinkStats.load(cfg.stats_path)
    return blinks_mod.reference_stats(cfg.seed)


def make_folds(n: int, n_folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic validation folds over range(n).

    With n_folds >= 2 this is a disjoint k-way partition. n_folds == 1 means
    no cross-validation: a single 20% validation slice is returned.
    """
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D])).permutation(n)
    if n_folds == 1:
        return [perm[: max(1, n // 5)]]
    return [perm[k::n_folds] for k in range(n_folds)]


def _coarse_zscored(seqs: list[GazeSequence], factor: int) -> list[GazeSequence]:
    out = []
    for s in seqs:
        z, _ = zscore(downsample(s, factor))
        out.append(z)
    return out


def train_fold_bundles(
    train_seqs: list[GazeSequence], cfg: ExperimentConfig, stats: BlinkStats
) -> list[ModelBundle]:
    """One bundle per fold: fold-validated models plus shared classic configs."""
    factor = cfg.factor
    coarse_z = _coarse_zscored(train_seqs, factor)
    coarse_stats = stats.scaled(factor)
    library = Dataset(
        tuple(downsample(s, factor) for s in train_seqs if s.is_complete())
    )
    complete_full = [s for s in train_seqs if s.is_complete()]

    seq_len = len(coarse_z[0]) if coarse_z else 0
    saits_cfg = SaitsConfig(**{"seq_len": seq_len, **cfg.saits_overrides})
    rae_cfg = RaeConfig(**cfg.rae_overrides)

    needs_saits = "saits" in cfg.methods
    needs_rae = cfg.scenario == "refined"
    folds = make_folds(len(train_seqs), cfg.folds, cfg.seed)
    bundles = []
    for k, val_idx in enumerate(folds):
        val_set = set(val_idx.tolist())
        saits_model = None
        if needs_saits:
            # the fold axis is sequences, not participants; tag each
            # sequence with a synthetic id so the split can address it
            fold_ds = _fold_dataset(coarse_z, val_set)
            saits_model = train_saits(
                fold_ds, saits_cfg, _derive_seed(cfg.seed, 10, k), mask_stats=coarse_stats
            )
        rae_model = None
        if needs_rae:
            rae_model = train_rae(
                complete_full, rae_cfg, _derive_seed(cfg.seed, 11, k)
            )
        bundles.append(
            ModelBundle(
                factor=factor,
                saits_model=saits_model,
                rae_model=rae_model,
                library=library,
                ssa_cfg=cfg.ssa,
                knn_cfg=cfg.knn,
            )
        )
    return bundles


def _fold_dataset(seqs: list[GazeSequence], val_set: set[int]) -> Dataset:
    """Dataset whose split assigns fold-validation sequences to 'test'.

    Sequences get synthetic per-index participant ids so the split mapping
    can address them individually regardless of their real participants.
    """
    tagged = []
    split = {}
    for i, s in enumerate(seqs):
        pid = f"fold{i:05d}"
        meta = SequenceMeta(
            pid,
            s.meta.task if s.meta else 1,
            s.meta.axis if s.meta else "x",
            s.meta.eye if s.meta else "L",
        )
        tagged.append(GazeSequence(s.samples, rate_hz=s.rate_hz, meta=meta))
        split[pid] = "test" if i in val_set else "train"
    return Dataset(tuple(tagged), split)


@dataclass
class ResultsTable:
    """Corpus-averaged metrics, one row per method+scenario suffix."""

    scenario: str
    rows: dict[str, dict[str, float | None]]  # label -> metric -> mean
    fold_rows: dict[str, list[dict[str, float | None]]]  # label -> per-fold means
    n_sequences: int = 0
    aggregation: str = "simple mean over sequences, then over folds"

    def to_csv(self) -> str:
        header = "Method," + ",".join(m.upper() for m in METRIC_ORDER)
        lines = [header]
        for label, row in self.rows.items():
            cells = [label]
            for m in METRIC_ORDER:
                v = row.get(m)
                cells.append("" if v is None else repr(float(v)))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def _mean_reports(reports: list[MetricsReport]) -> dict[str, float | None]:
    out: dict[str, float | None] = {}
    for m in METRIC_ORDER:
        vals = [getattr(r, m) for r in reports if getattr(r, m) is not None]
        out[m] = float(np.mean(vals)) if vals else None
    return out


def _corrupt(seq: GazeSequence, cfg: ExperimentConfig, stats: BlinkStats):
    if cfg.large_gap:
        return large_gap_inject(seq)
    return inject_blinks(seq, stats, _derive_seed(cfg.seed, 3, _seq_id(seq)))


def run_experiment(cfg: ExperimentConfig) -> ResultsTable:
    """Corrupt the test split, run every method per fold, aggregate metrics.

    Per-sequence reports and the aggregate CSV land in cfg.out_dir. A method
    failing on more than max_failure_rate of the scored sequences fails the
    whole run.
    """
    out_dir = Path(cfg.out_dir)
    (out_dir / "reports").mkdir(parents=True, exist_ok=True)

    ds = _prepare_corpus(cfg)
    stats = _load_stats(cfg)
    train_seqs = ds.subset("train")
    test_seqs = ds.subset("test")
    if not train_seqs or not test_seqs:
        raise ExperimentError("corpus split produced an empty train or test set")
    bundles = train_fold_bundles(train_seqs, cfg, stats)

    # corrupt test sequences once; imputers never see the originals
    cases = []
    for seq in test_seqs:
        corrupted, mask = _corrupt(seq, cfg, stats)
        if mask.n_imp == 0:
            continue
        if cfg.scenario == "downsampled":
            coarse_mask = MissingMask.from_bool(downsample(corrupted, cfg.factor).missing)
            if coarse_mask.n_imp == 0:
                continue  # every gap vanished under the majority rule
        cases.append((seq, corrupted, mask))
    if not cases:
        raise ExperimentError("no test sequence received any missing data")

    coarse_rate = cfg.rate_hz / cfg.factor
    per_method_fold: dict[str, list[list[MetricsReport]]] = {
        m: [[] for _ in bundles] for m in cfg.methods
    }
    failures: dict[str, list[str]] = {m: [] for m in cfg.methods}
    attempts: dict[str, int] = {m: 0 for m in cfg.methods}
    artifacts: list[dict] = []

    for case_idx, (original, corrupted, mask) in enumerate(cases):
        keep_artifact = case_idx < cfg.n_plot_sequences
        art = {"original": original, "corrupted": corrupted, "imputed": {}}
        if cfg.scenario == "downsampled":
            truth_coarse = downsample(original, cfg.factor)
            coarse_mask = MissingMask.from_bool(downsample(corrupted, cfg.factor).missing)
        for method in cfg.methods:
            fold_range = range(len(bundles)) if method == "saits" else range(1)
            for k in fold_range:
                attempts[method] += 1
                try:
                    result = run_pipeline(corrupted, method, bundles[k], cfg)
                    if cfg.scenario == "downsampled":
                        report = evaluate(truth_coarse, result, coarse_mask, coarse_rate)
                    else:
                        report = evaluate(original, result, mask, cfg.rate_hz)
                except (ValueError, ExperimentError) as e:
                    failures[method].append(f"{_case_name(original)} fold{k}: {e}")
                    continue
                # classic methods are fold-invariant; replicate their report
                for kk in range(len(bundles)) if method != "saits" else [k]:
                    per_method_fold[method][kk].append(report)
                _save_report(out_dir, original, method, k, report)
                if keep_artifact and k == 0:
                    art["imputed"][method] = result
        if keep_artifact:
            artifacts.append(art)

    n_scored = len(cases)
    for method, errs in failures.items():
        if len(errs) > cfg.max_failure_rate * attempts[method]:
            raise ExperimentError(
                f"{method} failed on {len(errs)} of {attempts[method]} attempts: "
                + "; ".join(errs[:5])
            )
    if any(failures.values()):
        (out_dir / "errors.json").write_text(json.dumps(failures, indent=2) + "\n")

    suffix = SUFFIX[cfg.scenario]
    rows = {}
    fold_rows = {}
    for method in cfg.methods:
        label = METHOD_LABEL[method] + suffix
        fold_means = [_mean_reports(r) for r in per_method_fold[method] if r]
        if not fold_means:
            raise ExperimentError(f"method {method} produced no reports")
        fold_rows[label] = fold_means
        rows[label] = {
            m: (
                float(np.mean([fm[m] for fm in fold_means if fm[m] is not None]))
                if any(fm[m] is not None for fm in fold_means)
                else None
            )
            for m in METRIC_ORDER
        }
    table = ResultsTable(cfg.scenario, rows, fold_rows, n_sequences=n_scored)
    table.save(out_dir / "table.csv")
    _save_fold_csv(table, out_dir / "table_folds.csv")
    _save_artifacts(out_dir, artifacts, cfg)
    return table


def _case_name(seq: GazeSequence) -> str:
    return seq.meta.filename()[:-4] if seq.meta else "anonymous"


def _save_report(out_dir: Path, seq: GazeSequence, method: str, fold: int,
                 report: MetricsReport) -> None:
    name = f"{_case_name(seq)}__{method}__fold{fold}.json"
    report.save(out_dir / "reports" / name)


def _save_fold_csv(table: ResultsTable, path: Path) -> None:
    lines = ["Method,Fold," + ",".join(m.upper() for m in METRIC_ORDER)]
    for label, folds in table.fold_rows.items():
        for k, fm in enumerate(folds):
            cells = [label, str(k)]
            cells += ["" if fm[m] is None else repr(float(fm[m])) for m in METRIC_ORDER]
            lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def _save_artifacts(out_dir: Path, artifacts: list[dict], cfg: ExperimentConfig) -> None:
    art_dir = out_dir / "artifacts"
    art_dir.mkdir(exist_ok=True)
    for art in artifacts:
        stem = _case_name(art["original"])
        save_sequence(art["original"], art_dir / f"{stem}__original.csv")
        save_sequence(art["corrupted"], art_dir / f"{stem}__corrupted.csv")
        for method, seq in art["imputed"].items():
            save_sequence(seq, art_dir / f"{stem}__{method}.csv")


# ---------------------------------------------------------------------------
# Plots
# ---------------------------------------------------------------------------


def emit_plots(
    results_dir: str | Path,
    rae_model: RaeModel | None = None,
    factor: int = 30,
    window: int = 1024,
    overlap: float = 0.75,
) -> list[Path]:
    """Overlay and spectrogram images from a completed experiment directory.

    Overlays show the original, each method's output and shaded gap regions.
    Spectrograms compare original / plain-upsampled / refined versions of
    the same sequence when a refiner is available.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from scipy.signal import spectrogram as sp_spectrogram

    from .core import load_sequence

    art_dir = Path(results_dir) / "artifacts"
    if not art_dir.is_dir():
        raise FileNotFoundError(f"no artifacts directory under {results_dir}")
    originals = sorted(art_dir.glob("*__original.csv"))
    if not originals:
        raise FileNotFoundError(f"no saved artifacts in {art_dir}")

    made: list[Path] = []
    for orig_path in originals:
        stem = orig_path.name[: -len("__original.csv")]
        original = load_sequence(orig_path)
        corrupted = load_sequence(art_dir / f"{stem}__corrupted.csv")
        t_ms = np.arange(len(original)) * 1000.0 / original.rate_hz

        fig, ax = plt.subplots(figsize=(10, 4))
        ax.plot(t_ms, original.samples, color="black", lw=0.8, label="original")
        for imp_path in sorted(art_dir.glob(f"{stem}__*.csv")):
            method = imp_path.name[len(stem) + 2 : -4]
            if method in ("original", "corrupted"):
                continue
            imputed = load_sequence(imp_path)
            scale = len(original) / len(imputed)
            t_imp = np.arange(len(imputed)) * scale * 1000.0 / original.rate_hz
            ax.plot(t_imp, imputed.samples, lw=0.8, alpha=0.8, label=method)
        for run_start, run_end in MissingMask.from_bool(corrupted.missing).runs():
            ax.axvspan(t_ms[run_start], t_ms[min(run_end, len(t_ms) - 1)],
                       color="red", alpha=0.15, lw=0)
        ax.set_xlabel("time (ms)")
        ax.set_ylabel("position (deg)")
        ax.legend(loc="upper right", fontsize=8)
        out = Path(results_dir) / f"overlay_{stem}.png"
        fig.savefig(out, dpi=110)
        plt.close(fig)
        made.append(out)

        panels = [("original", original.samples)]
        coarse = downsample(original, factor)
        if coarse.is_complete():
            up = upsample(coarse, len(original), factor)
            panels.append(("upsampled", up.samples))
            if rae_model is not None:
                panels.append(("refined", refine(rae_model, up).samples))
        nper = min(window, len(original) // 4)
        fig, axes = plt.subplots(len(panels), 1, figsize=(10, 3 * len(panels)),
                                 squeeze=False)
        for ax_row, (label, data) in zip(axes[:, 0], panels):
            f, t, sxx = sp_spectrogram(
                data, fs=original.rate_hz, nperseg=nper,
                noverlap=int(nper * overlap),
            )
            keep = f <= 20.0
            ax_row.pcolormesh(t, f[keep], 10 * np.log10(sxx[keep] + 1e-12),
                              shading="auto")
            ax_row.set_ylabel("Hz")
            ax_row.set_title(label, fontsize=9)
        axes[-1, 0].set_xlabel("time (s)")
        out = Path(results_dir) / f"spectrogram_{stem}.png"
        fig.savefig(out, dpi=110)
        plt.close(fig)
        made.append(out)
    return made
