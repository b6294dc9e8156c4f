"""Convolutional refinement of upsampled sequences.

A 1-D encoder/decoder with additive skip connections between mirrored
stages, trained to undo the decimate-then-interpolate degradation on
complete sequences. Applied after upsampling, it restores fine temporal
detail lost to the rate reduction; by default the whole sequence is
replaced by the refined version, since the degradation affects every
sample, not only the gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .core import Dataset, GazeSequence, MissingMask, zscore
from .resample import downsample, upsample
from .saits import TrainingDiverged, load_checkpoint, save_checkpoint

__all__ = [
    "RaeLayerSpec",
    "RaeConfig",
    "RaeModel",
    "rae_forward",
    "train_rae",
    "refine",
    "save_rae",
    "load_rae",
]


@dataclass(frozen=True)
class RaeLayerSpec:
    filters: int
    kernel: int
    stride: int
    padding: int

    def __post_init__(self):
        if self.filters < 1 or self.stride < 1 or self.kernel < 1:
            raise ValueError("filters, kernel and stride must be >= 1")
        if self.kernel % 2 == 0 or self.padding != self.kernel // 2:
            raise ValueError(
                "kernel must be odd with padding = kernel // 2 so encoder and "
                "decoder stages mirror to the exact input length"
            )


def _default_layers() -> tuple[RaeLayerSpec, ...]:
    return tuple(RaeLayerSpec(f, 9, 2, 4) for f in (16, 32, 64, 128))


@dataclass(frozen=True)
class RaeConfig:
    layers: tuple[RaeLayerSpec, ...] = field(default_factory=_default_layers)
    lr: float = 1e-4
    weight_decay: float = 1e-5
    scheduler_factor: float = 0.5
    scheduler_patience: int = 20
    early_stop_patience: int = 50
    max_epochs: int = 100
    folds: int = 10
    batch: int = 8
    val_fraction: float = 0.2
    degradation_factor: int = 30
    expected_len: int | None = None  # None accepts any input length

    def __post_init__(self):
        if not self.layers:
            raise ValueError("need at least one encoder stage")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be >= 0")
        if not (0 < self.val_fraction < 1):
            raise ValueError("val_fraction must be in (0, 1)")

    @property
    def stride_product(self) -> int:
        out = 1
        for spec in self.layers:
            out *= spec.stride
        return out


class RaeModel(nn.Module):
    """Mirrored conv encoder/decoder with additive skip connections.

    Inputs of any length are replicate-padded to a stride-product multiple
    and cropped back, so output length always equals input length.
    """

    def __init__(self, cfg: RaeConfig):
        super().__init__()
        self.cfg = cfg
        enc = []
        ch = 1
        for spec in cfg.layers:
            enc.append(
                nn.Sequential(
                    nn.Conv1d(ch, spec.filters, spec.kernel, spec.stride, spec.padding),
                    nn.BatchNorm1d(spec.filters),
                    nn.ReLU(),
                )
            )
            ch = spec.filters
        self.encoder = nn.ModuleList(enc)

        dec = []
        specs = list(cfg.layers)
        for i in reversed(range(len(specs))):
            spec = specs[i]
            out_ch = specs[i - 1].filters if i > 0 else 1
            tconv = nn.ConvTranspose1d(
                spec.filters, out_ch, spec.kernel, spec.stride, spec.padding,
                output_padding=spec.stride - 1,
            )
            if i > 0:
                dec.append(nn.Sequential(tconv, nn.BatchNorm1d(out_ch), nn.ReLU()))
            else:
                # linear output stage, zero-initialized so the untrained
                # model is the identity and training learns a correction
                nn.init.zeros_(tconv.weight)
                nn.init.zeros_(tconv.bias)
                dec.append(tconv)
        self.decoder = nn.ModuleList(dec)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 1, L) -> (B, 1, L)."""
        n = x.shape[-1]
        s = self.cfg.stride_product
        pad = (-n) % s
        if pad:
            x = F.pad(x, (0, pad), mode="replicate")
        skips = []
        h = x
        for stage in self.encoder:
            h = stage(h)
            skips.append(h)
        for i, stage in enumerate(self.decoder):
            h = stage(h)
            j = len(self.encoder) - 2 - i
            if j >= 0:
                h = h + skips[j]
        # outermost skip: the decoder output corrects the input signal
        return (h + x)[..., :n]


def rae_forward(model: RaeModel, seq: GazeSequence) -> GazeSequence:
    """Plain network forward pass on a complete sequence (inference mode)."""
    if not seq.is_complete():
        raise ValueError("refinement input must be complete")
    exp = model.cfg.expected_len
    if exp is not None and len(seq) != exp:
        raise ValueError(f"expected length {exp}, got {len(seq)}")
    model.eval()
    with torch.no_grad():
        x = torch.from_numpy(seq.samples.astype(np.float32)).view(1, 1, -1)
        y = model(x).view(-1).numpy().astype(np.float64)
    return seq.with_samples(y)


def _degrade(z: GazeSequence, factor: int) -> GazeSequence:
    return upsample(downsample(z, factor), len(z), factor)


def train_rae(
    train_seqs: list[GazeSequence], cfg: RaeConfig, seed: int
) -> RaeModel:
    """Fit the refiner on complete sequences against their degraded versions.

    Each sequence is z-scored, decimated and re-interpolated; the network
    learns the degraded -> original map under MSE. An 80/20 train/validation
    split is drawn deterministically from the seed; learning-rate halving on
    plateau and early stopping follow the config. Parameters with the lowest
    validation loss are retained.
    """
    for i, s in enumerate(train_seqs):
        if not s.is_complete():
            raise ValueError(f"training sequence {i} contains missing values")
    if len(train_seqs) < 2:
        raise ValueError("need at least 2 training sequences")
    lengths = {len(s) for s in train_seqs}
    if len(lengths) != 1:
        raise ValueError(f"training sequences must share one length, got {sorted(lengths)}")
    (length,) = lengths
    if cfg.expected_len is not None and length != cfg.expected_len:
        raise ValueError(f"expected length {cfg.expected_len}, got {length}")

    inputs = np.empty((len(train_seqs), 1, length), dtype=np.float32)
    targets = np.empty_like(inputs)
    for i, s in enumerate(train_seqs):
        z, _ = zscore(s)
        targets[i, 0] = z.samples
        inputs[i, 0] = _degrade(z, cfg.degradation_factor).samples

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAE]))
    perm = rng.permutation(len(train_seqs))
    n_val = max(1, round(cfg.val_fraction * len(train_seqs)))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    if tr_idx.size == 0:
        raise ValueError("validation fraction leaves no training sequences")

    torch.manual_seed(seed)
    model = RaeModel(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, factor=cfg.scheduler_factor, patience=cfg.scheduler_patience
    )
    loss_fn = nn.MSELoss()
    x_tr = torch.from_numpy(inputs[tr_idx])
    y_tr = torch.from_numpy(targets[tr_idx])
    x_va = torch.from_numpy(inputs[val_idx])
    y_va = torch.from_numpy(targets[val_idx])

    history: dict[str, list[float]] = {"train_loss": [], "val_loss": []}
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    best_val = math.inf
    stale = 0
    n = tr_idx.size
    for epoch in range(cfg.max_epochs):
        model.train()
        order = np.random.default_rng(
            np.random.SeedSequence([seed, 1, epoch])
        ).permutation(n)
        losses = []
        for b0 in range(0, n, cfg.batch):
            idx = order[b0 : b0 + cfg.batch]
            out = model(x_tr[idx])
            loss = loss_fn(out, y_tr[idx])
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, float(loss))
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss))
        history["train_loss"].append(float(np.mean(losses)))

        model.eval()
        with torch.no_grad():
            val_losses = [
                float(loss_fn(model(x_va[b0 : b0 + cfg.batch]), y_va[b0 : b0 + cfg.batch]))
                for b0 in range(0, val_idx.size, cfg.batch)
            ]
        val_loss = float(np.mean(val_losses))
        if not math.isfinite(val_loss):
            raise TrainingDiverged(epoch, val_loss)
        history["val_loss"].append(val_loss)
        sched.step(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break

    model.load_state_dict(best_state)
    model.eval()
    model.training_history = history
    return model


def refine(
    model: RaeModel,
    imputed_upsampled: GazeSequence,
    mask: MissingMask | None = None,
    splice_gaps: bool = False,
) -> GazeSequence:
    """Run the refiner on a complete full-resolution sequence.

    The input is z-scored, refined and denormalized. By default the whole
    sequence is replaced (the refiner corrects decimation loss everywhere);
    with ``splice_gaps`` only mask positions take refined values.
    """
    z, params = zscore(imputed_upsampled)
    refined = params.invert(rae_forward(model, z))
    if splice_gaps:
        if mask is None:
            raise ValueError("splice_gaps requires the imputation mask")
        out = imputed_upsampled.samples.copy()
        out[mask.indices] = refined.samples[mask.indices]
        return imputed_upsampled.with_samples(out)
    return refined


def save_rae(model: RaeModel, path) -> None:
    save_checkpoint(model, path, "rae", model.cfg)


def load_rae(path) -> RaeModel:
    blob = load_checkpoint(path, "rae")
    cfg_dict = dict(blob["config"])
    cfg_dict["layers"] = tuple(RaeLayerSpec(**d) for d in cfg_dict["layers"])
    cfg = RaeConfig(**cfg_dict)
    model = RaeModel(cfg)
    model.load_state_dict(blob["state"])
    model.eval()
    return model
