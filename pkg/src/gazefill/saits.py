"""Self-attention imputer: diagonally masked attention blocks plus a
learned weighted combination of their estimates.

Each block re-embeds the (value, missingness-indicator) pair, runs
multi-head attention in which no time step may attend to itself, and
projects back to signal space. Between blocks, observed values are
reinstated so later blocks refine only the missing positions' estimates.
The combination block fuses the first and last estimates with per-position
sigmoid weights computed from the final attention map and the mask.

Training minimizes masked MSE: a reconstruction term on observed positions
that were not artificially hidden, plus an imputation term on artificially
hidden ones, averaged over the per-block estimates and the final fusion.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .blinks import BlinkStats
from .classic import ImputerOutput
from .core import Dataset, GazeSequence, MissingMask

__all__ = [
    "SaitsConfig",
    "MaskedBatch",
    "SaitsModel",
    "DmsaBlock",
    "WeightedCombination",
    "dmsa_attention",
    "saits_loss",
    "train_saits",
    "impute_saits",
    "save_checkpoint",
    "load_checkpoint",
    "TrainingDiverged",
]


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, value: float, what: str = "loss"):
        super().__init__(f"non-finite {what} ({value}) at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class SaitsConfig:
    seq_len: int = 500
    d_model: int = 256
    n_heads: int = 4
    n_dmsa_blocks: int = 2
    d_ffn: int | None = None  # None: 4 * d_model
    dropout: float = 0.2
    lr: float = 4e-4
    epochs: int = 500
    batch: int = 32
    artificial_mask_rate: float = 0.15
    loss_weights: tuple[float, float] = (1.0, 1.0)
    # optimizer shaping for short desk-scale runs; defaults leave the
    # constant-learning-rate Adam setup untouched
    warmup_frac: float = 0.0
    cosine_decay: bool = False
    grad_clip: float | None = None

    def __post_init__(self):
        if self.seq_len < 2:
            raise ValueError("seq_len must be >= 2")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if not (0 <= self.dropout < 1):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.n_dmsa_blocks < 2:
            raise ValueError("need at least 2 attention blocks")
        if not (0 <= self.artificial_mask_rate < 1):
            raise ValueError("artificial_mask_rate must be in [0, 1)")

    @property
    def ffn_width(self) -> int:
        return self.d_ffn if self.d_ffn is not None else 4 * self.d_model


def desk_scale_config(seq_len: int, epochs: int = 50, **overrides) -> SaitsConfig:
    """Small configuration for CPU-scale runs; paper-scale is the default ctor."""
    kwargs = dict(
        seq_len=seq_len, d_model=32, n_heads=2, d_ffn=128, dropout=0.1,
        lr=3e-3, epochs=epochs, batch=8,
        warmup_frac=0.05, cosine_decay=True, grad_clip=1.0,
    )
    kwargs.update(overrides)
    return SaitsConfig(**kwargs)


@dataclass
class MaskedBatch:
    """Training triple: values, availability mask, artificially hidden subset.

    ``values`` holds ground truth wherever ``observed_mask`` is 1 and zeros
    elsewhere. ``artificial_mask`` flags observed positions hidden from the
    model input; it must be a subset of ``observed_mask``.
    """

    values: torch.Tensor  # (B, T)
    observed_mask: torch.Tensor  # (B, T), 1 = ground truth available
    artificial_mask: torch.Tensor  # (B, T), 1 = hidden from the input

    def __post_init__(self):
        if not (self.values.shape == self.observed_mask.shape == self.artificial_mask.shape):
            raise ValueError("values and masks must share one shape")
        if bool((self.artificial_mask * (1 - self.observed_mask)).any()):
            raise ValueError("artificial_mask must be a subset of observed_mask")
        self.values = self.values * self.observed_mask

    @property
    def input_mask(self) -> torch.Tensor:
        """What the network may look at: observed and not hidden."""
        return self.observed_mask * (1 - self.artificial_mask)


def dmsa_attention(
    queries: torch.Tensor,
    keys: torch.Tensor,
    values: torch.Tensor,
    diag_mask: bool = True,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Scaled dot-product attention; optionally bar each step from itself.

    With the diagonal mask, the logit at (t, t) is -inf before the softmax,
    so weight(t -> t) is exactly zero and each row renormalizes over the
    remaining positions. Returns (output, attention_weights).
    """
    if queries.shape[-1] != keys.shape[-1] or keys.shape[:-1] != values.shape[:-1]:
        raise ValueError(
            f"shape mismatch: q{tuple(queries.shape)} k{tuple(keys.shape)} "
            f"v{tuple(values.shape)}"
        )
    scale = 1.0 / math.sqrt(queries.shape[-1])
    logits = torch.matmul(queries, keys.transpose(-2, -1)) * scale
    if diag_mask:
        t = logits.shape[-1]
        eye = torch.eye(t, dtype=torch.bool, device=logits.device)
        logits = logits.masked_fill(eye, float("-inf"))
    attn = torch.softmax(logits, dim=-1)
    return torch.matmul(attn, values), attn


class DmsaBlock(nn.Module):
    """One attention block: MHA -> add&norm -> FFN -> add&norm -> projection."""

    def __init__(self, cfg: SaitsConfig):
        super().__init__()
        d = cfg.d_model
        self.n_heads = cfg.n_heads
        self.d_head = d // cfg.n_heads
        self.w_q = nn.Linear(d, d)
        self.w_k = nn.Linear(d, d)
        self.w_v = nn.Linear(d, d)
        self.w_out = nn.Linear(d, d)
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(
            nn.Linear(d, cfg.ffn_width), nn.ReLU(), nn.Linear(cfg.ffn_width, d)
        )
        self.dropout = nn.Dropout(cfg.dropout)
        self.project = nn.Linear(d, 1)

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.n_heads, self.d_head).transpose(1, 2)

    def forward(
        self, x: torch.Tensor, diag_mask: bool = True
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, T, d_model) -> (estimate (B, T), attention (B, heads, T, T))."""
        b, t, d = x.shape
        q = self._split_heads(self.w_q(x))
        k = self._split_heads(self.w_k(x))
        v = self._split_heads(self.w_v(x))
        ctx, attn = dmsa_attention(q, k, v, diag_mask=diag_mask)
        ctx = ctx.transpose(1, 2).reshape(b, t, d)
        h = self.norm1(x + self.dropout(self.w_out(ctx)))
        h = self.norm2(h + self.dropout(self.ffn(h)))
        if not torch.isfinite(h).all():
            raise TrainingDiverged(-1, float("nan"), what="activations")
        return self.project(h).squeeze(-1), attn


class WeightedCombination(nn.Module):
    """Fuse two estimates with mask-aware convex per-position weights."""

    def __init__(self, seq_len: int):
        super().__init__()
        self.linear = nn.Linear(seq_len + 1, 1)

    def forward(
        self,
        x1_hat: torch.Tensor,
        x2_hat: torch.Tensor,
        attn: torch.Tensor,
        miss_mask: torch.Tensor,
        eta: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if x1_hat.shape != x2_hat.shape or x1_hat.shape != miss_mask.shape:
            raise ValueError("estimate/mask shapes must match")
        if eta is None:
            rows = attn.mean(dim=1)  # average heads -> (B, T, T)
            feats = torch.cat([rows, miss_mask.unsqueeze(-1)], dim=-1)
            eta = torch.sigmoid(self.linear(feats)).squeeze(-1)
        return (1.0 - eta) * x1_hat + eta * x2_hat


def _sinusoidal_encoding(seq_len: int, d_model: int) -> torch.Tensor:
    pos = torch.arange(seq_len, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, d_model, 2, dtype=torch.float32)
        * (-math.log(10000.0) / d_model)
    )
    pe = torch.zeros(seq_len, d_model)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div[: (d_model + 1) // 2])
    return pe


class SaitsModel(nn.Module):
    """Chained attention blocks plus the weighted-combination fusion."""

    def __init__(self, cfg: SaitsConfig):
        super().__init__()
        self.cfg = cfg
        self.embeddings = nn.ModuleList(
            nn.Linear(2, cfg.d_model) for _ in range(cfg.n_dmsa_blocks)
        )
        self.blocks = nn.ModuleList(
            DmsaBlock(cfg) for _ in range(cfg.n_dmsa_blocks)
        )
        self.combine = WeightedCombination(cfg.seq_len)
        self.dropout = nn.Dropout(cfg.dropout)
        self.register_buffer(
            "pos_enc", _sinusoidal_encoding(cfg.seq_len, cfg.d_model)
        )

    def forward(
        self, values: torch.Tensor, input_mask: torch.Tensor
    ) -> dict[str, torch.Tensor | list[torch.Tensor]]:
        """values: (B, T) zero-filled at unavailable positions; mask: 1 = visible."""
        if values.shape[-1] != self.cfg.seq_len:
            raise ValueError(
                f"expected sequences of length {self.cfg.seq_len}, got {values.shape[-1]}"
            )
        x = values * input_mask
        cur = x
        estimates: list[torch.Tensor] = []
        attentions: list[torch.Tensor] = []
        for emb, block in zip(self.embeddings, self.blocks):
            inp = torch.stack([cur, input_mask], dim=-1)
            h = self.dropout(emb(inp) + self.pos_enc.to(inp.dtype))
            x_hat, attn = block(h, diag_mask=True)
            estimates.append(x_hat)
            attentions.append(attn)
            cur = input_mask * x + (1.0 - input_mask) * x_hat
        x_final = self.combine(
            estimates[0], estimates[-1], attentions[-1], 1.0 - input_mask
        )
        return {
            "estimates": estimates + [x_final],
            "final": x_final,
            "attention": attentions,
        }


def saits_loss(
    batch: MaskedBatch,
    estimates: list[torch.Tensor],
    loss_weights: tuple[float, float] = (1.0, 1.0),
) -> torch.Tensor:
    """Reconstruction MSE + artificially-masked imputation MSE.

    Each term is averaged over its own position count and over the supplied
    estimates. A batch with no artificially masked positions contributes a
    zero imputation term.
    """
    recon_mask = batch.observed_mask * (1 - batch.artificial_mask)
    imp_mask = batch.artificial_mask
    n_recon = recon_mask.sum()
    n_imp = imp_mask.sum()
    recon = batch.values.new_zeros(())
    imp = batch.values.new_zeros(())
    for est in estimates:
        sq = (est - batch.values) ** 2
        if n_recon > 0:
            recon = recon + (sq * recon_mask).sum() / n_recon
        if n_imp > 0:
            imp = imp + (sq * imp_mask).sum() / n_imp
    k = len(estimates)
    return (loss_weights[0] * recon + loss_weights[1] * imp) / k


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def draw_artificial_mask(
    observed: np.ndarray, stats: BlinkStats | None, rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Blink-shaped (or uniform, if no stats) subset of observed positions."""
    n = observed.size
    art = np.zeros(n, dtype=bool)
    if stats is not None and not stats.is_empty():
        n_blinks = int(rng.choice(stats.counts))
        if n_blinks > 0 and stats.durations.size and stats.positions.size:
            durs = rng.choice(stats.durations, size=n_blinks)
            starts = rng.choice(stats.positions, size=n_blinks)
            for dur, start in zip(durs, starts):
                start = int(min(max(start, 1), n - 1))
                art[start : min(start + int(dur), n)] = True
    else:
        art = rng.random(n) < rate
    return art & observed


def _to_tensors(seqs: list[GazeSequence], seq_len: int) -> tuple[torch.Tensor, torch.Tensor]:
    vals = np.zeros((len(seqs), seq_len), dtype=np.float32)
    obs = np.zeros((len(seqs), seq_len), dtype=np.float32)
    for i, s in enumerate(seqs):
        if len(s) != seq_len:
            raise ValueError(f"sequence {i} has length {len(s)}, expected {seq_len}")
        observed = ~s.missing
        vals[i, observed] = s.samples[observed]
        obs[i] = observed
    return torch.from_numpy(vals), torch.from_numpy(obs)


def _epoch_batch(
    values: torch.Tensor,
    observed: torch.Tensor,
    idx: np.ndarray,
    stats: BlinkStats | None,
    rate: float,
    seed_key: tuple[int, ...],
) -> MaskedBatch:
    art = np.zeros((idx.size, values.shape[1]), dtype=np.float32)
    for row, i in enumerate(idx):
        rng = _rng(*seed_key, int(i))
        art[row] = draw_artificial_mask(
            observed[i].numpy().astype(bool), stats, rate, rng
        )
    return MaskedBatch(values[idx], observed[idx], torch.from_numpy(art))


def train_saits(
    ds: Dataset,
    cfg: SaitsConfig,
    seed: int,
    mask_stats: BlinkStats | None = None,
) -> SaitsModel:
    """Fit one model on the dataset's train split, validating on its test split.

    Sequences must already be at cfg.seq_len and z-scored. Artificial masks
    are redrawn every epoch from the empirical blink sampler (uniform dropout
    when no stats are given); validation masks are fixed. The parameters with
    the lowest validation loss are retained. Deterministic for a fixed seed;
    any k-fold loop lives in the caller.
    """
    train_seqs = ds.subset("train")
    val_seqs = ds.subset("test")
    if not train_seqs:
        raise ValueError("dataset has no train split")
    torch.manual_seed(seed)
    model = SaitsModel(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    tr_vals, tr_obs = _to_tensors(train_seqs, cfg.seq_len)
    history: dict[str, list[float]] = {"train_loss": [], "val_loss": []}
    val_batch = None
    if val_seqs:
        va_vals, va_obs = _to_tensors(val_seqs, cfg.seq_len)
        val_batch = _epoch_batch(
            va_vals, va_obs, np.arange(len(val_seqs)),
            mask_stats, cfg.artificial_mask_rate, (seed, 0x5EED),
        )

    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    best_val = math.inf
    n = len(train_seqs)
    steps_per_epoch = math.ceil(n / cfg.batch)
    total_steps = max(cfg.epochs * steps_per_epoch, 1)
    warmup_steps = round(cfg.warmup_frac * total_steps)
    step = 0
    for epoch in range(cfg.epochs):
        model.train()
        perm = _rng(seed, 1, epoch).permutation(n)
        epoch_losses = []
        for b0 in range(0, n, cfg.batch):
            if warmup_steps and step < warmup_steps:
                lr = cfg.lr * (step + 1) / warmup_steps
            elif cfg.cosine_decay:
                frac = (step - warmup_steps) / max(total_steps - warmup_steps, 1)
                lr = cfg.lr * (0.05 + 0.95 * 0.5 * (1 + math.cos(math.pi * frac)))
            else:
                lr = cfg.lr
            for group in opt.param_groups:
                group["lr"] = lr
            idx = perm[b0 : b0 + cfg.batch]
            batch = _epoch_batch(
                tr_vals, tr_obs, idx, mask_stats, cfg.artificial_mask_rate,
                (seed, 2, epoch),
            )
            out = model(batch.values * batch.input_mask, batch.input_mask)
            loss = saits_loss(batch, out["estimates"], cfg.loss_weights)
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, float(loss))
            opt.zero_grad()
            loss.backward()
            if cfg.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            step += 1
            epoch_losses.append(float(loss.detach()))
        history["train_loss"].append(float(np.mean(epoch_losses)))

        if val_batch is not None:
            model.eval()
            with torch.no_grad():
                out = model(
                    val_batch.values * val_batch.input_mask, val_batch.input_mask
                )
                val_loss = float(
                    saits_loss(val_batch, out["estimates"], cfg.loss_weights)
                )
            if not math.isfinite(val_loss):
                raise TrainingDiverged(epoch, val_loss)
            history["val_loss"].append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_state = {k: v.clone() for k, v in model.state_dict().items()}

    if val_batch is not None:
        model.load_state_dict(best_state)
    model.eval()
    model.training_history = history
    return model


def impute_saits(model: SaitsModel, seq: GazeSequence) -> ImputerOutput:
    """Fill a z-scored coarse sequence's gaps with the model's final estimate.

    Observed samples pass through bit-exact; the caller owns denormalization.
    """
    if len(seq) != model.cfg.seq_len:
        raise ValueError(
            f"sequence length {len(seq)} does not match model seq_len {model.cfg.seq_len}"
        )
    observed = ~seq.missing
    vals = np.where(observed, seq.samples, 0.0).astype(np.float32)
    obs_t = torch.from_numpy(observed.astype(np.float32)).unsqueeze(0)
    model.eval()
    with torch.no_grad():
        out = model(torch.from_numpy(vals).unsqueeze(0), obs_t)
    final = out["final"].squeeze(0).numpy().astype(np.float64)
    filled = seq.samples.copy()
    filled[~observed] = final[~observed]
    return ImputerOutput(seq.with_samples(filled), MissingMask.from_bool(~observed))


# ---------------------------------------------------------------------------
# Checkpoints (shared format with the refinement model)
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(model: nn.Module, path: str | Path, kind: str, cfg) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "kind": kind,
            "config": asdict(cfg),
            "state": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str | Path, expected_kind: str) -> dict:
    blob = torch.load(path, weights_only=False)
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('format_version')}")
    if blob.get("kind") != expected_kind:
        raise ValueError(f"checkpoint is {blob.get('kind')!r}, expected {expected_kind!r}")
    return blob


def save_saits(model: SaitsModel, path: str | Path) -> None:
    save_checkpoint(model, path, "saits", model.cfg)


def load_saits(path: str | Path) -> SaitsModel:
    blob = load_checkpoint(path, "saits")
    cfg_dict = blob["config"]
    cfg_dict["loss_weights"] = tuple(cfg_dict["loss_weights"])
    cfg = SaitsConfig(**cfg_dict)
    model = SaitsModel(cfg)
    model.load_state_dict(blob["state"])
    model.eval()
    return model
