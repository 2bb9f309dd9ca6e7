"""Deterministic training loop, evaluation, and the sync-x-CTC ablation grid.

Warmup-then-linear-decay learning rate, Adam with gradient clipping, seeded
shuffling and dropout so identical (config, seed) reproduce identical logs
and checkpoints bit-for-bit on one platform.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from . import losses
from .analysis import AttentionDistanceReport, levenshtein, mean_attention_distance
from .corpus import Dataset, Sample, World, load_dataset
from .model import (EncoderConfig, VSRModel, attention_to_numpy, build_model,
                    load_checkpoint, save_checkpoint)


@dataclass
class TrainConfig:
    data_dir: str = ""
    out_dir: str = ""
    mode: str = "word"              # word | sentence
    alpha: float = 0.1              # CTC weight inside the joint task loss
    sync_weight: float = 1.0        # lambda on the audio-token loss
    sync_variant: str = "full"      # full | masked | off
    mask_ratio: float = 0.3
    epochs: int = 40
    batch_size: int = 32
    peak_lr: float = 1e-3
    warmup_epochs: int = 3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1.0
    eval_every: int = 10            # epochs between eval + checkpoint
    use_word_boundary: bool = False
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 128
    dropout: float = 0.1
    decoder_layers: int = 2
    max_frames: int = 512

    def __post_init__(self):
        if self.mode not in ("word", "sentence"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must be in [0, 1]")
        if self.sync_weight < 0.0:
            raise ValueError("sync weight must be >= 0")
        if self.sync_variant not in ("full", "masked", "off"):
            raise ValueError(f"unknown sync_variant {self.sync_variant!r}")
        if self.sync_variant == "masked" and not (0.0 < self.mask_ratio < 1.0):
            raise ValueError("mask_ratio must be in (0, 1) for the masked variant")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def lr_schedule(step: int, warmup_steps: int, total_steps: int, peak: float) -> float:
    """Linear 0 -> peak over warmup, then linear peak -> 0 over the rest."""
    if not (0 <= step <= total_steps):
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps >= total_steps:
        raise ValueError("warmup must end before the schedule does")
    if step <= warmup_steps:
        return peak * step / warmup_steps if warmup_steps > 0 else peak
    return peak * (total_steps - step) / (total_steps - warmup_steps)


def encoder_config_for(world: World, train_cfg: TrainConfig) -> EncoderConfig:
    return EncoderConfig(
        input_dim=world.config.d_v + (1 if train_cfg.use_word_boundary else 0),
        n_classes=len(world.lexicon),
        n_graphemes=world.n_graphemes,
        n_sync_tokens=world.config.n_tokens + 1,  # pad id == n_tokens
        d_model=train_cfg.d_model,
        n_layers=train_cfg.n_layers,
        n_heads=train_cfg.n_heads,
        d_ff=train_cfg.d_ff,
        dropout=train_cfg.dropout,
        max_frames=train_cfg.max_frames,
        decoder_layers=train_cfg.decoder_layers,
    )


def sample_input(sample: Sample, use_word_boundary: bool) -> torch.Tensor:
    """(T, d_v [+1]) float32 input; WB flag appended as one feature column."""
    frames = torch.from_numpy(sample.visual_frames)
    if use_word_boundary:
        wb = torch.from_numpy(sample.word_boundary.astype(np.float32)).unsqueeze(1)
        frames = torch.cat([frames, wb], dim=1)
    return frames


def _collate(samples: Sequence[Sample], use_wb: bool, pad_id: int):
    B = len(samples)
    lengths = [s.num_frames for s in samples]
    T = max(lengths)
    d = samples[0].visual_frames.shape[1] + (1 if use_wb else 0)
    frames = torch.zeros(B, T, d)
    pad_mask = torch.ones(B, T, dtype=torch.bool)
    tokens = torch.full((B, T, 4), pad_id, dtype=torch.long)
    wb = torch.zeros(B, T, dtype=torch.bool)
    for i, s in enumerate(samples):
        t = lengths[i]
        frames[i, :t] = sample_input(s, use_wb)
        pad_mask[i, :t] = False
        tokens[i, :t] = torch.from_numpy(s.token_grid)
        wb[i, :t] = torch.from_numpy(s.word_boundary)
    return frames, pad_mask, tokens, wb, lengths


@dataclass
class MetricsReport:
    mode: str
    n_samples: int
    top1: Optional[float] = None
    per_word_f1: Optional[dict[int, float]] = None
    predictions: Optional[list[int]] = None
    labels: Optional[list[int]] = None
    wer: Optional[float] = None
    perplexity: Optional[float] = None
    mean_lm_nll: Optional[float] = None

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        if d.get("per_word_f1"):
            d["per_word_f1"] = {str(k): v for k, v in d["per_word_f1"].items()}
        return d


def _split_words(graphemes: Sequence[int], space: int) -> list[tuple[int, ...]]:
    words, cur = [], []
    for g in graphemes:
        if g == space:
            words.append(tuple(cur))
            cur = []
        else:
            cur.append(int(g))
    words.append(tuple(cur))
    return words


def evaluate(model: VSRModel, dataset: Dataset, split: str,
             use_word_boundary: bool = False) -> MetricsReport:
    """Deterministic eval: top-1/F1 in word mode, WER + perplexity in sentence mode."""
    if split not in dataset.splits or not dataset.splits[split]:
        raise ValueError(f"split {split!r} is missing or empty")
    samples = dataset.splits[split]
    world = dataset.world
    model.eval()

    if dataset.mode == "word":
        preds, labels = [], []
        with torch.no_grad():
            for s in samples:
                H, _ = model.encode(sample_input(s, use_word_boundary))
                wb = torch.from_numpy(s.word_boundary) if use_word_boundary else None
                logits = model.classify(H, word_boundary=wb)
                preds.append(int(torch.argmax(logits)))
                labels.append(int(s.label[0]))
        top1 = float(np.mean([p == y for p, y in zip(preds, labels)]))
        from .analysis import one_vs_rest_f1
        per_word = {w: one_vs_rest_f1(preds, labels, w)
                    for w in sorted(set(labels))}
        return MetricsReport(mode="word", n_samples=len(samples), top1=top1,
                             per_word_f1=per_word, predictions=preds, labels=labels)

    if world is None:
        raise ValueError("sentence evaluation needs the world (for the space grapheme)")
    space = world.space_grapheme
    bos, eos = model.config.bos_id, model.config.eos_id
    cap = 2 + 6 * (world.config.max_word_len + 1)
    total_edits = 0
    total_ref = 0
    nlls = []
    with torch.no_grad():
        for s in samples:
            frames = sample_input(s, use_word_boundary)
            hyp = model.greedy_transcribe(frames, max_len=cap)
            ref = [int(g) for g in s.label]
            hyp_words = _split_words(hyp, space) if hyp else []
            ref_words = _split_words(ref, space)
            total_edits += levenshtein(hyp_words, ref_words)
            total_ref += len(ref_words)
            H, _ = model.encode(frames)
            dec_logits = model.decode_lm(H, [bos] + ref)
            nlls.append(float(losses.lm_loss(dec_logits, ref + [eos])))
    mean_nll = float(np.mean(nlls))
    return MetricsReport(mode="sentence", n_samples=len(samples),
                         wer=total_edits / total_ref,
                         perplexity=math.exp(mean_nll), mean_lm_nll=mean_nll)


@dataclass
class TrainResult:
    model: VSRModel
    config: TrainConfig
    log: list[dict]
    checkpoint_path: Optional[Path]
    metrics_path: Optional[Path]
    final_eval: Optional[MetricsReport]


def _draw_frame_masks(rng: np.random.Generator, lengths: list[int], T: int,
                      ratio: float) -> torch.Tensor:
    """Per-sample frame masks over valid frames, each with >= 1 masked frame."""
    out = torch.zeros(len(lengths), T, dtype=torch.bool)
    for i, t in enumerate(lengths):
        m = rng.random(t) < ratio
        if not m.any():
            m[int(rng.integers(0, t))] = True
        out[i, :t] = torch.from_numpy(m)
    return out


def train(config: TrainConfig, dataset: Optional[Dataset] = None) -> TrainResult:
    """Train per config; logs one JSON record per epoch, checkpoints at cadence."""
    if dataset is None:
        dataset = load_dataset(config.data_dir)
    if dataset.mode != config.mode:
        raise ValueError(
            f"config mode {config.mode!r} does not match dataset mode "
            f"{dataset.mode!r}")
    world = dataset.world
    if world is None:
        raise ValueError("dataset has no world.json; training needs it")
    if "train" not in dataset.splits or not dataset.splits["train"]:
        raise ValueError("dataset has no train split")

    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    enc_cfg = encoder_config_for(world, config)
    model = build_model(enc_cfg, config.seed)
    pad_id = world.config.n_tokens
    blank = enc_cfg.blank_id
    bos, eos = enc_cfg.bos_id, enc_cfg.eos_id

    optim = torch.optim.Adam(model.parameters(), lr=0.0,
                             betas=(config.beta1, config.beta2),
                             eps=config.adam_eps)
    rng = np.random.default_rng(config.seed)

    train_samples = dataset.splits["train"]
    steps_per_epoch = math.ceil(len(train_samples) / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    warmup_steps = steps_per_epoch * config.warmup_epochs
    if warmup_steps >= total_steps:
        warmup_steps = max(0, total_steps - 1)

    lam = config.sync_weight
    log: list[dict] = []
    metrics_path = out_dir / "metrics.jsonl" if out_dir else None
    metrics_fh = open(metrics_path, "w") if metrics_path else None
    ckpt_path = out_dir / "final.ckpt" if out_dir else None

    global_step = 0
    try:
        for epoch in range(config.epochs):
            model.train()
            order = rng.permutation(len(train_samples))
            task_vals, sync_vals = [], []
            for b0 in range(0, len(order), config.batch_size):
                idx = order[b0:b0 + config.batch_size]
                batch = [train_samples[i] for i in idx]
                frames, pad_mask, tokens, wb, lengths = _collate(
                    batch, config.use_word_boundary, pad_id)

                frame_mask = None
                if config.sync_variant == "masked":
                    frame_mask = _draw_frame_masks(
                        rng, lengths, frames.shape[1], config.mask_ratio)
                    frames = model.apply_frame_mask(frames, frame_mask)

                H, _ = model.encode_batch(frames, key_padding_mask=pad_mask)

                if config.mode == "word":
                    pool_mask = wb if config.use_word_boundary else ~pad_mask
                    logits = model.classify_batch(H, pool_mask)
                    per = [losses.word_ce(logits[i], int(batch[i].label[0]))
                           for i in range(len(batch))]
                    l_task = torch.stack(per).mean()
                else:
                    labels = [[int(g) for g in s.label] for s in batch]
                    Lmax = max(len(y) for y in labels) + 1
                    prefix = torch.full((len(batch), Lmax), eos, dtype=torch.long)
                    prefix[:, 0] = bos
                    for i, y in enumerate(labels):
                        prefix[i, 1:1 + len(y)] = torch.as_tensor(y)
                    dec_logits = model.decode_lm_batch(
                        H, prefix, memory_key_padding_mask=pad_mask)
                    ctc_terms, lm_terms = [], []
                    for i, y in enumerate(labels):
                        ctc_terms.append(losses.ctc_loss(
                            model.ctc_head(H[i, :lengths[i]]), y, blank=blank))
                        lm_terms.append(losses.lm_loss(
                            dec_logits[i, :len(y) + 1], y + [eos]))
                    l_task = losses.task_loss(
                        torch.stack(ctc_terms).mean(),
                        torch.stack(lm_terms).mean(), config.alpha)

                if config.sync_variant == "off":
                    l_sync = torch.zeros((), dtype=l_task.dtype)
                    loss = l_task
                else:
                    sync_logits = model.project_sync(H)
                    targets = tokens
                    if frame_mask is not None:
                        # supervise only the masked frames
                        targets = tokens.masked_fill(
                            ~frame_mask.unsqueeze(-1), pad_id)
                    l_sync = losses.sync_loss(
                        sync_logits.reshape(-1, 4, enc_cfg.n_sync_tokens),
                        targets.reshape(-1, 4), pad_id)
                    loss = losses.total_loss(l_task, l_sync, lam)

                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch} step {global_step}: "
                        f"task={float(l_task.detach())} "
                        f"sync={float(l_sync.detach())}")

                lr = lr_schedule(min(global_step + 1, total_steps),
                                 warmup_steps, total_steps, config.peak_lr)
                for group in optim.param_groups:
                    group["lr"] = lr
                optim.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                optim.step()
                global_step += 1

                task_vals.append(float(l_task.detach()))
                sync_vals.append(float(l_sync.detach()))

            mean_task = float(np.mean(task_vals))
            mean_sync = float(np.mean(sync_vals))
            effective_lam = 0.0 if config.sync_variant == "off" else lam
            record = {
                "epoch": epoch,
                "l_task": mean_task,
                "l_sync": mean_sync,
                "l_total": mean_task + effective_lam * mean_sync,
                "lr": lr,
            }
            is_cadence = (epoch + 1) % config.eval_every == 0
            if (is_cadence or epoch == config.epochs - 1) and "eval" in dataset.splits:
                report = evaluate(model, dataset, "eval", config.use_word_boundary)
                record["eval"] = {k: v for k, v in report.to_json().items()
                                  if k in ("top1", "wer", "perplexity")
                                  and v is not None}
                if out_dir is not None:
                    save_checkpoint(model, out_dir / f"epoch{epoch:04d}.ckpt",
                                    config.seed)
            log.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")
                metrics_fh.flush()
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    model.eval()
    final_eval = None
    if "eval" in dataset.splits:
        final_eval = evaluate(model, dataset, "eval", config.use_word_boundary)
    if ckpt_path is not None:
        save_checkpoint(model, ckpt_path, config.seed)
    return TrainResult(model=model, config=config, log=log,
                       checkpoint_path=ckpt_path, metrics_path=metrics_path,
                       final_eval=final_eval)


def run_ablation_grid(base: TrainConfig,
                      dataset: Optional[Dataset] = None) -> list[dict]:
    """Sync x CTC grid at a shared seed; WER and perplexity per cell."""
    if base.mode != "sentence":
        raise ValueError("the ablation grid is a sentence-mode experiment")
    if dataset is None:
        dataset = load_dataset(base.data_dir)
    rows = []
    for sync_on in (False, True):
        for ctc_on in (False, True):
            cfg = dataclasses.replace(
                base,
                sync_variant="full" if sync_on else "off",
                alpha=base.alpha if ctc_on else 0.0,
                out_dir=str(Path(base.out_dir) /
                            f"sync{int(sync_on)}_ctc{int(ctc_on)}")
                if base.out_dir else "",
            )
            result = train(cfg, dataset=dataset)
            report = result.final_eval or evaluate(
                result.model, dataset, "eval", cfg.use_word_boundary)
            rows.append({
                "sync": sync_on,
                "ctc": ctc_on,
                "wer": report.wer,
                "perplexity": report.perplexity,
            })
    return rows


def collect_attention_distances(model: VSRModel, dataset: Dataset, split: str,
                                use_word_boundary: bool = False,
                                max_samples: Optional[int] = None
                                ) -> AttentionDistanceReport:
    """Mean attention distance per layer/head over a split (dropout off)."""
    if split not in dataset.splits or not dataset.splits[split]:
        raise ValueError(f"split {split!r} is missing or empty")
    model.eval()
    report = AttentionDistanceReport()
    samples = dataset.splits[split]
    if max_samples is not None:
        samples = samples[:max_samples]
    with torch.no_grad():
        for s in samples:
            _, records = model.encode(sample_input(s, use_word_boundary),
                                      record_attention=True)
            report.add(mean_attention_distance(attention_to_numpy(records)))
    return report
