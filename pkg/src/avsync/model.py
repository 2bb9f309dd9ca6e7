"""Transformer encoder over visual feature frames with four heads.

Heads: pooled word classifier, per-frame CTC projection, teacher-forced
autoregressive grapheme decoder with cross-attention, and the per-frame
audio-token projection that predicts four quantized tokens per video frame
in a single non-autoregressive pass. Attention weights can be recorded for
locality analysis. The visual frontend is a single linear projection of
feature frames; frames are unbatched (T, input_dim) unless noted.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int            # d_v, plus 1 when the word-boundary flag is an input
    n_classes: int            # word-level vocabulary
    n_graphemes: int          # G; CTC head emits G+1 (blank last), decoder G+2
    n_sync_tokens: int        # V_sync, audio-token alphabet including the pad id
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 128
    dropout: float = 0.1
    max_frames: int = 512
    tokens_per_frame: int = 4
    decoder_layers: int = 2
    # gain on the projected input; keeps small-magnitude features dominant
    # over the unit-scale positional encodings
    input_gain: float = 5.0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.tokens_per_frame != 4:
            raise ValueError("alignment is fixed at 4 audio tokens per frame")
        for name in ("input_dim", "n_classes", "n_graphemes", "n_sync_tokens",
                     "d_model", "n_layers", "n_heads", "d_ff", "max_frames",
                     "decoder_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.input_gain <= 0:
            raise ValueError("input_gain must be > 0")

    @property
    def bos_id(self) -> int:
        return self.n_graphemes

    @property
    def eos_id(self) -> int:
        return self.n_graphemes + 1

    @property
    def blank_id(self) -> int:
        return self.n_graphemes


def sinusoidal_positions(max_len: int, d_model: int) -> torch.Tensor:
    pos = torch.arange(max_len, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float32)
                    * (-math.log(10000.0) / d_model))
    pe = torch.zeros(max_len, d_model)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div[: (d_model + 1) // 2])
    return pe


class EncoderBlock(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = nn.MultiheadAttention(cfg.d_model, cfg.n_heads,
                                          dropout=cfg.dropout, batch_first=True)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ff = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.d_ff), nn.GELU(),
            nn.Linear(cfg.d_ff, cfg.d_model))
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, key_padding_mask=None, need_weights=False):
        h = self.ln1(x)
        attn_out, weights = self.attn(
            h, h, h, key_padding_mask=key_padding_mask,
            need_weights=need_weights, average_attn_weights=False)
        x = x + self.drop(attn_out)
        x = x + self.drop(self.ff(self.ln2(x)))
        return x, weights


class DecoderBlock(nn.Module):
    """Pre-norm causal self-attention + cross-attention block."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = nn.MultiheadAttention(cfg.d_model, cfg.n_heads,
                                               dropout=cfg.dropout, batch_first=True)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = nn.MultiheadAttention(cfg.d_model, cfg.n_heads,
                                                dropout=cfg.dropout, batch_first=True)
        self.ln3 = nn.LayerNorm(cfg.d_model)
        self.ff = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.d_ff), nn.GELU(),
            nn.Linear(cfg.d_ff, cfg.d_model))
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, y, memory, causal_mask, memory_key_padding_mask=None):
        h = self.ln1(y)
        sa, _ = self.self_attn(h, h, h, attn_mask=causal_mask, need_weights=False)
        y = y + self.drop(sa)
        h = self.ln2(y)
        ca, _ = self.cross_attn(h, memory, memory,
                                key_padding_mask=memory_key_padding_mask,
                                need_weights=False)
        y = y + self.drop(ca)
        y = y + self.drop(self.ff(self.ln3(y)))
        return y


class VSRModel(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        c = config
        self.input_proj = nn.Linear(c.input_dim, c.d_model)
        self.register_buffer("pos_enc", sinusoidal_positions(c.max_frames, c.d_model))
        self.blocks = nn.ModuleList(EncoderBlock(c) for _ in range(c.n_layers))
        self.final_norm = nn.LayerNorm(c.d_model)

        self.sync_proj = nn.Linear(c.d_model, c.tokens_per_frame * c.n_sync_tokens)
        self.classifier = nn.Linear(c.d_model, c.n_classes)
        self.ctc_proj = nn.Linear(c.d_model, c.n_graphemes + 1)

        self.dec_embed = nn.Embedding(c.n_graphemes + 2, c.d_model)
        self.dec_blocks = nn.ModuleList(DecoderBlock(c) for _ in range(c.decoder_layers))
        self.dec_norm = nn.LayerNorm(c.d_model)
        self.dec_out = nn.Linear(c.d_model, c.n_graphemes + 2)

        self.mask_embed = nn.Parameter(torch.randn(c.d_model) * 0.02)
        self.mask_proj = nn.Linear(c.d_model, c.input_dim, bias=False)

    # ----- encoder -----

    def encode_batch(self, frames: torch.Tensor,
                     key_padding_mask: Optional[torch.Tensor] = None,
                     record_attention: bool = False):
        """frames: (B, T, input_dim); key_padding_mask True at padded frames."""
        B, T, _ = frames.shape
        if T > self.config.max_frames:
            raise ValueError(f"T={T} exceeds max_frames={self.config.max_frames}")
        x = self.input_proj(frames) * self.config.input_gain \
            + self.pos_enc[:T].to(frames.dtype)
        records = [] if record_attention else None
        for block in self.blocks:
            x, weights = block(x, key_padding_mask=key_padding_mask,
                               need_weights=record_attention)
            if record_attention:
                records.append(weights)
        return self.final_norm(x), records

    def encode(self, frames: torch.Tensor, record_attention: bool = False):
        """frames: (T, input_dim) -> (H, attention record or None).

        The record is a list over layers of (n_heads, T, T) row-stochastic
        matrices. Deterministic in eval mode; call .train() plus
        torch.manual_seed for seeded dropout.
        """
        H, records = self.encode_batch(frames.unsqueeze(0),
                                       record_attention=record_attention)
        if record_attention:
            records = [w.squeeze(0) for w in records]
        return H.squeeze(0), records

    # ----- heads -----

    def project_sync(self, hidden: torch.Tensor) -> torch.Tensor:
        """(..., T, d_model) -> (..., T, 4, V_sync); purely per-frame."""
        c = self.config
        out = self.sync_proj(hidden)
        return out.reshape(*out.shape[:-1], c.tokens_per_frame, c.n_sync_tokens)

    def classify(self, hidden: torch.Tensor,
                 word_boundary: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Mean-pool (masked to word-boundary frames) then linear; (T, d) -> (n_classes,)."""
        if word_boundary is None:
            pooled = hidden.mean(dim=0)
        else:
            word_boundary = torch.as_tensor(word_boundary, dtype=torch.bool,
                                            device=hidden.device)
            if not bool(word_boundary.any()):
                raise ValueError("word boundary mask selects no frames")
            pooled = hidden[word_boundary].mean(dim=0)
        return self.classifier(pooled)

    def classify_batch(self, hidden: torch.Tensor,
                       frame_mask: torch.Tensor) -> torch.Tensor:
        """hidden (B, T, d), frame_mask (B, T) bool (valid & word-boundary)."""
        weights = frame_mask.to(hidden.dtype)
        denom = weights.sum(dim=1, keepdim=True)
        if bool((denom == 0).any()):
            raise ValueError("a sample has no frames to pool")
        pooled = (hidden * weights.unsqueeze(-1)).sum(dim=1) / denom
        return self.classifier(pooled)

    def ctc_head(self, hidden: torch.Tensor) -> torch.Tensor:
        """(..., T, d_model) -> (..., T, G+1) per-frame logits, blank last."""
        return self.ctc_proj(hidden)

    # ----- decoder -----

    def decode_lm(self, hidden: torch.Tensor, prefix: Sequence[int]) -> torch.Tensor:
        """Teacher-forced causal decoding; prefix starts with BOS.

        hidden: (T, d_model); returns (len(prefix), G+2) logits where
        position i conditions only on prefix[0..i] and hidden.
        """
        H = hidden.unsqueeze(0)
        logits = self.decode_lm_batch(
            H, torch.as_tensor([list(prefix)], dtype=torch.long,
                               device=hidden.device))
        return logits.squeeze(0)

    def decode_lm_batch(self, memory: torch.Tensor, prefix: torch.Tensor,
                        memory_key_padding_mask: Optional[torch.Tensor] = None,
                        prefix_padding_value: Optional[int] = None) -> torch.Tensor:
        c = self.config
        if prefix.dim() != 2:
            raise ValueError("prefix must be (B, L)")
        if bool((prefix[:, 0] != c.bos_id).any()):
            raise ValueError("prefix must start with BOS")
        if bool((prefix < 0).any()) or bool((prefix >= c.n_graphemes + 2).any()):
            raise ValueError("prefix token out of range")
        L = prefix.shape[1]
        y = self.dec_embed(prefix) + self.pos_enc[:L].to(memory.dtype)
        causal = torch.triu(torch.ones(L, L, dtype=torch.bool,
                                       device=memory.device), diagonal=1)
        for block in self.dec_blocks:
            y = block(y, memory, causal,
                      memory_key_padding_mask=memory_key_padding_mask)
        return self.dec_out(self.dec_norm(y))

    def greedy_transcribe(self, frames: torch.Tensor,
                          max_len: Optional[int] = None) -> list[int]:
        """Greedy argmax decoding from BOS until EOS or the length cap."""
        c = self.config
        if max_len is None:
            max_len = 2 + 6 * c.max_frames  # caller should pass a tighter cap
        with torch.no_grad():
            H, _ = self.encode(frames)
            prefix = [c.bos_id]
            out: list[int] = []
            for _ in range(max_len):
                logits = self.decode_lm(H, prefix)
                nxt = int(torch.argmax(logits[-1]))
                if nxt == c.eos_id:
                    break
                out.append(nxt)
                prefix.append(nxt)
        return out

    # ----- input masking -----

    def apply_frame_mask(self, frames: torch.Tensor,
                         mask: torch.Tensor) -> torch.Tensor:
        """Replace masked frames with the learned mask embedding (projected
        to input dim); unmasked frames pass through untouched."""
        mask = torch.as_tensor(mask, dtype=torch.bool, device=frames.device)
        if mask.shape != frames.shape[:-1]:
            raise ValueError(
                f"mask shape {tuple(mask.shape)} does not match frames "
                f"{tuple(frames.shape[:-1])}")
        fill = self.mask_proj(self.mask_embed.to(frames.dtype))
        return torch.where(mask.unsqueeze(-1), fill, frames)


def build_model(config: EncoderConfig, seed: int) -> VSRModel:
    """Deterministic construction: same (config, seed) gives identical weights."""
    torch.manual_seed(seed)
    return VSRModel(config)


def save_checkpoint(model: VSRModel, path: str | Path, seed: int) -> None:
    """Length-prefixed JSON manifest + float32 LE parameter blocks."""
    state = model.state_dict()
    names = [n for n in state if n != "pos_enc"]
    manifest = {
        "version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "seed": seed,
        "tensors": [{"name": n, "shape": list(state[n].shape)} for n in names],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(state[n].detach().cpu().to(torch.float32).numpy()
                     .astype("<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[VSRModel, int]:
    with open(path, "rb") as fh:
        (header_len,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(header_len).decode("utf-8"))
        if manifest.get("version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {manifest.get('version')!r}")
        config = EncoderConfig(**manifest["config"])
        model = VSRModel(config)
        state = model.state_dict()
        for entry in manifest["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in state:
                raise ValueError(f"unknown tensor {name!r} in checkpoint")
            if tuple(state[name].shape) != shape:
                raise ValueError(
                    f"tensor {name!r}: checkpoint shape {shape} does not match "
                    f"model shape {tuple(state[name].shape)}")
            n_el = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * n_el), dtype="<f4").reshape(shape)
            state[name] = torch.from_numpy(data.copy())
        model.load_state_dict(state)
    model.eval()
    return model, int(manifest["seed"])


def attention_to_numpy(records: list[torch.Tensor]) -> list[np.ndarray]:
    return [w.detach().cpu().numpy().astype(np.float64) for w in records]
