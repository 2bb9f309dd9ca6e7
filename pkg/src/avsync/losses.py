"""Training objectives: word CE, CTC, autoregressive LM loss, their weighted
joint combination, and the frame-synchronized audio-token losses.

All functions take torch tensors and are differentiable; everything is
computed in log-space so values stay finite for finite logits. CTC is the
standard log-space forward algorithm over the blank-interleaved extended
target; infeasible targets raise instead of returning infinities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn.functional as F

# effectively -inf for the forward recursion: exp() underflows to exact 0.0
# in both float32 and float64, but arithmetic on it stays finite so autograd
# never produces NaNs through unreachable lattice states
_NEG = -1e4


class InfeasibleTargetError(ValueError):
    """Target cannot be emitted in the given number of frames."""


def word_ce(logits: torch.Tensor, label: int) -> torch.Tensor:
    """-log softmax(logits)[label], via log-sum-exp."""
    if logits.dim() != 1:
        raise ValueError(f"expected 1-D class logits, got shape {tuple(logits.shape)}")
    if not (0 <= label < logits.shape[0]):
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    return torch.logsumexp(logits, dim=0) - logits[label]


def min_ctc_frames(target: Sequence[int]) -> int:
    """Minimum frame count to emit the target: |y| plus adjacent repeats."""
    repeats = sum(1 for i in range(1, len(target)) if target[i] == target[i - 1])
    return len(target) + repeats


def ctc_loss(logits: torch.Tensor, target: Sequence[int],
             blank: Optional[int] = None) -> torch.Tensor:
    """Negative log of the summed probability of all collapsing paths.

    ``logits`` is (T, n_symbols); blank defaults to the last index.
    """
    if logits.dim() != 2:
        raise ValueError(f"expected (T, symbols) logits, got {tuple(logits.shape)}")
    T, n_symbols = logits.shape
    if blank is None:
        blank = n_symbols - 1
    target = [int(t) for t in target]
    if len(target) == 0:
        raise InfeasibleTargetError("empty target")
    for t in target:
        if not (0 <= t < n_symbols) or t == blank:
            raise ValueError(f"target symbol {t} invalid (blank={blank})")
    if T < min_ctc_frames(target):
        raise InfeasibleTargetError(
            f"target needs at least {min_ctc_frames(target)} frames, got {T}")

    logp = F.log_softmax(logits, dim=-1)

    # blank-interleaved extended target: [b, y1, b, y2, ..., b]
    ext = [blank]
    for y in target:
        ext.extend([y, blank])
    S = len(ext)
    ext_idx = torch.tensor(ext, dtype=torch.long, device=logits.device)
    # transition from s-2 allowed when ext[s] is a label differing from ext[s-2]
    skip_ok = torch.tensor(
        [s >= 2 and ext[s] != blank and ext[s] != ext[s - 2] for s in range(S)],
        device=logits.device)

    neg = torch.full((S,), _NEG, dtype=logits.dtype, device=logits.device)
    alpha = neg.clone()
    alpha[0] = logp[0, ext[0]]
    if S > 1:
        alpha[1] = logp[0, ext[1]]

    pad = torch.full((1,), _NEG, dtype=logits.dtype, device=logits.device)
    pad2 = torch.full((2,), _NEG, dtype=logits.dtype, device=logits.device)
    for t in range(1, T):
        prev1 = torch.cat([pad, alpha[:-1]])
        prev2 = torch.where(skip_ok, torch.cat([pad2, alpha[:-2]]), neg)
        alpha = torch.logsumexp(torch.stack([alpha, prev1, prev2]), dim=0)
        alpha = alpha + logp[t, ext_idx]

    if S > 1:
        total = torch.logsumexp(torch.stack([alpha[-1], alpha[-2]]), dim=0)
    else:
        total = alpha[-1]
    return -total


def ctc_loss_bruteforce(logits: torch.Tensor, target: Sequence[int],
                        blank: Optional[int] = None) -> torch.Tensor:
    """Exhaustive enumeration of all frame paths; oracle for small instances."""
    import itertools

    T, n_symbols = logits.shape
    if blank is None:
        blank = n_symbols - 1
    target = tuple(int(t) for t in target)

    def collapse(path: tuple[int, ...]) -> tuple[int, ...]:
        out = []
        prev = None
        for s in path:
            if s != prev and s != blank:
                out.append(s)
            prev = s
        return tuple(out)

    logp = F.log_softmax(logits.detach(), dim=-1)
    terms = []
    for path in itertools.product(range(n_symbols), repeat=T):
        if collapse(path) == target:
            terms.append(sum(logp[t, s] for t, s in enumerate(path)))
    if not terms:
        raise InfeasibleTargetError("no path collapses to target")
    return -torch.logsumexp(torch.stack(terms), dim=0)


def lm_loss(logits: torch.Tensor, target: Sequence[int]) -> torch.Tensor:
    """Mean per-position cross-entropy of the teacher-forced decoder.

    ``logits`` is (L, vocab) aligned with ``target`` (the label with EOS
    appended). The mean keeps perplexity definitional: ppl = exp(lm_loss).
    """
    target = torch.as_tensor([int(t) for t in target], dtype=torch.long,
                             device=logits.device)
    if logits.dim() != 2 or logits.shape[0] != target.shape[0]:
        raise ValueError(
            f"logits {tuple(logits.shape)} do not align with target of "
            f"length {target.shape[0]}")
    logp = F.log_softmax(logits, dim=-1)
    return -logp.gather(1, target.unsqueeze(1)).mean()


def task_loss(l_ctc: torch.Tensor, l_lm: torch.Tensor, alpha: float) -> torch.Tensor:
    """alpha * CTC + (1 - alpha) * LM."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return alpha * l_ctc + (1.0 - alpha) * l_lm


def sync_loss(logits: torch.Tensor, token_grid: torch.Tensor,
              pad_id: int) -> torch.Tensor:
    """Mean cross-entropy over all non-pad token positions.

    ``logits`` is (T, 4, V_sync), ``token_grid`` is (T, 4). Padded positions
    drop out of both numerator and denominator so the weight of the loss does
    not depend on the pad pattern.
    """
    if logits.dim() != 3:
        raise ValueError(f"expected (T, R, V) sync logits, got {tuple(logits.shape)}")
    token_grid = torch.as_tensor(token_grid, dtype=torch.long, device=logits.device)
    if token_grid.shape != logits.shape[:2]:
        raise ValueError(
            f"token grid {tuple(token_grid.shape)} does not match logits "
            f"{tuple(logits.shape[:2])}")
    keep = token_grid != pad_id
    if not bool(keep.any()):
        raise ValueError("all token positions are padded")
    flat_logits = logits[keep]
    flat_targets = token_grid[keep]
    logp = F.log_softmax(flat_logits, dim=-1)
    return -logp.gather(1, flat_targets.unsqueeze(1)).mean()


def masked_sync_loss(logits: torch.Tensor, token_grid: torch.Tensor,
                     mask: torch.Tensor, pad_id: int) -> torch.Tensor:
    """sync_loss restricted to frames where ``mask`` is true.

    The encoder input must have been masked with the same frame mask (see
    model.apply_frame_mask); supervision covers only the masked frames.
    """
    mask = torch.as_tensor(mask, dtype=torch.bool, device=logits.device)
    if mask.shape != (logits.shape[0],):
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match T={logits.shape[0]}")
    if not bool(mask.any()):
        raise ValueError("mask selects no frames")
    return sync_loss(logits[mask], token_grid[mask], pad_id)


def total_loss(l_task: torch.Tensor, l_sync: torch.Tensor,
               sync_weight: float) -> torch.Tensor:
    """task + lambda * sync."""
    if sync_weight < 0.0:
        raise ValueError(f"sync weight must be >= 0, got {sync_weight}")
    return l_task + sync_weight * l_sync


@dataclass
class LossBundle:
    l_task: torch.Tensor
    l_sync: torch.Tensor
    l_total: torch.Tensor
    alpha: float
    sync_weight: float
    l_word: Optional[torch.Tensor] = None
    l_ctc: Optional[torch.Tensor] = None
    l_lm: Optional[torch.Tensor] = None


def word_bundle(l_word: torch.Tensor, l_sync: torch.Tensor,
                sync_weight: float) -> LossBundle:
    return LossBundle(
        l_task=l_word, l_sync=l_sync,
        l_total=total_loss(l_word, l_sync, sync_weight),
        alpha=1.0, sync_weight=sync_weight, l_word=l_word)


def sentence_bundle(l_ctc: torch.Tensor, l_lm: torch.Tensor, alpha: float,
                    l_sync: torch.Tensor, sync_weight: float) -> LossBundle:
    l_task = task_loss(l_ctc, l_lm, alpha)
    return LossBundle(
        l_task=l_task, l_sync=l_sync,
        l_total=total_loss(l_task, l_sync, sync_weight),
        alpha=alpha, sync_weight=sync_weight, l_ctc=l_ctc, l_lm=l_lm)
