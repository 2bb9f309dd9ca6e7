"""Loss stack: CTC vs brute-force oracle, identities, and gradient checks."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from avsync import losses
from avsync.losses import (
    InfeasibleTargetError,
    ctc_loss,
    ctc_loss_bruteforce,
    lm_loss,
    masked_sync_loss,
    min_ctc_frames,
    sentence_bundle,
    sync_loss,
    task_loss,
    total_loss,
    word_bundle,
    word_ce,
)


def rand_logits(*shape, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=dtype)


# ----- word_ce -----

def test_word_ce_matches_cross_entropy():
    logits = rand_logits(7, seed=1)
    for label in range(7):
        expected = torch.nn.functional.cross_entropy(
            logits.unsqueeze(0), torch.tensor([label]))
        assert torch.allclose(word_ce(logits, label), expected, atol=1e-12)


def test_word_ce_uniform_is_log_n():
    logits = torch.zeros(13, dtype=torch.float64)
    assert abs(float(word_ce(logits, 4)) - math.log(13)) < 1e-12


def test_word_ce_rejects_bad_label():
    with pytest.raises(ValueError):
        word_ce(torch.zeros(3), 3)
    with pytest.raises(ValueError):
        word_ce(torch.zeros(3), -1)


# ----- CTC -----

def test_min_ctc_frames():
    assert min_ctc_frames([0]) == 1
    assert min_ctc_frames([0, 1]) == 2
    assert min_ctc_frames([0, 0]) == 3
    assert min_ctc_frames([1, 1, 1]) == 5


def test_ctc_single_frame_single_symbol():
    # T=1, target [0]: loss is exactly -log p(0)
    logits = rand_logits(1, 3, seed=2)
    logp = torch.log_softmax(logits, dim=-1)
    assert torch.allclose(ctc_loss(logits, [0]), -logp[0, 0], atol=1e-12)


def test_ctc_infeasible_target_raises():
    logits = rand_logits(2, 4, seed=3)
    with pytest.raises(InfeasibleTargetError):
        ctc_loss(logits, [0, 0])  # needs 3 frames
    with pytest.raises(InfeasibleTargetError):
        ctc_loss(logits, [])


def test_ctc_rejects_blank_in_target():
    logits = rand_logits(4, 4, seed=4)
    with pytest.raises(ValueError):
        ctc_loss(logits, [3])  # blank is last index


def test_ctc_matches_bruteforce_random_instances():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 60:
        T = int(rng.integers(1, 7))
        n_symbols = int(rng.integers(2, 5))  # includes blank
        L = int(rng.integers(1, 4))
        target = rng.integers(0, n_symbols - 1, size=L).tolist()
        if T < min_ctc_frames(target):
            continue
        logits = torch.tensor(rng.normal(size=(T, n_symbols)), dtype=torch.float64)
        fast = ctc_loss(logits, target)
        slow = ctc_loss_bruteforce(logits, target)
        assert abs(float(fast) - float(slow)) < 1e-9
        checked += 1


def test_ctc_permutation_covariance():
    # relabeling non-blank symbols and permuting logits columns accordingly
    # leaves the loss unchanged
    logits = rand_logits(5, 4, seed=5)
    target = [0, 2, 1]
    base = float(ctc_loss(logits, target))
    perm = [2, 0, 1]  # new id of old symbol i
    permuted = logits.clone()
    for old, new in enumerate(perm):
        permuted[:, new] = logits[:, old]
    remapped = [perm[t] for t in target]
    assert abs(float(ctc_loss(permuted, remapped)) - base) < 1e-10


def test_ctc_gradient_matches_finite_differences():
    logits = rand_logits(4, 3, seed=6).requires_grad_(True)
    target = [0, 1]
    loss = ctc_loss(logits, target)
    loss.backward()
    eps = 1e-6
    with torch.no_grad():
        for i in range(logits.shape[0]):
            for j in range(logits.shape[1]):
                bump = torch.zeros_like(logits)
                bump[i, j] = eps
                hi = float(ctc_loss(logits + bump, target))
                lo = float(ctc_loss(logits - bump, target))
                fd = (hi - lo) / (2 * eps)
                an = float(logits.grad[i, j])
                assert abs(fd - an) <= 1e-6 * max(1.0, abs(fd), abs(an))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ctc_loss_is_valid_nll(seed):
    # path-sum probability lies in (0, 1]; the loss is non-negative and finite
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 7))
    n_symbols = int(rng.integers(2, 5))
    L = int(rng.integers(1, 4))
    target = rng.integers(0, n_symbols - 1, size=L).tolist()
    if T < min_ctc_frames(target):
        T = min_ctc_frames(target)
    logits = torch.tensor(rng.normal(size=(T, n_symbols)), dtype=torch.float64)
    val = float(ctc_loss(logits, target))
    assert math.isfinite(val)
    assert val >= -1e-12


# ----- lm_loss -----

def test_lm_loss_uniform_gives_log_vocab():
    logits = torch.zeros(5, 11, dtype=torch.float64)
    assert abs(float(lm_loss(logits, [0, 1, 2, 3, 4])) - math.log(11)) < 1e-12


def test_lm_loss_shape_mismatch():
    with pytest.raises(ValueError):
        lm_loss(torch.zeros(3, 4), [0, 1])


def test_lm_loss_is_mean_over_positions():
    logits = rand_logits(3, 6, seed=7)
    target = [1, 4, 0]
    per = [float(word_ce(logits[i], target[i])) for i in range(3)]
    assert abs(float(lm_loss(logits, target)) - float(np.mean(per))) < 1e-12


# ----- sync losses -----

def test_sync_loss_uniform_is_log_v():
    logits = torch.zeros(6, 4, 64, dtype=torch.float64)
    grid = torch.zeros(6, 4, dtype=torch.long)
    assert abs(float(sync_loss(logits, grid, pad_id=64)) - math.log(64)) < 1e-9


def test_sync_loss_excludes_pad_positions():
    logits = rand_logits(2, 4, 5, seed=8)
    grid = torch.tensor([[0, 1, 2, 3], [4, 4, 4, 4]])
    full = sync_loss(logits, grid, pad_id=4)  # only first frame counts
    per = [float(word_ce(logits[0, r], int(grid[0, r]))) for r in range(4)]
    assert abs(float(full) - float(np.mean(per))) < 1e-12


def test_sync_loss_all_pad_raises():
    logits = rand_logits(2, 4, 5, seed=9)
    grid = torch.full((2, 4), 4, dtype=torch.long)
    with pytest.raises(ValueError):
        sync_loss(logits, grid, pad_id=4)


def test_masked_sync_all_true_equals_sync():
    logits = rand_logits(5, 4, 7, seed=10)
    grid = torch.randint(0, 7, (5, 4), generator=torch.Generator().manual_seed(1))
    mask = torch.ones(5, dtype=torch.bool)
    a = masked_sync_loss(logits, grid, mask, pad_id=6)
    b = sync_loss(logits, grid, pad_id=6)
    assert float(a) == float(b)


def test_masked_sync_single_frame():
    logits = rand_logits(3, 4, 7, seed=11)
    grid = torch.randint(0, 6, (3, 4), generator=torch.Generator().manual_seed(2))
    mask = torch.tensor([True, False, False])
    got = masked_sync_loss(logits, grid, mask, pad_id=6)
    per = [float(word_ce(logits[0, r], int(grid[0, r]))) for r in range(4)]
    assert abs(float(got) - float(np.mean(per))) < 1e-12


def test_masked_sync_disjoint_masks_average_to_full():
    logits = rand_logits(6, 4, 7, seed=12)
    grid = torch.randint(0, 6, (6, 4), generator=torch.Generator().manual_seed(3))
    m1 = torch.tensor([True, True, False, False, True, False])
    m2 = ~m1
    l1 = float(masked_sync_loss(logits, grid, m1, pad_id=6))
    l2 = float(masked_sync_loss(logits, grid, m2, pad_id=6))
    n1, n2 = int(m1.sum()) * 4, int(m2.sum()) * 4
    full = float(sync_loss(logits, grid, pad_id=6))
    assert abs((n1 * l1 + n2 * l2) / (n1 + n2) - full) < 1e-12


def test_masked_sync_empty_mask_raises():
    logits = rand_logits(2, 4, 7, seed=13)
    grid = torch.zeros(2, 4, dtype=torch.long)
    with pytest.raises(ValueError):
        masked_sync_loss(logits, grid, torch.zeros(2, dtype=torch.bool), pad_id=6)


# ----- combinations -----

def test_total_loss_identities():
    l_task = torch.tensor(1.25, dtype=torch.float64)
    l_sync = torch.tensor(0.5, dtype=torch.float64)
    assert float(total_loss(l_task, l_sync, 0.0)) == float(l_task)
    assert float(total_loss(l_task, l_sync, 10.0)) == float(l_task + 10.0 * l_sync)
    assert float(total_loss(l_task, torch.tensor(0.0), 3.0)) == float(l_task)
    with pytest.raises(ValueError):
        total_loss(l_task, l_sync, -0.1)


def test_total_loss_monotone_in_lambda():
    l_task = torch.tensor(1.0)
    l_sync = torch.tensor(0.7)
    vals = [float(total_loss(l_task, l_sync, lam)) for lam in (0.0, 0.5, 1.0, 10.0)]
    assert vals == sorted(vals)


def test_task_loss_alpha_endpoints():
    l_ctc = torch.tensor(2.0)
    l_lm = torch.tensor(3.0)
    assert float(task_loss(l_ctc, l_lm, 1.0)) == 2.0
    assert float(task_loss(l_ctc, l_lm, 0.0)) == 3.0
    assert abs(float(task_loss(l_ctc, l_lm, 0.25)) - 2.75) < 1e-12
    with pytest.raises(ValueError):
        task_loss(l_ctc, l_lm, 1.5)


def test_bundles_keep_bookkeeping_exact():
    l_word = torch.tensor(1.5)
    l_sync = torch.tensor(0.25)
    wb = word_bundle(l_word, l_sync, 2.0)
    assert float(wb.l_total) == float(wb.l_task + 2.0 * wb.l_sync)
    sb = sentence_bundle(torch.tensor(2.0, dtype=torch.float64),
                         torch.tensor(4.0, dtype=torch.float64), 0.1,
                         l_sync.double(), 1.0)
    assert abs(float(sb.l_task) - (0.1 * 2.0 + 0.9 * 4.0)) < 1e-12
    assert float(sb.l_total) == float(sb.l_task + sb.l_sync)
