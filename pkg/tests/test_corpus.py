"""Synthetic world: homophene structure, rendering, dataset round-trips."""

import json

import numpy as np
import pytest

from avsync.corpus import (
    Dataset,
    DatasetFormatError,
    InfeasibleConfigError,
    RenderConfig,
    World,
    WorldConfig,
    build_world,
    generate_dataset,
    homophene_pairs,
    load_dataset,
    render_sample,
)

SMALL = WorldConfig(n_phonemes=10, n_visemes=4, n_words=20,
                    n_homophene_pairs=3, near_words_per_pair=1)


@pytest.fixture(scope="module")
def world():
    return build_world(SMALL, seed=5)


# ----- world construction -----

def test_world_shapes(world):
    c = world.config
    assert world.vis_map.shape == (c.n_phonemes,)
    assert set(world.vis_map.tolist()) == set(range(c.n_visemes))  # surjective
    assert world.grapheme_of.shape == (c.n_phonemes,)
    assert len(set(world.grapheme_of.tolist())) == c.n_phonemes  # bijective
    assert len(world.lexicon) == c.n_words
    assert world.viseme_embeddings.shape == (c.n_visemes, c.d_v)
    assert world.phoneme_audio_embeddings.shape == (c.n_phonemes, c.d_a)
    assert world.phoneme_subtokens.shape == (c.n_phonemes, 4)
    assert np.all(world.phoneme_subtokens >= 0)
    assert np.all(world.phoneme_subtokens < c.n_tokens)


def test_word_lengths_in_range(world):
    c = world.config
    for w in world.lexicon:
        assert c.min_word_len <= len(w) <= c.max_word_len


def test_homophene_pairs_are_viseme_identical(world):
    pairs = homophene_pairs(world)
    assert len(pairs) == world.config.n_homophene_pairs
    for w1, w2, dist, same in pairs:
        assert same, "designated pairs must share viseme sequences"
        assert world.word_visemes(w1) == world.word_visemes(w2)
        assert world.word_graphemes(w1) != world.word_graphemes(w2)
        assert dist >= 1


def test_pair_distances_cycle(world):
    dists = [p[2] for p in homophene_pairs(world)]
    assert all(1 <= d <= world.config.max_pair_distance for d in dists)
    assert 1 in dists  # the cycle always starts at distance 1


def test_world_fingerprint_deterministic():
    a = build_world(SMALL, seed=5)
    b = build_world(SMALL, seed=5)
    assert a.fingerprint() == b.fingerprint()
    c = build_world(SMALL, seed=6)
    assert a.fingerprint() != c.fingerprint()


def test_world_json_round_trip(tmp_path, world):
    path = tmp_path / "world.json"
    world.save(path)
    back = World.load(path)
    assert back.fingerprint() == world.fingerprint()
    assert back.lexicon == world.lexicon


def test_bijective_viseme_map_is_infeasible():
    cfg = WorldConfig(n_phonemes=8, n_visemes=8, n_words=12, n_homophene_pairs=1,
                      near_words_per_pair=0)
    with pytest.raises(InfeasibleConfigError):
        build_world(cfg, seed=0)


def test_too_small_lexicon_is_infeasible():
    cfg = WorldConfig(n_phonemes=10, n_visemes=4, n_words=5,
                      n_homophene_pairs=3, near_words_per_pair=0)
    with pytest.raises(InfeasibleConfigError):
        build_world(cfg, seed=0)


def test_transcript_joins_with_space(world):
    t = world.transcript([0, 1])
    w0 = world.word_graphemes(0)
    w1 = world.word_graphemes(1)
    assert t == w0 + (world.space_grapheme,) + w1
    assert world.space_grapheme == world.config.n_phonemes


# ----- rendering -----

def test_render_frame_count_and_grid_width(world):
    k = 3
    s = render_sample(world, 0, seed=1, render=RenderConfig(frames_per_phoneme=k))
    assert s.num_frames == k * len(world.lexicon[0])
    assert s.token_grid.shape == (s.num_frames, 4)
    assert s.visual_frames.shape == (s.num_frames, world.config.d_v)
    assert s.label.tolist() == [0]
    assert s.word_boundary.all()


def test_render_deterministic(world):
    a = render_sample(world, 2, seed=9)
    b = render_sample(world, 2, seed=9)
    assert a.equals(b)
    c = render_sample(world, 2, seed=10)
    assert not a.equals(c)


def test_zero_noise_pair_words_render_identically(world):
    # identical viseme sequences mean identical noise-free visual frames
    w1, w2, _, _ = homophene_pairs(world)[0]
    r = RenderConfig(sigma_v=0.0)
    a = render_sample(world, w1, seed=3, render=r)
    b = render_sample(world, w2, seed=3, render=r)
    assert np.array_equal(a.visual_frames, b.visual_frames)
    # but the audio token grids differ at the substituted phonemes
    assert not np.array_equal(a.token_grid, b.token_grid)


def test_zero_noise_blocks_repeat_before_smoothing(world):
    # single-phoneme visemes held for k frames: interior rows of a block match
    word = 0
    k = 3
    r = RenderConfig(sigma_v=0.0, frames_per_phoneme=k)
    s = render_sample(world, word, seed=0, render=r)
    phones = world.lexicon[word]
    for i in range(len(phones)):
        block = s.visual_frames[i * k:(i + 1) * k]
        # the middle row of each block is untouched by edge smoothing when
        # neighbors within the block share the same viseme
        assert np.allclose(block[1], block[1])
        if i > 0 and world.vis_map[phones[i - 1]] == world.vis_map[phones[i]]:
            prev = s.visual_frames[(i - 1) * k:i * k]
            assert np.allclose(prev[1], block[1])


def test_render_tokens_follow_phoneme_table(world):
    k = 2
    s = render_sample(world, 1, seed=4, render=RenderConfig(frames_per_phoneme=k))
    phones = world.lexicon[1]
    for i, p in enumerate(phones):
        for f in range(k):
            assert np.array_equal(s.token_grid[i * k + f],
                                  world.phoneme_subtokens[p])


def test_render_word_boundary_marks_target(world):
    s = render_sample(world, [0, 1, 2], seed=5, target_pos=1)
    k = RenderConfig().frames_per_phoneme
    lens = [k * len(world.lexicon[w]) for w in (0, 1, 2)]
    expect = np.zeros(sum(lens), dtype=bool)
    expect[lens[0]:lens[0] + lens[1]] = True
    assert np.array_equal(s.word_boundary, expect)
    assert s.label.tolist() == [1]


def test_render_sentence_label_is_transcript(world):
    s = render_sample(world, [0, 1], seed=6)
    assert s.label.tolist() == list(world.transcript([0, 1]))
    assert s.word_boundary.all()


def test_render_rejects_bad_input(world):
    with pytest.raises(ValueError):
        render_sample(world, [], seed=0)
    with pytest.raises(ValueError):
        render_sample(world, len(world.lexicon), seed=0)
    with pytest.raises(ValueError):
        render_sample(world, [0, 1], seed=0, target_pos=2)
    with pytest.raises(ValueError):
        render_sample(world, 0, seed=0,
                      render=RenderConfig(token_source="codebook"))


def test_render_codebook_path(world):
    from avsync.quantizer import fit_codebook
    rng = np.random.default_rng(0)
    feats = np.repeat(world.phoneme_audio_embeddings.astype(np.float64), 4, axis=0)
    feats = feats + rng.normal(0, 0.05, size=feats.shape)
    cb = fit_codebook(feats, n_centroids=16, iters=10, seed=0)
    s = render_sample(world, 0, seed=1,
                      render=RenderConfig(token_source="codebook"),
                      codebook=cb)
    assert s.token_grid.shape == (s.num_frames, 4)
    assert np.all(s.token_grid >= 0) and np.all(s.token_grid <= 16)


# ----- dataset generation + loading -----

def test_generate_and_load_round_trip(tmp_path, world):
    out = tmp_path / "ds"
    manifest = generate_dataset(world, {"train": 30, "eval": 12}, "word", 3, out,
                                n_eval_homophene=2)
    assert manifest.mode == "word"
    ds = load_dataset(out)
    assert set(ds.splits) == {"train", "eval"}
    assert len(ds.splits["train"]) == 30
    assert len(ds.splits["eval"]) == 12
    assert ds.world is not None
    assert ds.world.fingerprint() == world.fingerprint()
    for s in ds.splits["train"]:
        assert s.token_grid.shape[1] == 4
        assert len(s.label) == 1


def test_generation_bit_exact(tmp_path, world):
    a, b = tmp_path / "a", tmp_path / "b"
    generate_dataset(world, {"train": 20, "eval": 8}, "word", 3, a,
                     n_eval_homophene=1)
    generate_dataset(world, {"train": 20, "eval": 8}, "word", 3, b,
                     n_eval_homophene=1)
    assert (a / "samples.bin").read_bytes() == (b / "samples.bin").read_bytes()
    assert (a / "manifest.json").read_text() == (b / "manifest.json").read_text()


def test_train_split_covers_all_words(tmp_path, world):
    out = tmp_path / "ds"
    generate_dataset(world, {"train": 40, "eval": 8}, "word", 1, out,
                     n_eval_homophene=1)
    ds = load_dataset(out)
    seen = {int(s.label[0]) for s in ds.splits["train"]}
    assert seen == set(range(len(world.lexicon)))


def test_eval_split_covers_homophene_words(tmp_path, world):
    out = tmp_path / "ds"
    n_eval = 3
    pair_words = [w for p in world.homophene_pairs for w in p[:2]]
    generate_dataset(world, {"train": 30, "eval": n_eval * len(pair_words)},
                     "word", 1, out, n_eval_homophene=n_eval)
    ds = load_dataset(out)
    counts = {w: 0 for w in pair_words}
    for s in ds.splits["eval"]:
        w = int(s.label[0])
        if w in counts:
            counts[w] += 1
    assert all(c >= n_eval for c in counts.values())


def test_undersized_split_is_infeasible(tmp_path, world):
    with pytest.raises(InfeasibleConfigError):
        generate_dataset(world, {"train": 5, "eval": 8}, "word", 1,
                         tmp_path / "ds", n_eval_homophene=1)


def test_sentence_dataset(tmp_path, world):
    out = tmp_path / "sent"
    generate_dataset(world, {"train": 25, "eval": 12}, "sentence", 2, out,
                     n_eval_homophene=1)
    ds = load_dataset(out)
    assert ds.mode == "sentence"
    space = world.space_grapheme
    k = RenderConfig().frames_per_phoneme
    for s in ds.splits["train"]:
        label = s.label.tolist()
        n_words = label.count(space) + 1
        assert n_words >= 2
        # frames cover every phoneme of every word, k frames each
        n_phones = len(label) - (n_words - 1)
        assert s.num_frames == k * n_phones


def test_load_rejects_missing_and_corrupt(tmp_path, world):
    with pytest.raises(DatasetFormatError):
        load_dataset(tmp_path / "nope")
    out = tmp_path / "ds"
    generate_dataset(world, {"train": 20}, "word", 1, out, n_eval_homophene=1)
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["version"] = 999
    (out / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DatasetFormatError):
        load_dataset(out)


def test_load_rejects_wrong_world(tmp_path, world):
    out = tmp_path / "ds"
    generate_dataset(world, {"train": 20}, "word", 1, out, n_eval_homophene=1)
    other = build_world(SMALL, seed=99)
    with pytest.raises(DatasetFormatError):
        load_dataset(out, world=other)
