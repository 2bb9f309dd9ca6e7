"""Synthetic audiovisual corpus with controllable homophene structure.

A World holds a phoneme inventory, a many-to-one phoneme->viseme map, a
bijective phoneme->grapheme map (plus one space grapheme for sentence
transcripts), a lexicon, and the embedding tables used to render clips.
Homophene pairs are words with different phoneme sequences but identical
viseme sequences; the generator records them together with their grapheme
edit distances so downstream analyses have exact ground truth.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .analysis import levenshtein

FORMAT_VERSION = 1

# audio tokens per video frame: 100Hz tokens against 25fps video
TOKENS_PER_FRAME = 4


class InfeasibleConfigError(ValueError):
    """World or dataset configuration that cannot be satisfied."""


class DatasetFormatError(ValueError):
    """Manifest/sample file is missing, corrupt, or from another version."""


@dataclass(frozen=True)
class WorldConfig:
    n_phonemes: int = 20
    n_visemes: int = 8
    n_words: int = 60
    n_homophene_pairs: int = 10
    min_word_len: int = 2
    max_word_len: int = 6
    # distances cycle 1..max_pair_distance across the designated pairs
    max_pair_distance: int = 3
    # per designated pair, filler words at viseme edit distance 1 -- visually
    # confusable distractors that make pair words hard without audio cues
    near_words_per_pair: int = 4
    d_v: int = 16
    d_a: int = 16
    n_tokens: int = 64  # audio-token alphabet size V (pad id is V)
    # embedding norm relative to render noise; 0.2 puts the default
    # sigma_v = 0.5 render in a regime where vision alone is genuinely hard
    viseme_embedding_scale: float = 0.2


@dataclass
class World:
    config: WorldConfig
    seed: int
    vis_map: np.ndarray                    # (P,) int64, phoneme -> viseme
    grapheme_of: np.ndarray                # (P,) int64, phoneme -> grapheme
    lexicon: list[tuple[int, ...]]         # W words, each a phoneme sequence
    viseme_embeddings: np.ndarray          # (M, d_v) float32
    phoneme_audio_embeddings: np.ndarray   # (P, d_a) float32
    phoneme_subtokens: np.ndarray          # (P, 4) int64, per-phoneme token quad
    homophene_pairs: list[tuple[int, int, int]]  # (word_i, word_j, distance)

    @property
    def n_phonemes(self) -> int:
        return self.config.n_phonemes

    @property
    def n_graphemes(self) -> int:
        # one grapheme per phoneme plus the word separator
        return self.config.n_phonemes + 1

    @property
    def space_grapheme(self) -> int:
        return self.config.n_phonemes

    def word_visemes(self, word: int) -> tuple[int, ...]:
        return tuple(int(self.vis_map[p]) for p in self.lexicon[word])

    def word_graphemes(self, word: int) -> tuple[int, ...]:
        return tuple(int(self.grapheme_of[p]) for p in self.lexicon[word])

    def transcript(self, words: Sequence[int]) -> tuple[int, ...]:
        """Grapheme sequence of an utterance, words joined by the separator."""
        out: list[int] = []
        for i, w in enumerate(words):
            if i > 0:
                out.append(self.space_grapheme)
            out.extend(self.word_graphemes(w))
        return tuple(out)

    def fingerprint(self) -> str:
        payload = {
            "config": asdict(self.config),
            "seed": self.seed,
            "vis_map": self.vis_map.tolist(),
            "grapheme_of": self.grapheme_of.tolist(),
            "lexicon": [list(w) for w in self.lexicon],
            "viseme_embeddings": self.viseme_embeddings.astype(np.float32).tolist(),
            "phoneme_audio_embeddings": self.phoneme_audio_embeddings.astype(np.float32).tolist(),
            "phoneme_subtokens": self.phoneme_subtokens.tolist(),
            "homophene_pairs": [list(p) for p in self.homophene_pairs],
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_json(self) -> dict:
        return {
            "config": asdict(self.config),
            "seed": self.seed,
            "vis_map": self.vis_map.tolist(),
            "grapheme_of": self.grapheme_of.tolist(),
            "lexicon": [list(w) for w in self.lexicon],
            "viseme_embeddings": self.viseme_embeddings.astype(np.float32).tolist(),
            "phoneme_audio_embeddings": self.phoneme_audio_embeddings.astype(np.float32).tolist(),
            "phoneme_subtokens": self.phoneme_subtokens.tolist(),
            "homophene_pairs": [list(p) for p in self.homophene_pairs],
        }

    @staticmethod
    def from_json(d: dict) -> "World":
        return World(
            config=WorldConfig(**d["config"]),
            seed=int(d["seed"]),
            vis_map=np.asarray(d["vis_map"], dtype=np.int64),
            grapheme_of=np.asarray(d["grapheme_of"], dtype=np.int64),
            lexicon=[tuple(w) for w in d["lexicon"]],
            viseme_embeddings=np.asarray(d["viseme_embeddings"], dtype=np.float32),
            phoneme_audio_embeddings=np.asarray(d["phoneme_audio_embeddings"], dtype=np.float32),
            phoneme_subtokens=np.asarray(d["phoneme_subtokens"], dtype=np.int64),
            homophene_pairs=[tuple(p) for p in d["homophene_pairs"]],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "World":
        return World.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _viseme_siblings(vis_map: np.ndarray) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for p, v in enumerate(vis_map.tolist()):
        groups.setdefault(v, []).append(p)
    return groups


def build_world(config: WorldConfig, seed: int) -> World:
    """Construct a deterministic World with the requested homophene pairs."""
    c = config
    if c.n_visemes < 1 or c.n_phonemes < c.n_visemes:
        raise InfeasibleConfigError(
            f"need n_phonemes >= n_visemes >= 1, got P={c.n_phonemes} M={c.n_visemes}")
    if c.n_words < 2:
        raise InfeasibleConfigError("need at least 2 words")
    if not (1 <= c.min_word_len <= c.max_word_len):
        raise InfeasibleConfigError("bad word length range")
    if c.n_homophene_pairs > 0 and c.n_phonemes == c.n_visemes:
        raise InfeasibleConfigError(
            "phoneme->viseme map is bijective; homophene pairs cannot exist")
    if 2 * c.n_homophene_pairs > c.n_words:
        raise InfeasibleConfigError(
            f"{c.n_homophene_pairs} pairs need {2 * c.n_homophene_pairs} words, "
            f"lexicon holds {c.n_words}")

    rng = np.random.default_rng(seed)

    # surjective viseme map: first M phonemes pin down every viseme, the rest
    # land on random visemes and create the shared classes homophenes need
    vis_map = np.concatenate([
        np.arange(c.n_visemes, dtype=np.int64),
        rng.integers(0, c.n_visemes, size=c.n_phonemes - c.n_visemes, dtype=np.int64),
    ])
    grapheme_of = np.arange(c.n_phonemes, dtype=np.int64)

    siblings = _viseme_siblings(vis_map)
    shared = [v for v, ps in siblings.items() if len(ps) >= 2]
    if c.n_homophene_pairs > 0 and not shared:
        raise InfeasibleConfigError("no viseme has two phonemes; cannot build pairs")
    swappable = [p for v in shared for p in siblings[v]]

    lexicon: list[tuple[int, ...]] = []
    seen_words: set[tuple[int, ...]] = set()
    seen_visemes: set[tuple[int, ...]] = set()
    pairs: list[tuple[int, int, int]] = []

    def vis_seq(word: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(int(vis_map[p]) for p in word)

    def add_word(word: tuple[int, ...]) -> int:
        lexicon.append(word)
        seen_words.add(word)
        seen_visemes.add(vis_seq(word))
        return len(lexicon) - 1

    max_dist = max(1, min(c.max_pair_distance, c.max_word_len))
    for i in range(c.n_homophene_pairs):
        dist = 1 + i % max_dist
        lo = max(c.min_word_len, dist)
        length = int(rng.integers(lo, c.max_word_len + 1))
        pair = None
        for _ in range(200):
            base = tuple(int(x) for x in rng.integers(0, c.n_phonemes, size=length))
            positions = rng.choice(length, size=dist, replace=False)
            w1 = list(base)
            w2 = list(base)
            ok = True
            for pos in positions:
                p = int(rng.choice(swappable))
                sibs = [q for q in siblings[int(vis_map[p])] if q != p]
                if not sibs:
                    ok = False
                    break
                w1[pos] = p
                w2[pos] = int(rng.choice(sibs))
            if not ok:
                continue
            t1, t2 = tuple(w1), tuple(w2)
            if t1 == t2 or t1 in seen_words or t2 in seen_words:
                continue
            if vis_seq(t1) != vis_seq(t2):
                continue
            pair = (t1, t2, dist)
            break
        if pair is None:
            raise InfeasibleConfigError(
                f"could not construct homophene pair {i} at distance {dist}")
        i1 = add_word(pair[0])
        i2 = add_word(pair[1])
        # graphemes mirror phonemes one-to-one, so the grapheme edit distance
        # is just the edit distance between the phoneme sequences
        pairs.append((i1, i2, levenshtein(pair[0], pair[1])))

    # near-homophene distractors: one viseme away from a designated pair word
    for w1, _, _ in pairs:
        base = lexicon[w1]
        added = 0
        for _ in range(200):
            if added >= c.near_words_per_pair or len(lexicon) >= c.n_words:
                break
            pos = int(rng.integers(0, len(base)))
            cand_p = int(rng.integers(0, c.n_phonemes))
            if int(vis_map[cand_p]) == int(vis_map[base[pos]]):
                continue
            cand = base[:pos] + (cand_p,) + base[pos + 1:]
            if cand in seen_words or vis_seq(cand) in seen_visemes:
                continue
            add_word(cand)
            added += 1

    # filler words; keep their viseme sequences distinct from everything else
    # where possible so designated pairs stay the only visual ambiguity
    while len(lexicon) < c.n_words:
        word = None
        for attempt in range(200):
            length = int(rng.integers(c.min_word_len, c.max_word_len + 1))
            cand = tuple(int(x) for x in rng.integers(0, c.n_phonemes, size=length))
            if cand in seen_words:
                continue
            if vis_seq(cand) in seen_visemes and attempt < 150:
                continue
            word = cand
            break
        if word is None:
            raise InfeasibleConfigError("lexicon too large for phoneme inventory")
        add_word(word)

    viseme_embeddings = (c.viseme_embedding_scale *
                         rng.standard_normal((c.n_visemes, c.d_v))).astype(np.float32)
    phoneme_audio_embeddings = rng.standard_normal((c.n_phonemes, c.d_a)).astype(np.float32)

    # per-phoneme token quadruple; rows must be distinct so phonemes sharing a
    # viseme still carry different audio targets
    for _ in range(100):
        phoneme_subtokens = rng.integers(
            0, c.n_tokens, size=(c.n_phonemes, TOKENS_PER_FRAME), dtype=np.int64)
        if len({tuple(r) for r in phoneme_subtokens.tolist()}) == c.n_phonemes:
            break
    else:
        raise InfeasibleConfigError("could not draw distinct phoneme token rows")

    return World(
        config=c,
        seed=seed,
        vis_map=vis_map,
        grapheme_of=grapheme_of,
        lexicon=lexicon,
        viseme_embeddings=viseme_embeddings,
        phoneme_audio_embeddings=phoneme_audio_embeddings,
        phoneme_subtokens=phoneme_subtokens,
        homophene_pairs=pairs,
    )


def homophene_pairs(world: World) -> list[tuple[int, int, int, bool]]:
    """Designated pairs as (word1, word2, grapheme edit distance, viseme_identical)."""
    out = []
    for w1, w2, _ in world.homophene_pairs:
        dist = levenshtein(world.word_graphemes(w1), world.word_graphemes(w2))
        same = world.word_visemes(w1) == world.word_visemes(w2)
        out.append((w1, w2, dist, same))
    return out


@dataclass(frozen=True)
class RenderConfig:
    frames_per_phoneme: int = 3
    sigma_v: float = 0.5
    token_source: str = "table"  # "table" | "codebook"
    sigma_a: float = 0.1         # audio feature noise on the codebook path


@dataclass
class Sample:
    visual_frames: np.ndarray   # (T, d_v) float32
    word_boundary: np.ndarray   # (T,) bool
    label: np.ndarray           # (L,) int64; word mode: L == 1
    token_grid: np.ndarray      # (T, 4) int64

    @property
    def num_frames(self) -> int:
        return int(self.visual_frames.shape[0])

    def equals(self, other: "Sample") -> bool:
        return (
            np.array_equal(self.visual_frames, other.visual_frames)
            and np.array_equal(self.word_boundary, other.word_boundary)
            and np.array_equal(self.label, other.label)
            and np.array_equal(self.token_grid, other.token_grid)
        )


def _smooth_centered(frames: np.ndarray) -> np.ndarray:
    """Width-3 centered moving average; edges average the available window."""
    T = frames.shape[0]
    out = np.empty_like(frames)
    for t in range(T):
        lo, hi = max(0, t - 1), min(T, t + 2)
        out[t] = frames[lo:hi].mean(axis=0)
    return out


def render_sample(
    world: World,
    utterance: int | Sequence[int],
    seed: int,
    render: RenderConfig = RenderConfig(),
    target_pos: Optional[int] = None,
    codebook=None,
) -> Sample:
    """Render one clip: noisy smoothed viseme frames plus the aligned token grid.

    ``target_pos`` marks the word whose frames get word_boundary=True
    (word-level supervision); when None, every frame is marked.
    """
    words = [utterance] if isinstance(utterance, (int, np.integer)) else list(utterance)
    if not words:
        raise ValueError("empty utterance")
    for w in words:
        if not (0 <= int(w) < len(world.lexicon)):
            raise ValueError(f"word index {w} out of range")
    if target_pos is not None and not (0 <= target_pos < len(words)):
        raise ValueError("target_pos out of range")

    k = render.frames_per_phoneme
    rng = np.random.default_rng(seed)

    phones: list[int] = []
    word_of_phone: list[int] = []
    for wi, w in enumerate(words):
        for p in world.lexicon[int(w)]:
            phones.append(int(p))
            word_of_phone.append(wi)
    # expand per-phoneme to per-frame: each phoneme holds for k frames
    frame_phones = np.repeat(np.asarray(phones, dtype=np.int64), k)
    word_of_frame = np.repeat(np.asarray(word_of_phone, dtype=np.int64), k)
    T = frame_phones.shape[0]

    clean = world.viseme_embeddings[world.vis_map[frame_phones]].astype(np.float64)
    noisy = clean + rng.normal(0.0, render.sigma_v, size=clean.shape)
    frames = _smooth_centered(noisy).astype(np.float32)

    if render.token_source == "table":
        token_grid = world.phoneme_subtokens[frame_phones].copy()
    elif render.token_source == "codebook":
        if codebook is None:
            raise ValueError("codebook token source requires a fitted codebook")
        from .quantizer import align_tokens, quantize
        feats = np.repeat(
            world.phoneme_audio_embeddings[frame_phones].astype(np.float64),
            TOKENS_PER_FRAME, axis=0)
        feats = feats + rng.normal(0.0, render.sigma_a, size=feats.shape)
        tokens = quantize(codebook, feats)
        token_grid, _, _ = align_tokens(tokens, T, pad_id=codebook.n_centroids)
    else:
        raise ValueError(f"unknown token_source {render.token_source!r}")

    if target_pos is None:
        wb = np.ones(T, dtype=bool)
    else:
        wb = word_of_frame == target_pos

    if isinstance(utterance, (int, np.integer)):
        label = np.asarray([int(utterance)], dtype=np.int64)
    elif target_pos is not None:
        label = np.asarray([int(words[target_pos])], dtype=np.int64)
    else:
        label = np.asarray(world.transcript(words), dtype=np.int64)

    return Sample(visual_frames=frames, word_boundary=wb,
                  label=label, token_grid=token_grid.astype(np.int64))


@dataclass
class RecordMeta:
    id: str
    offset: int
    num_frames: int
    label: list[int]


@dataclass
class Manifest:
    version: int
    mode: str
    world_fingerprint: str
    splits: dict[str, list[RecordMeta]]

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "mode": self.mode,
            "world_fingerprint": self.world_fingerprint,
            "splits": {
                name: [
                    {"id": r.id, "offset": r.offset,
                     "num_frames": r.num_frames, "label": r.label}
                    for r in recs
                ]
                for name, recs in self.splits.items()
            },
        }

    @staticmethod
    def from_json(d: dict) -> "Manifest":
        return Manifest(
            version=int(d["version"]),
            mode=str(d["mode"]),
            world_fingerprint=str(d["world_fingerprint"]),
            splits={
                name: [RecordMeta(id=r["id"], offset=int(r["offset"]),
                                  num_frames=int(r["num_frames"]),
                                  label=[int(x) for x in r["label"]])
                       for r in recs]
                for name, recs in d["splits"].items()
            },
        )


def _write_sample(fh, sample: Sample) -> None:
    T, d_v = sample.visual_frames.shape
    R = sample.token_grid.shape[1]
    fh.write(struct.pack("<III", T, d_v, R))
    fh.write(sample.visual_frames.astype("<f4").tobytes())
    fh.write(sample.word_boundary.astype(np.uint8).tobytes())
    fh.write(sample.token_grid.astype("<u2").tobytes())
    fh.write(struct.pack("<H", len(sample.label)))
    fh.write(sample.label.astype("<u2").tobytes())


def _read_sample(fh) -> Sample:
    head = fh.read(12)
    if len(head) != 12:
        raise DatasetFormatError("truncated sample header")
    T, d_v, R = struct.unpack("<III", head)
    frames = np.frombuffer(fh.read(4 * T * d_v), dtype="<f4").reshape(T, d_v).copy()
    wb = np.frombuffer(fh.read(T), dtype=np.uint8).astype(bool)
    grid = np.frombuffer(fh.read(2 * T * R), dtype="<u2").reshape(T, R).astype(np.int64)
    (n_label,) = struct.unpack("<H", fh.read(2))
    label = np.frombuffer(fh.read(2 * n_label), dtype="<u2").astype(np.int64)
    return Sample(visual_frames=frames, word_boundary=wb, label=label, token_grid=grid)


def _plan_word_utterances(
    world: World, split: str, count: int, rng: np.random.Generator,
    n_eval_homophene: int, context_words: int,
) -> list[tuple[list[int], int]]:
    """Return (utterance word list, target position) plans for a word split."""
    W = len(world.lexicon)
    targets: list[int] = []
    if split == "train":
        if count < W:
            raise InfeasibleConfigError(
                f"train split of {count} cannot cover all {W} words")
        targets.extend(range(W))
    if split == "eval":
        needed = [w for pair in world.homophene_pairs for w in pair[:2]]
        if count < len(needed) * n_eval_homophene:
            raise InfeasibleConfigError(
                f"eval split of {count} cannot give {n_eval_homophene} samples "
                f"to each of {len(needed)} homophene words")
        for w in needed:
            targets.extend([w] * n_eval_homophene)
    while len(targets) < count:
        targets.append(int(rng.integers(0, W)))
    targets = targets[:count]

    plans = []
    for tgt in targets:
        before = int(rng.integers(0, context_words + 1)) if context_words else 0
        after = int(rng.integers(0, context_words + 1)) if context_words else 0
        ctx_b = [int(rng.integers(0, W)) for _ in range(before)]
        ctx_a = [int(rng.integers(0, W)) for _ in range(after)]
        plans.append((ctx_b + [tgt] + ctx_a, before))
    return plans


def _plan_sentence_utterances(
    world: World, split: str, count: int, rng: np.random.Generator,
    n_eval_homophene: int,
) -> list[list[int]]:
    W = len(world.lexicon)
    plans: list[list[int]] = []

    def random_sentence(must_include: Optional[int] = None) -> list[int]:
        n = int(rng.integers(2, 7))
        words = [int(w) for w in rng.integers(0, W, size=n)]
        if must_include is not None:
            words[int(rng.integers(0, n))] = must_include
        return words

    if split == "train":
        order = rng.permutation(W).tolist()
        for w in order:
            plans.append(random_sentence(must_include=int(w)))
    if split == "eval":
        needed = [w for pair in world.homophene_pairs for w in pair[:2]]
        for w in needed:
            for _ in range(n_eval_homophene):
                plans.append(random_sentence(must_include=w))
    if len(plans) > count:
        raise InfeasibleConfigError(
            f"{split} split of {count} too small for required coverage "
            f"({len(plans)} sentences needed)")
    while len(plans) < count:
        plans.append(random_sentence())
    return plans


def generate_dataset(
    world: World,
    sizes: dict[str, int],
    mode: str,
    seed: int,
    out_dir: str | Path,
    render: RenderConfig = RenderConfig(),
    n_eval_homophene: int = 20,
    context_words: int = 0,
    codebook=None,
) -> Manifest:
    """Render all splits to ``out_dir`` (manifest.json + samples.bin + world.json)."""
    if mode not in ("word", "sentence"):
        raise ValueError(f"unknown mode {mode!r}")
    for name, n in sizes.items():
        if n <= 0:
            raise InfeasibleConfigError(f"split {name!r} has non-positive size {n}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    splits: dict[str, list[RecordMeta]] = {}
    with open(out / "samples.bin", "wb") as fh:
        for split_name in sorted(sizes):
            count = sizes[split_name]
            records: list[RecordMeta] = []
            if mode == "word":
                plans = _plan_word_utterances(
                    world, split_name, count, rng, n_eval_homophene, context_words)
            else:
                plans = [(p, None) for p in _plan_sentence_utterances(
                    world, split_name, count, rng, n_eval_homophene)]
            for i, (words, tpos) in enumerate(plans):
                sample_seed = int(rng.integers(0, 2**31 - 1))
                sample = render_sample(world, words, sample_seed, render,
                                       target_pos=tpos, codebook=codebook)
                offset = fh.tell()
                _write_sample(fh, sample)
                records.append(RecordMeta(
                    id=f"{split_name}-{i:06d}", offset=offset,
                    num_frames=sample.num_frames, label=sample.label.tolist()))
            splits[split_name] = records

    manifest = Manifest(version=FORMAT_VERSION, mode=mode,
                        world_fingerprint=world.fingerprint(), splits=splits)
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_json(), sort_keys=True), encoding="utf-8")
    world.save(out / "world.json")
    return manifest


@dataclass
class Dataset:
    manifest: Manifest
    splits: dict[str, list[Sample]]
    world: Optional[World] = None

    @property
    def mode(self) -> str:
        return self.manifest.mode


def load_dataset(path: str | Path, world: Optional[World] = None) -> Dataset:
    """Load a generated dataset; round-trips bit-exactly against generation."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    bin_path = root / "samples.bin"
    if not manifest_path.exists():
        raise DatasetFormatError(f"missing manifest: {manifest_path}")
    if not bin_path.exists():
        raise DatasetFormatError(f"missing sample file: {bin_path}")
    raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    if int(raw.get("version", -1)) != FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported dataset version {raw.get('version')!r}, "
            f"expected {FORMAT_VERSION}")
    manifest = Manifest.from_json(raw)
    if world is not None and world.fingerprint() != manifest.world_fingerprint:
        raise DatasetFormatError("world fingerprint does not match manifest")

    loaded_world = world
    if loaded_world is None and (root / "world.json").exists():
        loaded_world = World.load(root / "world.json")
        if loaded_world.fingerprint() != manifest.world_fingerprint:
            raise DatasetFormatError("world.json does not match manifest fingerprint")

    splits: dict[str, list[Sample]] = {}
    with open(bin_path, "rb") as fh:
        for name, records in manifest.splits.items():
            samples = []
            for rec in records:
                fh.seek(rec.offset)
                s = _read_sample(fh)
                if s.num_frames != rec.num_frames:
                    raise DatasetFormatError(
                        f"record {rec.id}: frame count mismatch between "
                        f"manifest and sample header")
                samples.append(s)
            splits[name] = samples
    return Dataset(manifest=manifest, splits=splits, world=loaded_world)
