"""K-means codebook over audio feature frames.

Stands in for a pretrained neural tokenizer: Lloyd's algorithm with
k-means++ seeding produces the centroid table, nearest-centroid lookup
emits 100Hz token streams, and align_tokens folds them into the
four-tokens-per-video-frame grid.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TOKENS_PER_FRAME = 4

CODEBOOK_FORMAT_VERSION = 1


@dataclass
class Codebook:
    centroids: np.ndarray   # (V, d_a) float32
    seed: int
    fit_distortion: float   # final mean squared distance on the fit data

    @property
    def n_centroids(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


def _assign(features: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per row (squared Euclidean, lowest index on ties)."""
    d2 = ((features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    idx = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
    return idx, d2[np.arange(len(idx)), idx]


def fit_codebook(features: np.ndarray, n_centroids: int, iters: int, seed: int) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding; distortion is non-increasing."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {features.shape}")
    n, _ = features.shape
    if n_centroids < 1:
        raise ValueError("need at least one centroid")
    if iters < 1:
        raise ValueError("need at least one iteration")
    if n < n_centroids:
        raise ValueError(f"{n} points cannot support {n_centroids} centroids")

    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centroids = np.empty((n_centroids, features.shape[1]), dtype=np.float64)
    centroids[0] = features[rng.integers(0, n)]
    closest = ((features - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, n_centroids):
        total = closest.sum()
        if total <= 0.0:
            # all remaining mass on duplicate points; pick any
            pick = int(rng.integers(0, n))
        else:
            pick = int(rng.choice(n, p=closest / total))
        centroids[i] = features[pick]
        closest = np.minimum(closest, ((features - centroids[i]) ** 2).sum(axis=1))

    distortion = float("inf")
    for _ in range(iters):
        assignment, sq_dist = _assign(features, centroids)
        distortion = float(sq_dist.mean())
        new_centroids = centroids.copy()
        for i in range(n_centroids):
            members = features[assignment == i]
            if len(members) > 0:
                new_centroids[i] = members.mean(axis=0)
        # re-seed empty clusters to the point farthest from its centroid
        for i in range(n_centroids):
            if not np.any(assignment == i):
                far = int(np.argmax(sq_dist))
                new_centroids[i] = features[far]
                sq_dist = sq_dist.copy()
                sq_dist[far] = 0.0
        centroids = new_centroids

    _, sq_dist = _assign(features, centroids)
    distortion = float(sq_dist.mean())
    return Codebook(centroids=centroids.astype(np.float32), seed=seed,
                    fit_distortion=distortion)


def fit_distortion_trace(features: np.ndarray, n_centroids: int, iters: int,
                         seed: int) -> list[float]:
    """Per-iteration mean distortion, for monotonicity checks."""
    trace = []
    for i in range(1, iters + 1):
        trace.append(fit_codebook(features, n_centroids, i, seed).fit_distortion)
    return trace


def quantize(codebook: Codebook, features: np.ndarray) -> np.ndarray:
    """Token per feature row: index of the nearest centroid."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != codebook.dim:
        raise ValueError(
            f"features shape {features.shape} does not match codebook dim {codebook.dim}")
    idx, _ = _assign(features, codebook.centroids.astype(np.float64))
    return idx.astype(np.int64)


def align_tokens(tokens: np.ndarray, num_frames: int,
                 pad_id: int) -> tuple[np.ndarray, int, int]:
    """Fold a 100Hz token stream into a (T, 4) grid for T video frames.

    Short streams are padded with ``pad_id``; long streams are truncated.
    Returns (grid, n_padded, n_truncated).
    """
    tokens = np.asarray(tokens, dtype=np.int64).ravel()
    if len(tokens) < 1 or num_frames < 1:
        raise ValueError("need at least one token and one frame")
    want = num_frames * TOKENS_PER_FRAME
    n_padded = max(0, want - len(tokens))
    n_truncated = max(0, len(tokens) - want)
    flat = np.full(want, pad_id, dtype=np.int64)
    flat[:min(want, len(tokens))] = tokens[:want]
    return flat.reshape(num_frames, TOKENS_PER_FRAME), n_padded, n_truncated


def save_codebook(codebook: Codebook, path: str | Path) -> None:
    """Length-prefixed JSON header followed by float32 LE centroid block."""
    header = json.dumps({
        "version": CODEBOOK_FORMAT_VERSION,
        "n_centroids": codebook.n_centroids,
        "dim": codebook.dim,
        "seed": codebook.seed,
        "distortion": codebook.fit_distortion,
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(codebook.centroids.astype("<f4").tobytes())


def load_codebook(path: str | Path) -> Codebook:
    with open(path, "rb") as fh:
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != CODEBOOK_FORMAT_VERSION:
            raise ValueError(f"unsupported codebook version {header.get('version')!r}")
        centroids = np.frombuffer(
            fh.read(4 * header["n_centroids"] * header["dim"]), dtype="<f4"
        ).reshape(header["n_centroids"], header["dim"]).copy()
    return Codebook(centroids=centroids, seed=int(header["seed"]),
                    fit_distortion=float(header["distortion"]))
