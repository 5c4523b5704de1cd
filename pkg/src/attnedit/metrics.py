"""Music-coherence metrics between a source and an edited generation.

The text/audio similarity embeddings are deterministic stand-ins for a
contrastive text-audio model; they are not CLAP scores and reports say so.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .codec import FNV_OFFSET, FNV_PRIME, FeatureFrames, TokenGrid, decode_features
from .tensor_ops import Prng
from .text import Prompt

BEAT_THRESHOLD = 0.5
REFRACTORY_S = 0.100
RHYTHM_TOLERANCE_S = 0.070
EMBED_DIM = 32
EMBEDDING_NOTE = "similarities use deterministic stand-in embeddings, not CLAP"


def melody_accuracy(src: FeatureFrames, edit: FeatureFrames) -> float:
    a, b = np.asarray(src.pitch_class), np.asarray(edit.pitch_class)
    if a.shape != b.shape:
        raise ValueError(f"frame counts differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("no frames")
    return float(np.count_nonzero(a == b)) / a.size


def pearson(x, y) -> float:
    """Sample Pearson r; NaN when either input has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least two frames")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return math.nan
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def dynamics_correlation(src: FeatureFrames, edit: FeatureFrames) -> float:
    return pearson(src.dynamics, edit.dynamics)


def detect_beats(frames: FeatureFrames, threshold: float = BEAT_THRESHOLD,
                 refractory: float = REFRACTORY_S) -> list[float]:
    """Peak-pick beat times (seconds) from the beat probability curve.

    A frame is a peak when it is at least ``threshold``, strictly above its
    left neighbour and not below its right one. Peaks closer than
    ``refractory`` seconds to the last kept beat are dropped.
    """
    b = np.asarray(frames.beat_prob, dtype=np.float64)
    beats: list[float] = []
    for t in range(b.size):
        v = b[t]
        if v < threshold:
            continue
        if t > 0 and not v > b[t - 1]:
            continue
        if t + 1 < b.size and v < b[t + 1]:
            continue
        ts = t / frames.frame_rate
        if beats and ts - beats[-1] < refractory:
            continue
        beats.append(ts)
    return beats


def rhythm_f1(reference, estimated, tolerance: float = RHYTHM_TOLERANCE_S) -> float:
    """Beat F-measure with one-to-one matching inside ``|dt| < tolerance``.

    References are visited in time order and take the earliest unmatched
    estimate inside the window.
    """
    ref = sorted(reference)
    est = sorted(estimated)
    if not ref and not est:
        return 1.0
    if not ref or not est:
        return 0.0
    matches = 0
    start = 0
    used = [False] * len(est)
    for r in ref:
        while start < len(est) and est[start] <= r - tolerance:
            start += 1
        for e in range(start, len(est)):
            if est[e] - r >= tolerance:
                break
            if not used[e] and abs(est[e] - r) < tolerance:
                used[e] = True
                matches += 1
                break
    return 2.0 * matches / (len(ref) + len(est))


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def _autocorr(x: np.ndarray, lags) -> np.ndarray:
    d = x - x.mean()
    denom = float(d @ d)
    out = np.zeros(len(lags))
    if denom == 0.0:
        return out
    for n, lag in enumerate(lags):
        if lag < x.size:
            out[n] = float(d[:-lag] @ d[lag:]) / denom
    return out


def embed_audio(frames: FeatureFrames) -> np.ndarray:
    """32-dim unit vector: pitch-class histogram (12), dynamics histogram (8),
    beat autocorrelation at lags 1..8 (8), and mean/std of dynamics and beat
    probability (4)."""
    pitch = np.bincount(np.asarray(frames.pitch_class, dtype=np.int64), minlength=12)[:12] / len(frames)
    dyn = np.asarray(frames.dynamics, dtype=np.float64)
    beat = np.asarray(frames.beat_prob, dtype=np.float64)
    dyn_hist = np.histogram(dyn, bins=8, range=(0.0, 1.0))[0] / len(frames)
    lags = _autocorr(beat, range(1, 9))
    moments = np.array([dyn.mean(), dyn.std(), beat.mean(), beat.std()])
    return _unit(np.concatenate([pitch, dyn_hist, lags, moments]))


def _word_seed(word: str) -> int:
    h = FNV_OFFSET
    for byte in word.encode("utf-8"):
        h = ((h ^ byte) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def embed_text(prompt: Prompt) -> np.ndarray:
    """Sum of per-word Gaussian vectors seeded by the word's FNV-1a hash."""
    v = np.zeros(EMBED_DIM)
    for word in prompt.words:
        v += Prng(_word_seed(word)).normals(EMBED_DIM)
    return _unit(v)


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch {u.shape} vs {v.shape}")
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("zero-norm vector")
    return min(1.0, max(-1.0, float(u @ v) / (nu * nv)))


@dataclass(frozen=True)
class MetricsReport:
    melody_accuracy: float
    dynamics_correlation: float
    rhythm_f1: float
    a2a_similarity: float
    t2a_similarity_source: float
    t2a_similarity_edited: float

    FIELDS = ("melody_accuracy", "dynamics_correlation", "rhythm_f1",
              "a2a_similarity", "t2a_similarity_source", "t2a_similarity_edited")

    @property
    def degenerate(self) -> bool:
        return any(math.isnan(getattr(self, f)) for f in self.FIELDS)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        # NaN is emitted as null so the output stays valid JSON
        return json.dumps({k: (None if isinstance(v, float) and math.isnan(v) else v)
                           for k, v in self.to_dict().items()})

    @classmethod
    def from_dict(cls, obj: dict) -> "MetricsReport":
        return cls(**{f: (math.nan if obj[f] is None else float(obj[f])) for f in cls.FIELDS})


def similarity_triplet(source: TokenGrid, edited: TokenGrid, p: Prompt, p_star: Prompt):
    """``(a2a, t2a_source, t2a_edited)`` for one source/edited pair."""
    audio_src = embed_audio(decode_features(source))
    audio_edit = embed_audio(decode_features(edited))
    return (
        cosine_similarity(audio_src, audio_edit),
        cosine_similarity(embed_text(p), audio_edit),
        cosine_similarity(embed_text(p_star), audio_edit),
    )


def evaluate(source: TokenGrid, edited: TokenGrid, p: Prompt, p_star: Prompt) -> MetricsReport:
    fs = decode_features(source)
    fe = decode_features(edited)
    a2a, t2a_src, t2a_edit = similarity_triplet(source, edited, p, p_star)
    return MetricsReport(
        melody_accuracy=melody_accuracy(fs, fe),
        dynamics_correlation=dynamics_correlation(fs, fe),
        rhythm_f1=rhythm_f1(detect_beats(fs), detect_beats(fe)),
        a2a_similarity=a2a,
        t2a_similarity_source=t2a_src,
        t2a_similarity_edited=t2a_edit,
    )
