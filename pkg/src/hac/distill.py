"""Teacher targets and the time-axis cosine distillation loss."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from .io import AlignmentTier, TeacherEmbeddings, Waveform, frame_interval_index, match_frames


@dataclass(frozen=True)
class TeacherSpec:
    role: str
    dim: int
    source: str = "mock"
    granularity: str = "frame"

    def __post_init__(self):
        if self.role not in ("phonetic", "lexical"):
            raise ValueError(f"unknown teacher role {self.role!r}")
        if self.source not in ("precomputed_file", "mock"):
            raise ValueError(f"unknown teacher source {self.source!r}")
        if self.role == "phonetic" and self.granularity != "frame":
            raise ValueError("phonetic teachers are frame-granularity")
        if self.dim < 1:
            raise ValueError("teacher dim must be >= 1")


def time_cosine(student: torch.Tensor, teacher: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Per-dimension cosine similarity along the time axis.

    student, teacher: (..., F, D). mask: (..., F) of 0/1. Returns (..., D);
    a zero-norm column gives 0.
    """
    if mask is not None:
        m = mask.bool().unsqueeze(-1)
        student = torch.where(m, student, torch.zeros_like(student))
        teacher = torch.where(m, teacher, torch.zeros_like(teacher))
    dot = (student * teacher).sum(-2)
    norm = student.pow(2).sum(-2) * teacher.pow(2).sum(-2)
    ok = norm != 0  # NaN stays NaN so divergence is reported
    safe = torch.where(ok, norm, torch.ones_like(norm))
    return torch.where(ok, dot / safe.sqrt(), torch.zeros_like(dot))


def kd_cosine_loss(
    student: torch.Tensor,
    teacher: torch.Tensor,
    projection: Optional[torch.Tensor] = None,
    mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """-mean_d log sigmoid(cos_t(student @ projection [:, d], teacher[:, d])).

    ``student`` is (F, D) or (B, F, D); ``projection`` (D, D') maps it to the
    teacher's dimensionality (omit when already projected). Batched inputs
    are averaged over the batch. Rows with ``mask`` 0 are left out of the
    cosines; if every frame is masked the loss is 0.
    """
    if projection is not None:
        student = student @ projection
    if student.shape[-2] < 2:
        raise ValueError("the time-axis cosine needs at least 2 frames")
    if student.shape != teacher.shape:
        raise ValueError(f"student {tuple(student.shape)} vs teacher {tuple(teacher.shape)} after projection")
    cos = time_cosine(student, teacher.to(student.dtype), mask)
    per_item = F.softplus(-cos).mean(-1)
    if mask is not None:
        valid = (mask.reshape(-1, mask.shape[-1]).sum(-1) > 0).to(student.dtype)
        per_item = per_item.reshape(-1) * valid
        denom = valid.sum()
        return per_item.sum() / denom if denom > 0 else per_item.sum() * 0.0
    return per_item.mean()


def avg_layers(layers: Sequence[np.ndarray]) -> np.ndarray:
    if len(layers) == 0:
        raise ValueError("need at least one layer")
    shape = np.shape(layers[0])
    for m in layers[1:]:
        if np.shape(m) != shape:
            raise ValueError(f"layer shapes differ: {shape} vs {np.shape(m)}")
    return np.mean(np.stack([np.asarray(m, dtype=np.float64) for m in layers]), axis=0)


def expand_to_frames(
    teacher: TeacherEmbeddings,
    word_tier: Optional[AlignmentTier],
    num_frames: int,
    frame_rate: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Frame-level lexical targets and a validity mask.

    Word rows go to the frames whose centers fall inside the word; other
    frames get zeros and mask 0. Utterance rows broadcast to every frame;
    frame rows are resampled to the codec frame rate.
    """
    if teacher.granularity == "utterance":
        return np.repeat(teacher.values, num_frames, axis=0), np.ones(num_frames, dtype=bool)
    if teacher.granularity == "frame":
        vals = match_frames(teacher.values, num_frames, teacher.frame_rate, frame_rate if teacher.frame_rate else None)
        return vals, np.ones(num_frames, dtype=bool)
    if word_tier is None:
        raise ValueError("word-granularity teachers need a word tier")
    if teacher.rows != len(word_tier):
        raise ValueError(f"{teacher.rows} teacher rows for {len(word_tier)} word intervals")
    idx = frame_interval_index(word_tier, frame_rate, num_frames)
    out = np.zeros((num_frames, teacher.dim), dtype=np.float32)
    mask = idx >= 0
    out[mask] = teacher.values[idx[mask]]
    return out, mask


# ---------------------------------------------------------------------------
# mock teachers
# ---------------------------------------------------------------------------


def _label_rng(label: str, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def log_mel_frames(wav: Waveform, frame_rate: float, n_mels: int = 40) -> np.ndarray:
    """(F, n_mels) log-mel features with one column per codec frame."""
    from .spectral import mel_filterbank

    hop = int(round(wav.sample_rate / frame_rate))
    n_frames = len(wav) // hop
    n_fft = 1 << (2 * hop - 1).bit_length()
    x = np.pad(wav.samples.astype(np.float64), (n_fft // 2, n_fft // 2))
    win = np.hanning(n_fft)
    frames = np.stack([x[i * hop + hop // 2 : i * hop + hop // 2 + n_fft] for i in range(n_frames)])
    mag = np.abs(np.fft.rfft(frames * win, axis=-1))
    mel = mag @ mel_filterbank(wav.sample_rate, n_fft, n_mels).T
    return np.log(mel + 1e-5)


def mock_teacher(
    role: str,
    seed: int,
    dim: int,
    wav: Optional[Waveform] = None,
    frame_rate: Optional[float] = None,
    word_tier: Optional[AlignmentTier] = None,
    n_mels: int = 40,
) -> TeacherEmbeddings:
    """Deterministic stand-ins for pretrained teachers.

    phonetic: a seeded random linear map of log-mel features at ``frame_rate``.
    lexical: a seeded hash embedding of each word label in ``word_tier``.
    """
    if role == "phonetic":
        if wav is None or frame_rate is None:
            raise ValueError("phonetic mock teacher needs audio and a frame rate")
        feats = log_mel_frames(wav, frame_rate, n_mels)
        proj = np.random.default_rng(seed).standard_normal((n_mels, dim)) / np.sqrt(n_mels)
        return TeacherEmbeddings("frame", dim, (feats @ proj).astype(np.float32), frame_rate)
    if role == "lexical":
        if word_tier is None:
            raise ValueError("lexical mock teacher needs a word tier")
        rows = [_label_rng(label, seed).standard_normal(dim) for label in word_tier.labels]
        values = np.stack(rows) if rows else np.zeros((0, dim))
        return TeacherEmbeddings("word", dim, values.astype(np.float32))
    raise ValueError(f"unknown teacher role {role!r}")


def onehot_teacher(
    phone_tier: AlignmentTier,
    inventory: Sequence[str],
    num_frames: int,
    frame_rate: float,
    noise: float = 0.1,
    seed: int = 0,
) -> TeacherEmbeddings:
    """Noisy phoneme one-hots per frame (silence frames are all-zero plus noise)."""
    idx = frame_interval_index(phone_tier, frame_rate, num_frames)
    pos = {p: i for i, p in enumerate(inventory)}
    labels = phone_tier.labels
    out = np.zeros((num_frames, len(inventory)), dtype=np.float64)
    for f, i in enumerate(idx):
        if i >= 0 and labels[i] in pos:
            out[f, pos[labels[i]]] = 1.0
    out += noise * np.random.default_rng(seed).standard_normal(out.shape)
    return TeacherEmbeddings("frame", len(inventory), out.astype(np.float32), frame_rate)
