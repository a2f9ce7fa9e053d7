"""Training utterances, teacher preparation, crop batching and a synthetic corpus."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from .config import CodecConfig, TrainConfig
from .distill import expand_to_frames, mock_teacher, onehot_teacher
from .io import (
    AlignmentTier,
    TeacherEmbeddings,
    Waveform,
    load_teacher_embeddings,
    load_waveform,
    match_frames,
    parse_alignment,
    tier_of,
)

logger = logging.getLogger(__name__)


@dataclass
class Utterance:
    uid: str
    wav: Waveform
    speaker: str = "spk0"
    words: Optional[AlignmentTier] = None
    phones: Optional[AlignmentTier] = None
    phn_teacher: Optional[np.ndarray] = None
    lex_teacher: Optional[np.ndarray] = None
    lex_mask: Optional[np.ndarray] = None
    teacher_files: Dict[str, TeacherEmbeddings] = field(default_factory=dict)

    def num_frames(self, cfg: CodecConfig) -> int:
        return len(self.wav) // cfg.hop_length


def attach_teachers(
    utt: Utterance,
    cfg: CodecConfig,
    phonetic: Optional[object] = "mock",
    lexical: Optional[object] = "mock",
    seed: int = 0,
    phone_inventory: Optional[Sequence[str]] = None,
    onehot_noise: float = 0.1,
) -> Utterance:
    """Fill frame-aligned teacher targets on ``utt``.

    ``phonetic``/``lexical`` are a TeacherEmbeddings, ``"file"`` (use
    ``utt.teacher_files``), ``"mock"``, ``"onehot"`` (phonetic only, needs
    ``phone_inventory``) or None.
    """
    if phonetic == "file":
        phonetic = _teacher_file(utt, "phonetic")
    if lexical == "file":
        lexical = _teacher_file(utt, "lexical")
    n = utt.num_frames(cfg)
    rate = cfg.frame_rate
    if cfg.has_phonetic or cfg.kd_in_rvq:
        if isinstance(phonetic, TeacherEmbeddings):
            t = phonetic
        elif phonetic == "mock":
            t = mock_teacher("phonetic", seed, cfg.teacher_dim_phonetic, wav=utt.wav, frame_rate=rate)
        elif phonetic == "onehot":
            if utt.phones is None or phone_inventory is None:
                raise ValueError(f"{utt.uid}: one-hot teacher needs a phone tier and inventory")
            t = onehot_teacher(utt.phones, phone_inventory, n, rate, onehot_noise,
                               seed=hash_seed(seed, utt.uid))
        else:
            t = None
        if t is not None:
            if t.dim != cfg.teacher_dim_phonetic:
                raise ValueError(
                    f"{utt.uid}: phonetic teacher dim {t.dim} != configured {cfg.teacher_dim_phonetic}"
                )
            utt.phn_teacher = match_frames(t.values, n, t.frame_rate, rate if t.frame_rate else None)
    if cfg.has_lexical:
        if isinstance(lexical, TeacherEmbeddings):
            t = lexical
        elif lexical == "mock":
            if utt.words is None:
                raise ValueError(f"{utt.uid}: mock lexical teacher needs a word tier")
            t = mock_teacher("lexical", seed, cfg.teacher_dim_lexical, word_tier=utt.words)
        else:
            t = None
        if t is not None:
            if t.dim != cfg.teacher_dim_lexical:
                raise ValueError(
                    f"{utt.uid}: lexical teacher dim {t.dim} != configured {cfg.teacher_dim_lexical}"
                )
            utt.lex_teacher, utt.lex_mask = expand_to_frames(t, utt.words, n, rate)
    return utt


def _teacher_file(utt: Utterance, role: str) -> TeacherEmbeddings:
    if role not in utt.teacher_files:
        raise FileNotFoundError(f"{utt.uid}: no precomputed {role} teacher file")
    return utt.teacher_files[role]


def hash_seed(seed: int, *parts) -> int:
    digest = hashlib.sha256(repr((seed,) + parts).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def load_corpus(
    data_root,
    cfg: CodecConfig,
    alignments=None,
    teachers=None,
    speaker_sep: str = "_",
) -> List[Utterance]:
    """Read ``*.wav`` under ``data_root`` with optional alignments / teacher files.

    Alignments are ``<alignments>/<uid>.TextGrid`` or ``<uid>.txt``; teacher
    files ``<teachers>/<uid>.phonetic.hte`` and ``<uid>.lexical.hte``.
    The speaker id is the part of the uid before ``speaker_sep``.
    """
    root = Path(data_root)
    wavs = sorted(root.rglob("*.wav"))
    if not wavs:
        raise FileNotFoundError(f"no .wav files under {root}")
    out = []
    for path in wavs:
        uid = path.stem
        utt = Utterance(uid, load_waveform(path, cfg.sample_rate), speaker=uid.split(speaker_sep)[0])
        if alignments is not None:
            for ext in (".TextGrid", ".txt"):
                ali = Path(alignments) / f"{uid}{ext}"
                if ali.is_file():
                    tiers = parse_alignment(ali)
                    utt.words = tier_of(tiers, "word")
                    utt.phones = tier_of(tiers, "phone")
                    break
        if teachers is not None:
            for role in ("phonetic", "lexical"):
                f = Path(teachers) / f"{uid}.{role}.hte"
                if f.is_file():
                    utt.teacher_files[role] = load_teacher_embeddings(f)
        out.append(utt)
    return out


def crop_batch(
    dataset: Sequence[Utterance],
    cfg: CodecConfig,
    train: TrainConfig,
    rng: np.random.Generator,
) -> Dict[str, torch.Tensor]:
    """Frame-aligned random crops; teachers are cropped with the audio.

    Utterances shorter than the crop are zero-padded (lexical mask 0).
    """
    hop = cfg.hop_length
    crop_frames = max(2, int(round(train.crop_seconds * cfg.sample_rate)) // hop)
    audio, phn, lex, mask = [], [], [], []
    for _ in range(train.crops_per_batch):
        utt = dataset[int(rng.integers(len(dataset)))]
        n = utt.num_frames(cfg)
        start = int(rng.integers(0, n - crop_frames + 1)) if n > crop_frames else 0
        take = min(n, crop_frames)
        a = np.zeros(crop_frames * hop, dtype=np.float32)
        a[: take * hop] = utt.wav.samples[start * hop : (start + take) * hop]
        audio.append(a)
        if utt.phn_teacher is not None:
            t = np.zeros((crop_frames, utt.phn_teacher.shape[1]), dtype=np.float32)
            t[:take] = utt.phn_teacher[start : start + take]
            phn.append(t)
        if utt.lex_teacher is not None:
            t = np.zeros((crop_frames, utt.lex_teacher.shape[1]), dtype=np.float32)
            m = np.zeros(crop_frames, dtype=bool)
            t[:take] = utt.lex_teacher[start : start + take]
            m[:take] = utt.lex_mask[start : start + take]
            lex.append(t)
            mask.append(m)
    batch = {"audio": torch.as_tensor(np.stack(audio))}
    if phn and len(phn) == len(audio):
        batch["phn_teacher"] = torch.as_tensor(np.stack(phn))
    if lex and len(lex) == len(audio):
        batch["lex_teacher"] = torch.as_tensor(np.stack(lex))
        batch["lex_mask"] = torch.as_tensor(np.stack(mask))
    return batch


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


@dataclass
class SyntheticLanguage:
    """Phones are two-tone sinusoid units; words are fixed phone strings."""

    phones: List[str]
    formants: Dict[str, tuple]
    lexicon: Dict[str, List[str]]

    @classmethod
    def create(cls, n_phones: int = 8, n_words: int = 6, seed: int = 0, min_len: int = 2, max_len: int = 4):
        rng = np.random.default_rng(seed)
        phones = [f"p{i}" for i in range(n_phones)]
        low = np.linspace(300, 900, n_phones)
        high = np.linspace(1300, 2600, n_phones)
        rng.shuffle(high)
        formants = {p: (float(low[i]), float(high[i])) for i, p in enumerate(phones)}
        lexicon: Dict[str, List[str]] = {}
        while len(lexicon) < n_words:
            k = int(rng.integers(min_len, max_len + 1))
            seq = [phones[int(i)] for i in rng.choice(n_phones, size=k, replace=False)]
            if seq not in lexicon.values():
                lexicon[f"w{len(lexicon)}"] = seq
        return cls(phones, formants, lexicon)

    def utterance(
        self,
        uid: str,
        rng: np.random.Generator,
        sample_rate: int = 16000,
        n_words: int = 4,
        speaker: int = 0,
        phone_dur=(0.07, 0.12),
        gap=(0.0, 0.08),
        noise: float = 0.01,
        duration: Optional[float] = None,
    ) -> Utterance:
        """Render a random word sequence with its word and phone tiers."""
        spk = np.random.default_rng(1000 + speaker)
        pitch = float(spk.uniform(0.93, 1.07))
        tilt = float(spk.uniform(0.3, 0.7))
        samples: List[np.ndarray] = []
        t = 0.0
        word_iv, phone_iv = [], []
        words = list(self.lexicon)

        def silence(sec):
            nonlocal t
            n = int(round(sec * sample_rate))
            samples.append(np.zeros(n))
            t += n / sample_rate

        silence(rng.uniform(*gap) + 0.02)
        count = 0
        while True:
            if duration is None and count >= n_words:
                break
            word = words[int(rng.integers(len(words)))]
            w_start = t
            for ph in self.lexicon[word]:
                n = int(round(rng.uniform(*phone_dur) * sample_rate))
                tt = np.arange(n) / sample_rate
                f1, f2 = self.formants[ph]
                env = np.sin(np.pi * (np.arange(n) + 0.5) / n) ** 0.5
                amp = rng.uniform(0.25, 0.45)
                sig = np.sin(2 * np.pi * f1 * pitch * tt + rng.uniform(0, 2 * np.pi))
                sig += tilt * np.sin(2 * np.pi * f2 * pitch * tt + rng.uniform(0, 2 * np.pi))
                samples.append(amp * env * sig / (1 + tilt))
                phone_iv.append((t, t + n / sample_rate, ph))
                t += n / sample_rate
            word_iv.append((w_start, t, word))
            count += 1
            silence(rng.uniform(*gap))
            if duration is not None and t >= duration - 0.3:
                break
        x = np.concatenate(samples)
        if duration is not None:
            total = int(round(duration * sample_rate))
            x = np.pad(x, (0, max(0, total - x.size)))[:total]
            end = total / sample_rate
            word_iv = [(s, min(e, end), w) for s, e, w in word_iv if s < end and min(e, end) > s]
            phone_iv = [(s, min(e, end), p) for s, e, p in phone_iv if s < end and min(e, end) > s]
        x = x + noise * rng.standard_normal(x.size)
        x = np.clip(x, -1, 1).astype(np.float32)
        return Utterance(
            uid,
            Waveform(x, sample_rate),
            speaker=f"spk{speaker}",
            words=AlignmentTier("word", word_iv),
            phones=AlignmentTier("phone", phone_iv),
        )


def synthetic_corpus(
    n_utterances: int,
    seed: int = 0,
    sample_rate: int = 16000,
    n_speakers: int = 4,
    language: Optional[SyntheticLanguage] = None,
    **kwargs,
):
    """(language, utterances) with deterministic content for a given seed."""
    language = language or SyntheticLanguage.create(seed=seed)
    rng = np.random.default_rng(seed)
    utts = [
        language.utterance(f"spk{i % n_speakers}_utt{i:04d}", rng, sample_rate, speaker=i % n_speakers, **kwargs)
        for i in range(n_utterances)
    ]
    return language, utts
