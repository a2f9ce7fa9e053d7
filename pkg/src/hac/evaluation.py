"""ABX discrimination, PNMI, word-detector F1 and reconstruction metrics."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .io import SILENCE, AlignmentTier, frame_interval_index
from .spectral import log_mel_l1, log_stft_l1

# fixed so Mel-D / STFT-D values are comparable across runs
MEL_DISTANCE_WINDOWS = (32, 64, 128, 256, 512, 1024, 2048)
MEL_DISTANCE_BINS = (5, 10, 20, 40, 80, 160, 320)
STFT_DISTANCE_WINDOWS = (2048, 512)
THRESHOLDS = tuple(np.round(np.arange(1, 20) * 0.05, 2))


# ---------------------------------------------------------------------------
# DTW
# ---------------------------------------------------------------------------


def frame_distances(a: np.ndarray, b: np.ndarray, metric: str = "angular") -> np.ndarray:
    """Pairwise frame distances, shape (len(a), len(b)).

    angular: angle between the vectors divided by pi (0 for two zero
    vectors, 0.5 when only one is zero). euclidean: L2. hamming: 0/1
    inequality of integer codes.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if metric == "euclidean":
        return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    if metric == "hamming":
        return np.any(a[:, None, :] != b[None, :, :], axis=-1).astype(np.float64)
    if metric != "angular":
        raise ValueError(f"unknown frame metric {metric!r}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ua = np.divide(a, na[:, None], out=np.zeros_like(a), where=na[:, None] > 0)
    ub = np.divide(b, nb[:, None], out=np.zeros_like(b), where=nb[:, None] > 0)
    diff = np.linalg.norm(ua[:, None, :] - ub[None, :, :], axis=-1)
    summ = np.linalg.norm(ua[:, None, :] + ub[None, :, :], axis=-1)
    ang = 2.0 * np.arctan2(diff, summ) / np.pi
    zero_a = na == 0
    zero_b = nb == 0
    ang[zero_a[:, None] ^ zero_b[None, :]] = 0.5
    ang[zero_a[:, None] & zero_b[None, :]] = 0.0
    return ang


def dtw_distance(a, b, frame_metric: str = "angular") -> float:
    """Minimum summed frame distance over monotone alignments, per path step.

    Steps are (1,0), (0,1), (1,1). Among equal-cost paths the shortest is
    used for the normalisation.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("dtw on an empty sequence")
    cost = frame_distances(a, b, frame_metric)
    n, m = cost.shape
    acc = np.full((n, m), np.inf)
    length = np.zeros((n, m), dtype=np.int64)
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                acc[0, 0] = cost[0, 0]
                length[0, 0] = 1
                continue
            best, best_len = np.inf, 0
            for pi, pj in ((i - 1, j - 1), (i - 1, j), (i, j - 1)):
                if pi < 0 or pj < 0:
                    continue
                c, l = acc[pi, pj], length[pi, pj]
                if c < best or (c == best and l < best_len):
                    best, best_len = c, l
            acc[i, j] = best + cost[i, j]
            length[i, j] = best_len + 1
    return float(acc[-1, -1] / length[-1, -1])


# ---------------------------------------------------------------------------
# ABX
# ---------------------------------------------------------------------------


@dataclass
class AbxItem:
    features: np.ndarray
    label: str
    speaker: Hashable
    context: Optional[Tuple[str, str]] = None

    def category(self, mode: str):
        if mode == "CI":
            return self.label
        if self.context is None:
            raise ValueError("context-dependent ABX needs items with a phone context")
        return (self.context[0], self.label, self.context[1])


def _valid_triple(items, a, b, x, mode, pairing) -> bool:
    A, B, X = items[a], items[b], items[x]
    if x == a or A.label != X.label or A.label == B.label:
        return False
    if mode == "CD" and not (A.context == B.context == X.context):
        return False
    if pairing == "within_speaker":
        return A.speaker == B.speaker == X.speaker
    if pairing == "across_speaker":
        return A.speaker == B.speaker and X.speaker != A.speaker
    if pairing == "any":
        return True
    raise ValueError(f"unknown pairing {pairing!r}")


def abx_scores(items: Sequence[AbxItem], mode: str = "CI", pairing: str = "within_speaker",
               frame_metric: str = "angular") -> Dict[tuple, float]:
    """Mean ABX error per ordered (category of A/X, category of B) pair."""
    if mode not in ("CI", "CD"):
        raise ValueError(f"mode must be CI or CD, got {mode!r}")
    n = len(items)
    cache: Dict[Tuple[int, int], float] = {}

    def dist(i, j):
        key = (i, j) if i <= j else (j, i)
        if key not in cache:
            cache[key] = dtw_distance(items[key[0]].features, items[key[1]].features, frame_metric)
        return cache[key]

    by_cat = defaultdict(list)
    for i, it in enumerate(items):
        by_cat[it.category(mode)].append(i)
    sums: Dict[tuple, float] = defaultdict(float)
    counts: Dict[tuple, int] = defaultdict(int)
    for cat_a, members in by_cat.items():
        if len(members) < 2:
            continue
        for cat_b, others in by_cat.items():
            if cat_b == cat_a:
                continue
            for a in members:
                for x in members:
                    for b in others:
                        if not _valid_triple(items, a, b, x, mode, pairing):
                            continue
                        dxa, dxb = dist(x, a), dist(x, b)
                        score = 1.0 if dxb < dxa else (0.5 if dxb == dxa else 0.0)
                        sums[(cat_a, cat_b)] += score
                        counts[(cat_a, cat_b)] += 1
    return {k: sums[k] / counts[k] for k in counts}


def abx_error(items: Sequence[AbxItem], mode: str = "CI", pairing: str = "within_speaker",
              frame_metric: str = "angular") -> float:
    """ABX error rate: triples averaged within ordered category pairs, then over pairs."""
    sizes = defaultdict(int)
    for it in items:
        sizes[it.category(mode)] += 1
    if len(sizes) < 2 or max(sizes.values()) < 2:
        raise ValueError("ABX needs two categories with at least two items in one")
    scores = abx_scores(items, mode, pairing, frame_metric)
    if not scores:
        raise ValueError(f"no valid ({mode}, {pairing}) ABX triples in the item set")
    return math.fsum(scores.values()) / len(scores)


def abx_items_from_alignment(
    features: np.ndarray,
    phone_tier: AlignmentTier,
    frame_rate: float,
    speaker: Hashable,
) -> List[AbxItem]:
    """One item per phone interval; context = neighbouring phone labels."""
    idx = frame_interval_index(phone_tier, frame_rate, features.shape[0])
    labels = phone_tier.labels
    items = []
    for k, label in enumerate(labels):
        rows = np.nonzero(idx == k)[0]
        if rows.size == 0:
            continue
        prev = labels[k - 1] if k > 0 else SILENCE
        nxt = labels[k + 1] if k + 1 < len(labels) else SILENCE
        items.append(AbxItem(features[rows], label, speaker, (prev, nxt)))
    return items


def token_features(codes: np.ndarray, entries: Optional[np.ndarray] = None, codebook_size: Optional[int] = None):
    """Frame features for ABX: codebook entries when given, else one-hots."""
    codes = np.asarray(codes, dtype=np.int64)
    if entries is not None:
        return np.asarray(entries, dtype=np.float64)[codes]
    k = int(codebook_size if codebook_size is not None else codes.max() + 1)
    return np.eye(k)[codes]


# ---------------------------------------------------------------------------
# PNMI
# ---------------------------------------------------------------------------


def pnmi_from_counts(counts: np.ndarray) -> float:
    """I(Y; Q) / H(Y) from a (phone x token) joint count table, plug-in estimates."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty count table")
    p = counts / total
    py = p.sum(1)
    pq = p.sum(0)
    nz = p > 0
    mi = float((p[nz] * np.log2(p[nz] / np.outer(py, pq)[nz])).sum())
    hy = float(-(py[py > 0] * np.log2(py[py > 0])).sum())
    if hy <= 0:
        return 0.0
    return min(1.0, max(0.0, mi / hy))


def pnmi(phone_labels, tokens) -> float:
    """Phone-normalised mutual information pooled over all utterances.

    ``phone_labels``/``tokens`` are per-frame sequences or lists of them.
    Frames labelled ``<sil>`` are excluded.
    """
    if len(phone_labels) and not isinstance(phone_labels[0], str) and np.ndim(phone_labels[0]) == 1:
        labs = [l for seq in phone_labels for l in seq]
        toks = [int(t) for seq in tokens for t in np.asarray(seq).reshape(-1)]
        for a, b in zip(phone_labels, tokens):
            if len(a) != len(b):
                raise ValueError(f"label/token length mismatch: {len(a)} vs {len(b)}")
    else:
        labs = list(phone_labels)
        toks = [int(t) for t in np.asarray(tokens).reshape(-1)]
        if len(labs) != len(toks):
            raise ValueError(f"label/token length mismatch: {len(labs)} vs {len(toks)}")
    keep = [(l, t) for l, t in zip(labs, toks) if l != SILENCE]
    if not keep:
        raise ValueError("all frames are silence")
    phones = {l: i for i, l in enumerate(sorted({l for l, _ in keep}))}
    tokmap = {t: i for i, t in enumerate(sorted({t for _, t in keep}))}
    table = np.zeros((len(phones), len(tokmap)))
    for l, t in keep:
        table[phones[l], tokmap[t]] += 1
    return pnmi_from_counts(table)


# ---------------------------------------------------------------------------
# word detectors
# ---------------------------------------------------------------------------


@dataclass
class WordDetectorRow:
    word: str
    token: int
    precision: float
    recall: float
    f1: float
    runs_on_word: int
    runs_of_token: int
    occurrences: int
    occurrences_hit: int


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def token_runs(codes: np.ndarray) -> List[Tuple[int, int, int]]:
    """Maximal runs of identical codes as (code, start, end_exclusive)."""
    codes = np.asarray(codes).reshape(-1)
    if codes.size == 0:
        return []
    change = np.nonzero(np.diff(codes))[0] + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [codes.size]])
    return [(int(codes[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def word_detector_f1(
    tokens: Sequence[np.ndarray],
    word_tiers: Sequence[AlignmentTier],
    frame_rate: float,
    thresholds: Sequence[float] = THRESHOLDS,
):
    """Precision/recall/F1 of every (word, token) pair with co-occurrences.

    Returns (rows, curve) where ``curve`` maps each threshold to the number
    of tokens whose best-word F1 reaches it.
    """
    if word_tiers is None or len(word_tiers) != len(tokens):
        raise ValueError("need one word tier per token sequence")
    occurrences: Dict[str, int] = defaultdict(int)
    hits: Dict[Tuple[str, int], int] = defaultdict(int)
    runs_on: Dict[Tuple[str, int], int] = defaultdict(int)
    runs_total: Dict[int, int] = defaultdict(int)
    for codes, tier in zip(tokens, word_tiers):
        codes = np.asarray(codes).reshape(-1)
        labels = tier.labels
        for lab in labels:
            if lab != SILENCE:
                occurrences[lab] += 1
        idx = frame_interval_index(tier, frame_rate, codes.size)
        hit_here = set()
        for code, s, e in token_runs(codes):
            owners = idx[s:e]
            covered = owners[owners >= 0]
            if covered.size == 0:
                continue
            vals, cnt = np.unique(covered, return_counts=True)
            best = vals[np.argmax(cnt)]  # np.unique sorts, argmax takes the earliest on ties
            if (owners < 0).sum() > cnt.max() or labels[best] == SILENCE:
                continue
            word = labels[best]
            runs_on[(word, code)] += 1
            runs_total[code] += 1
            hit_here.add((int(best), word, code))
        for _, word, code in hit_here:
            hits[(word, code)] += 1
    rows = []
    for (word, code), n_on in sorted(runs_on.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        p = n_on / runs_total[code]
        r = hits[(word, code)] / occurrences[word]
        rows.append(WordDetectorRow(word, code, p, r, f1_score(p, r), n_on, runs_total[code],
                                    occurrences[word], hits[(word, code)]))
    best_f1: Dict[int, float] = {}
    for row in rows:
        best_f1[row.token] = max(best_f1.get(row.token, 0.0), row.f1)
    curve = {float(t): int(sum(1 for v in best_f1.values() if v >= t - 1e-12)) for t in thresholds}
    return rows, curve


# ---------------------------------------------------------------------------
# reconstruction metrics
# ---------------------------------------------------------------------------


def si_sdr(reference, estimate, max_db: float = 100.0) -> float:
    """Scale-invariant SDR in dB, clipped to [-max_db, max_db]."""
    x = np.asarray(getattr(reference, "samples", reference), dtype=np.float64)
    y = np.asarray(getattr(estimate, "samples", estimate), dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    ref_energy = float(x @ x)
    if ref_energy == 0:
        raise ValueError("SI-SDR reference is all zeros")
    s = (float(y @ x) / ref_energy) * x
    target = float(s @ s)
    noise = float((y - s) @ (y - s))
    if target == 0:
        return -max_db
    if noise == 0:
        return max_db
    return float(np.clip(10.0 * math.log10(target / noise), -max_db, max_db))


def _as_tensor(w):
    return torch.as_tensor(np.asarray(getattr(w, "samples", w), dtype=np.float64))


def mel_distance(x, y, sample_rate: int, windows=MEL_DISTANCE_WINDOWS, n_mels=MEL_DISTANCE_BINS) -> float:
    """Sum over scales of the mean L1 between log10-mel spectrograms."""
    a, b = _as_tensor(x), _as_tensor(y)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    with torch.no_grad():
        return float(sum(log_mel_l1(a, b, sample_rate, w, m) for w, m in zip(windows, n_mels)))


def stft_distance(x, y, windows=STFT_DISTANCE_WINDOWS) -> float:
    """Sum over scales of the mean L1 between log10-magnitude spectrograms."""
    a, b = _as_tensor(x), _as_tensor(y)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    with torch.no_grad():
        return float(sum(log_stft_l1(a, b, w) for w in windows))
