"""Audio, alignment, token-stream and teacher-embedding I/O.

File formats are documented in ``docs/formats.md``.
"""

from __future__ import annotations

import logging
import math
import re
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SILENCE = "<sil>"

TOKEN_MAGIC = b"HACT"
TOKEN_VERSION = 1
TEACHER_MAGIC = b"HACE"
TEACHER_VERSION = 1

GRANULARITIES = ("frame", "word", "utterance")

_TIER_KINDS = {
    "word": "word",
    "words": "word",
    "phone": "phone",
    "phones": "phone",
}


class FormatError(ValueError):
    """A file does not conform to its documented format."""


class AlignmentError(ValueError):
    """An alignment tier violates its interval invariants."""


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValueError(f"expected mono samples, got shape {self.samples.shape}")
        if self.samples.size == 0:
            raise ValueError("waveform is empty")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def resample(samples: np.ndarray, orig_rate: int, target_rate: int) -> np.ndarray:
    if orig_rate == target_rate:
        return samples
    g = math.gcd(orig_rate, target_rate)
    return resample_poly(samples, target_rate // g, orig_rate // g).astype(np.float32)


def load_waveform(path: PathLike, target_rate: Optional[int] = None) -> Waveform:
    """Read a mono WAV file as float samples in [-1, 1].

    Parameters
    ----------
    path : str or Path
        16/32-bit integer, 8-bit unsigned or float WAV.
    target_rate : int, optional
        Resample to this rate when it differs from the file's rate.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError, struct.error, UnboundLocalError) as exc:
        # scipy raises UnboundLocalError when no fmt/data chunk is present
        raise FormatError(f"{path}: unreadable WAV header ({exc})") from exc
    if data.ndim > 1:
        if data.shape[1] != 1:
            raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
        data = data[:, 0]
    if data.dtype == np.uint8:
        samples = (data.astype(np.float32) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.integer):
        samples = data.astype(np.float32) / float(np.iinfo(data.dtype).max + 1)
    else:
        samples = np.clip(data.astype(np.float32), -1.0, 1.0)
    if target_rate is not None and target_rate != rate:
        samples = np.clip(resample(samples, rate, target_rate), -1.0, 1.0)
        rate = target_rate
    return Waveform(samples, rate)


def save_waveform(wav: Waveform, path: PathLike) -> None:
    """Write 16-bit PCM."""
    pcm = np.round(np.clip(wav.samples, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(Path(path), wav.sample_rate, pcm)


# ---------------------------------------------------------------------------
# Alignments
# ---------------------------------------------------------------------------


@dataclass
class AlignmentTier:
    kind: str
    intervals: List[Tuple[float, float, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("word", "phone"):
            raise ValueError(f"unknown tier kind {self.kind!r}")
        ivs = sorted(
            ((float(s), float(e), str(lab)) for s, e, lab in self.intervals),
            key=lambda iv: iv[0],
        )
        for i, (start, end, label) in enumerate(ivs):
            if not start < end:
                raise AlignmentError(
                    f"{self.kind} tier: interval {i} has start {start} >= end {end}"
                )
            if not label:
                raise AlignmentError(f"{self.kind} tier: interval {i} has an empty label")
            if i > 0 and ivs[i - 1][1] > start + 1e-9:
                raise AlignmentError(f"{self.kind} tier: overlap at {start:g}s")
        self.intervals = ivs

    def __len__(self):
        return len(self.intervals)

    @property
    def labels(self) -> List[str]:
        return [lab for _, _, lab in self.intervals]


def _parse_simple(text: str, path: Path) -> List[AlignmentTier]:
    tiers: List[AlignmentTier] = []
    kind = None
    rows: List[Tuple[float, float, str]] = []
    skipping = False

    def flush():
        if kind is not None and not skipping:
            tiers.append(AlignmentTier(kind, rows))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("tier "):
            flush()
            name = line.split(None, 1)[1].strip()
            rows = []
            kind = _TIER_KINDS.get(name.lower())
            skipping = kind is None
            if skipping:
                logger.warning("%s:%d: skipping unknown tier %r", path, lineno, name)
                kind = "word"
            continue
        if kind is None:
            raise FormatError(f"{path}:{lineno}: interval before any 'tier' line")
        parts = line.split(None, 2)
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 'start end label'")
        try:
            rows.append((float(parts[0]), float(parts[1]), parts[2].strip()))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    flush()
    return tiers


_TG_TIER = re.compile(
    r'class\s*=\s*"IntervalTier"\s*name\s*=\s*"(?P<name>[^"]*)"(?P<body>.*?)(?=item\s*\[\d+\]\s*:|\Z)',
    re.S,
)
_TG_INTERVAL = re.compile(
    r'xmin\s*=\s*(?P<s>[-\d.eE+]+)\s*xmax\s*=\s*(?P<e>[-\d.eE+]+)\s*text\s*=\s*"(?P<t>(?:[^"]|"")*)"',
    re.S,
)


def _parse_textgrid(text: str, path: Path) -> List[AlignmentTier]:
    tiers = []
    for m in _TG_TIER.finditer(text):
        name = m.group("name")
        kind = _TIER_KINDS.get(name.lower())
        if kind is None:
            logger.warning("%s: skipping unknown tier %r", path, name)
            continue
        body = m.group("body")
        # drop the tier-level xmin/xmax header before "intervals: size"
        body = body[body.find("intervals") :] if "intervals" in body else body
        rows = []
        for iv in _TG_INTERVAL.finditer(body):
            label = iv.group("t").replace('""', '"').strip()
            if label:
                rows.append((float(iv.group("s")), float(iv.group("e")), label))
        tiers.append(AlignmentTier(kind, rows))
    return tiers


def parse_alignment(path: PathLike) -> List[AlignmentTier]:
    """Read word/phone interval tiers.

    Accepts the plain ``tier <name>`` / ``start end label`` format and Praat
    long-format TextGrids (as written by Montreal Forced Aligner). Empty
    TextGrid labels mark gaps and are dropped.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if "ooTextFile" in text[:200]:
        return _parse_textgrid(text, path)
    return _parse_simple(text, path)


def write_alignment(tiers: Iterable[AlignmentTier], path: PathLike) -> None:
    lines = []
    for tier in tiers:
        lines.append(f"tier {tier.kind}s")
        lines.extend(f"{s:.6f}\t{e:.6f}\t{lab}" for s, e, lab in tier.intervals)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def tier_of(tiers: Sequence[AlignmentTier], kind: str) -> Optional[AlignmentTier]:
    for tier in tiers:
        if tier.kind == kind:
            return tier
    return None


def frame_interval_index(tier: AlignmentTier, frame_rate: float, num_frames: int) -> np.ndarray:
    """Index of the interval containing each frame center, -1 where uncovered."""
    centers = (np.arange(num_frames) + 0.5) / float(frame_rate)
    if not tier.intervals:
        return np.full(num_frames, -1, dtype=np.int64)
    starts = np.array([s for s, _, _ in tier.intervals])
    ends = np.array([e for _, e, _ in tier.intervals])
    idx = np.searchsorted(starts, centers, side="right") - 1
    inside = (idx >= 0) & (centers < ends[np.clip(idx, 0, None)])
    return np.where(inside, idx, -1)


def align_to_frames(tier: AlignmentTier, frame_rate: float, num_frames: int) -> List[str]:
    """Label each frame with the interval containing its center time."""
    if frame_rate <= 0:
        raise ValueError("frame_rate must be positive")
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    idx = frame_interval_index(tier, frame_rate, num_frames)
    labels = tier.labels
    return [labels[i] if i >= 0 else SILENCE for i in idx]


# ---------------------------------------------------------------------------
# Token streams
# ---------------------------------------------------------------------------


def code_bits(codebook_size: int) -> int:
    """ceil(log2(K)) for K >= 1."""
    return (int(codebook_size) - 1).bit_length()


@dataclass
class TokenMatrix:
    frame_rate: Fraction
    layers: List[Tuple[str, int]]
    codes: np.ndarray

    def __post_init__(self):
        self.frame_rate = Fraction(self.frame_rate).limit_denominator(2**32 - 1)
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        self.layers = [(str(n), int(k)) for n, k in self.layers]
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.codes.ndim != 2 or self.codes.shape[1] != len(self.layers):
            raise ValueError(
                f"codes shape {self.codes.shape} does not match {len(self.layers)} layers"
            )
        if self.codes.shape[0] < 1:
            raise ValueError("token matrix needs at least one frame")
        for j, (name, k) in enumerate(self.layers):
            if k < 1:
                raise ValueError(f"layer {name}: codebook size must be >= 1")
            col = self.codes[:, j]
            if col.min() < 0 or col.max() >= k:
                raise ValueError(f"layer {name}: codes outside [0, {k})")

    @property
    def num_frames(self) -> int:
        return self.codes.shape[0]

    @property
    def layer_names(self) -> List[str]:
        return [n for n, _ in self.layers]

    def layer(self, name: str) -> np.ndarray:
        return self.codes[:, self.layer_names.index(name)]

    @property
    def bits_per_frame(self) -> int:
        return sum(code_bits(k) for _, k in self.layers)

    @property
    def bitrate(self) -> float:
        return float(self.bits_per_frame * self.frame_rate)

    def __eq__(self, other):
        if not isinstance(other, TokenMatrix):
            return NotImplemented
        return (
            self.frame_rate == other.frame_rate
            and self.layers == other.layers
            and np.array_equal(self.codes, other.codes)
        )


def pack_codes(codes: np.ndarray, widths: Sequence[int]) -> bytes:
    """Pack an F x L code matrix MSB-first, layer-major within each frame."""
    columns = []
    for j, w in enumerate(widths):
        if w == 0:
            continue
        shifts = np.arange(w - 1, -1, -1, dtype=np.int64)
        columns.append(((codes[:, j : j + 1] >> shifts) & 1).astype(np.uint8))
    if not columns:
        return b""
    bits = np.concatenate(columns, axis=1).reshape(-1)
    return np.packbits(bits).tobytes()


def unpack_codes(payload: bytes, widths: Sequence[int], num_frames: int) -> np.ndarray:
    total = sum(widths)
    codes = np.zeros((num_frames, len(widths)), dtype=np.int64)
    if total == 0:
        return codes
    need = math.ceil(total * num_frames / 8)
    if len(payload) < need:
        raise FormatError(f"truncated payload: {len(payload)} bytes, expected {need}")
    bits = np.unpackbits(np.frombuffer(payload[:need], dtype=np.uint8))
    bits = bits[: total * num_frames].reshape(num_frames, total).astype(np.int64)
    col = 0
    for j, w in enumerate(widths):
        if w == 0:
            continue
        weights = 1 << np.arange(w - 1, -1, -1, dtype=np.int64)
        codes[:, j] = bits[:, col : col + w] @ weights
        col += w
    return codes


def write_tokens(tokens: TokenMatrix, path: PathLike) -> None:
    header = bytearray(TOKEN_MAGIC)
    header += struct.pack(
        "<HIIHI",
        TOKEN_VERSION,
        tokens.frame_rate.numerator,
        tokens.frame_rate.denominator,
        len(tokens.layers),
        tokens.num_frames,
    )
    for name, k in tokens.layers:
        raw = name.encode("utf-8")
        header += struct.pack("<B", len(raw)) + raw + struct.pack("<I", k)
    widths = [code_bits(k) for _, k in tokens.layers]
    Path(path).write_bytes(bytes(header) + pack_codes(tokens.codes, widths))


def read_tokens(path: PathLike) -> TokenMatrix:
    data = Path(path).read_bytes()
    if data[:4] != TOKEN_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    try:
        version, num, den, n_layers, n_frames = struct.unpack_from("<HIIHI", data, 4)
        if version != TOKEN_VERSION:
            raise FormatError(f"{path}: unsupported token file version {version}")
        offset = 4 + struct.calcsize("<HIIHI")
        layers = []
        for _ in range(n_layers):
            (n,) = struct.unpack_from("<B", data, offset)
            name = data[offset + 1 : offset + 1 + n].decode("utf-8")
            (k,) = struct.unpack_from("<I", data, offset + 1 + n)
            layers.append((name, k))
            offset += 1 + n + 4
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if den == 0:
        raise FormatError(f"{path}: zero frame-rate denominator")
    widths = [code_bits(k) for _, k in layers]
    codes = unpack_codes(data[offset:], widths, n_frames)
    for j, (name, k) in enumerate(layers):
        bad = np.nonzero(codes[:, j] >= k)[0]
        if bad.size:
            raise FormatError(
                f"{path}: layer {name} frame {bad[0]}: code {codes[bad[0], j]} >= codebook size {k}"
            )
    return TokenMatrix(Fraction(num, den), layers, codes)


# ---------------------------------------------------------------------------
# Teacher embeddings
# ---------------------------------------------------------------------------


@dataclass
class TeacherEmbeddings:
    granularity: str
    dim: int
    values: np.ndarray
    frame_rate: Optional[float] = None

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("teacher values must be a 2-D matrix")
        if self.dim <= 0 or self.values.shape[1] != self.dim:
            raise ValueError(f"teacher dim {self.dim} does not match values {self.values.shape}")
        if self.granularity == "utterance" and self.values.shape[0] != 1:
            raise ValueError("utterance-granularity teachers have exactly one row")
        bad = np.argwhere(~np.isfinite(self.values))
        if bad.size:
            r, c = bad[0]
            raise ValueError(f"non-finite teacher value at row {r}, column {c}")

    @property
    def rows(self) -> int:
        return self.values.shape[0]


_TEACHER_HEADER = "<HBIId"


def save_teacher_embeddings(teacher: TeacherEmbeddings, path: PathLike) -> None:
    header = TEACHER_MAGIC + struct.pack(
        _TEACHER_HEADER,
        TEACHER_VERSION,
        GRANULARITIES.index(teacher.granularity),
        teacher.dim,
        teacher.rows,
        float(teacher.frame_rate or 0.0),
    )
    Path(path).write_bytes(header + teacher.values.astype("<f4").tobytes())


def load_teacher_embeddings(path: PathLike) -> TeacherEmbeddings:
    data = Path(path).read_bytes()
    if data[:4] != TEACHER_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    try:
        version, gran, dim, rows, rate = struct.unpack_from(_TEACHER_HEADER, data, 4)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if version != TEACHER_VERSION:
        raise FormatError(f"{path}: unsupported teacher file version {version}")
    if gran >= len(GRANULARITIES):
        raise FormatError(f"{path}: unknown granularity code {gran}")
    payload = data[4 + struct.calcsize(_TEACHER_HEADER) :]
    if len(payload) != rows * dim * 4:
        raise FormatError(
            f"{path}: payload of {len(payload)} bytes does not match declared {rows}x{dim} float32"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    granularity = GRANULARITIES[gran]
    try:
        return TeacherEmbeddings(granularity, dim, values.copy(), rate if rate > 0 else None)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def match_frames(
    values: np.ndarray,
    num_frames: int,
    src_rate: Optional[float] = None,
    dst_rate: Optional[float] = None,
) -> np.ndarray:
    """Nearest-frame resampling of a row sequence onto ``num_frames`` frames.

    Without explicit rates both sequences are assumed to span the same
    duration. Exact half-way cases go to the earlier source row.
    """
    rows = values.shape[0]
    if rows == num_frames and (src_rate is None or src_rate == dst_rate):
        return values
    if src_rate is None or dst_rate is None:
        src_rate, dst_rate = float(rows), float(num_frames)
    pos = (np.arange(num_frames) + 0.5) / dst_rate * src_rate - 0.5
    idx = np.clip(np.ceil(pos - 0.5).astype(np.int64), 0, rows - 1)
    return values[idx]
