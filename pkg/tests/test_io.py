import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from hac.config import get_preset
from hac.io import (
    SILENCE,
    AlignmentError,
    AlignmentTier,
    FormatError,
    TeacherEmbeddings,
    TokenMatrix,
    Waveform,
    align_to_frames,
    code_bits,
    load_teacher_embeddings,
    load_waveform,
    match_frames,
    parse_alignment,
    read_tokens,
    save_teacher_embeddings,
    save_waveform,
    write_alignment,
    write_tokens,
)


# -- waveform ---------------------------------------------------------------


def test_one_second_wav(tmp_path):
    path = tmp_path / "a.wav"
    wavfile.write(path, 16000, (np.sin(np.arange(16000) / 10) * 20000).astype(np.int16))
    wav = load_waveform(path)
    assert len(wav) == 16000
    assert wav.sample_rate == 16000
    assert np.abs(wav.samples).max() <= 1.0


def test_crop_length_38_seconds(tmp_path):
    path = tmp_path / "a.wav"
    wavfile.write(path, 16000, np.zeros(int(3.8 * 16000), dtype=np.int16))
    assert len(load_waveform(path)) == 60800


def test_silent_file_accepted(tmp_path):
    path = tmp_path / "z.wav"
    wavfile.write(path, 8000, np.zeros(800, dtype=np.float32))
    wav = load_waveform(path)
    assert not wav.samples.any()


def test_resample_on_load(tmp_path):
    path = tmp_path / "a.wav"
    wavfile.write(path, 8000, np.zeros(8000, dtype=np.int16))
    wav = load_waveform(path, target_rate=16000)
    assert wav.sample_rate == 16000 and len(wav) == 16000


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_waveform(tmp_path / "nope.wav")


def test_stereo_rejected(tmp_path):
    path = tmp_path / "s.wav"
    wavfile.write(path, 16000, np.zeros((100, 2), dtype=np.int16))
    with pytest.raises(ValueError, match="mono"):
        load_waveform(path)


def test_corrupt_header(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFF\x00\x00\x00\x00WAVEjunkjunk")
    with pytest.raises(FormatError):
        load_waveform(path)


def test_save_roundtrip(tmp_path):
    x = np.linspace(-0.5, 0.5, 321).astype(np.float32)
    save_waveform(Waveform(x, 16000), tmp_path / "o.wav")
    back = load_waveform(tmp_path / "o.wav")
    np.testing.assert_allclose(back.samples, x, atol=1e-4)


def test_waveform_invariants():
    with pytest.raises(ValueError):
        Waveform(np.array([np.nan]), 16000)
    with pytest.raises(ValueError):
        Waveform(np.zeros(3), 0)
    with pytest.raises(ValueError):
        Waveform(np.zeros(0), 16000)


# -- alignments -------------------------------------------------------------


def test_parse_simple_format(tmp_path):
    path = tmp_path / "u.txt"
    path.write_text("tier words\n0.0 0.5 the\n0.5 1.0 cat\ntier phones\n")
    tiers = parse_alignment(path)
    assert tiers[0].kind == "word" and len(tiers[0]) == 2
    assert tiers[0].labels == ["the", "cat"]
    assert tiers[1].kind == "phone" and len(tiers[1]) == 0


def test_overlap_rejected(tmp_path):
    path = tmp_path / "u.txt"
    path.write_text("tier words\n0.0 0.6 a\n0.5 1.0 b\n")
    with pytest.raises(AlignmentError, match="overlap at 0.5s"):
        parse_alignment(path)


def test_unknown_tier_skipped(tmp_path, caplog):
    path = tmp_path / "u.txt"
    path.write_text("tier speakers\n0 1 bob\ntier words\n0 1 hi\n")
    tiers = parse_alignment(path)
    assert [t.kind for t in tiers] == ["word"]
    assert "speakers" in caplog.text


def test_textgrid(tmp_path):
    tg = '''File type = "ooTextFile"
Object class = "TextGrid"

xmin = 0
xmax = 1.0
tiers? <exists>
size = 2
item []:
    item [1]:
        class = "IntervalTier"
        name = "words"
        xmin = 0
        xmax = 1.0
        intervals: size = 3
        intervals [1]:
            xmin = 0
            xmax = 0.2
            text = ""
        intervals [2]:
            xmin = 0.2
            xmax = 0.7
            text = "hello"
        intervals [3]:
            xmin = 0.7
            xmax = 1.0
            text = ""
    item [2]:
        class = "IntervalTier"
        name = "phones"
        xmin = 0
        xmax = 1.0
        intervals: size = 2
        intervals [1]:
            xmin = 0.2
            xmax = 0.4
            text = "HH"
        intervals [2]:
            xmin = 0.4
            xmax = 0.7
            text = "AH0"
'''
    path = tmp_path / "u.TextGrid"
    path.write_text(tg)
    words, phones = parse_alignment(path)
    assert words.intervals == [(0.2, 0.7, "hello")]
    assert phones.labels == ["HH", "AH0"]


def test_write_alignment_roundtrip(tmp_path):
    tiers = [AlignmentTier("word", [(0.0, 0.5, "a")]), AlignmentTier("phone", [(0.0, 0.25, "x"), (0.25, 0.5, "y")])]
    write_alignment(tiers, tmp_path / "a.txt")
    back = parse_alignment(tmp_path / "a.txt")
    assert [t.intervals for t in back] == [t.intervals for t in tiers]


def test_align_to_frames_examples():
    tier = AlignmentTier("word", [(0.0, 0.5, "a"), (0.5, 1.0, "b")])
    assert align_to_frames(tier, 4, 4) == ["a", "a", "b", "b"]
    assert align_to_frames(AlignmentTier("word", []), 4, 3) == [SILENCE] * 3
    # frame centers 0.125, 0.375; only the first lies in [0, 0.25)
    assert align_to_frames(AlignmentTier("phone", [(0.0, 0.25, "a")]), 4, 2) == ["a", SILENCE]


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0.01, 0.5), min_size=0, max_size=6),
    st.floats(1.0, 100.0),
    st.integers(1, 60),
)
def test_align_to_frames_total(durations, rate, n):
    t, ivs = 0.0, []
    for i, d in enumerate(durations):
        ivs.append((t, t + d, f"w{i}"))
        t += d + 0.05
    tier = AlignmentTier("word", ivs)
    labels = align_to_frames(tier, rate, n)
    assert len(labels) == n
    assert set(labels) <= set(tier.labels) | {SILENCE}


# -- tokens -----------------------------------------------------------------


def test_code_bits():
    assert [code_bits(k) for k in (1, 2, 3, 4, 1024, 1025, 16384)] == [0, 1, 2, 2, 10, 11, 14]


def test_full_preset_bitrate(tmp_path):
    cfg = get_preset("hac-14").codec
    assert cfg.bits_per_frame == 7 * 10 + 2 * 14 == 98
    assert cfg.frame_rate == 50
    tokens = TokenMatrix(cfg.frame_rate, cfg.token_layers, np.zeros((50, 9), dtype=int))
    assert tokens.bits_per_frame == 98
    assert tokens.bitrate == 4900
    write_tokens(tokens, tmp_path / "t.hact")
    header = 4 + struct.calcsize("<HIIHI") + sum(1 + len(n) + 4 for n, _ in cfg.token_layers)
    assert (tmp_path / "t.hact").stat().st_size == header + 98 * 50 // 8 + 1


def test_single_bit_payload(tmp_path):
    tokens = TokenMatrix(50, [("acoustic_1", 2)], np.array([[0]]))
    write_tokens(tokens, tmp_path / "t.hact")
    data = (tmp_path / "t.hact").read_bytes()
    header = 4 + struct.calcsize("<HIIHI") + 1 + len("acoustic_1") + 4
    assert len(data) == header + 1
    assert read_tokens(tmp_path / "t.hact") == tokens


def test_known_bit_layout(tmp_path):
    tokens = TokenMatrix(Fraction(25, 2), [("a", 4), ("b", 8)], np.array([[3, 5], [1, 0]]))
    write_tokens(tokens, tmp_path / "t.hact")
    payload = (tmp_path / "t.hact").read_bytes()[-2:]
    # 11 101 | 01 000 -> 1110 1010 | 00(pad)
    assert payload == bytes([0b11101010, 0b00000000])


@st.composite
def token_matrices(draw):
    sizes = draw(st.lists(st.integers(1, 70000), min_size=1, max_size=10))
    frames = draw(st.integers(1, 40))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    codes = np.stack([rng.integers(0, k, size=frames) for k in sizes], axis=1)
    rate = draw(st.fractions(min_value=Fraction(1, 1000), max_value=1000, max_denominator=1000))
    return TokenMatrix(rate, [(f"l{i}", k) for i, k in enumerate(sizes)], codes)


@settings(max_examples=100, deadline=None)
@given(token_matrices())
def test_roundtrip_property(tmp_path_factory, tokens):
    path = tmp_path_factory.mktemp("tok") / "t.hact"
    write_tokens(tokens, path)
    assert read_tokens(path) == tokens


def test_version_mismatch(tmp_path):
    tokens = TokenMatrix(50, [("a", 4)], np.array([[1]]))
    write_tokens(tokens, tmp_path / "t.hact")
    raw = bytearray((tmp_path / "t.hact").read_bytes())
    raw[4:6] = struct.pack("<H", 99)
    (tmp_path / "t.hact").write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version"):
        read_tokens(tmp_path / "t.hact")


def test_truncated_payload(tmp_path):
    tokens = TokenMatrix(50, [("a", 1024)], np.arange(10)[:, None])
    write_tokens(tokens, tmp_path / "t.hact")
    raw = (tmp_path / "t.hact").read_bytes()
    (tmp_path / "t.hact").write_bytes(raw[:-3])
    with pytest.raises(FormatError, match="truncated"):
        read_tokens(tmp_path / "t.hact")


def test_out_of_range_code_on_read(tmp_path):
    tokens = TokenMatrix(50, [("a", 5)], np.array([[4]]))
    write_tokens(tokens, tmp_path / "t.hact")
    raw = bytearray((tmp_path / "t.hact").read_bytes())
    raw[-1] = 0b11100000  # 7 >= 5
    (tmp_path / "t.hact").write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="layer a"):
        read_tokens(tmp_path / "t.hact")


def test_token_invariants():
    with pytest.raises(ValueError):
        TokenMatrix(50, [("a", 4)], np.array([[4]]))
    with pytest.raises(ValueError):
        TokenMatrix(50, [("a", 4)], np.zeros((0, 1)))


# -- teacher files ----------------------------------------------------------


def test_teacher_frame_file(tmp_path):
    vals = np.random.default_rng(0).standard_normal((100, 768)).astype(np.float32)
    save_teacher_embeddings(TeacherEmbeddings("frame", 768, vals, 50.0), tmp_path / "t.hte")
    t = load_teacher_embeddings(tmp_path / "t.hte")
    assert (t.granularity, t.dim, t.frame_rate) == ("frame", 768, 50.0)
    np.testing.assert_array_equal(t.values, vals)


def test_teacher_utterance_file(tmp_path):
    save_teacher_embeddings(TeacherEmbeddings("utterance", 4, np.ones((1, 4))), tmp_path / "u.hte")
    t = load_teacher_embeddings(tmp_path / "u.hte")
    assert t.granularity == "utterance" and t.values.shape == (1, 4) and t.frame_rate is None


def test_teacher_nan_named(tmp_path):
    vals = np.zeros((3, 2), dtype=np.float32)
    vals[2, 1] = np.nan
    good = TeacherEmbeddings("frame", 2, np.zeros((3, 2)), 50.0)
    save_teacher_embeddings(good, tmp_path / "t.hte")
    raw = bytearray((tmp_path / "t.hte").read_bytes())
    raw[-4:] = np.float32(np.nan).tobytes()
    (tmp_path / "t.hte").write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="row 2, column 1"):
        load_teacher_embeddings(tmp_path / "t.hte")


def test_teacher_dim_mismatch(tmp_path):
    save_teacher_embeddings(TeacherEmbeddings("frame", 2, np.zeros((3, 2)), 50.0), tmp_path / "t.hte")
    raw = (tmp_path / "t.hte").read_bytes()
    (tmp_path / "t.hte").write_bytes(raw + b"\x00" * 4)
    with pytest.raises(FormatError, match="declared"):
        load_teacher_embeddings(tmp_path / "t.hte")


def test_match_frames_nearest_earlier_tie():
    vals = np.arange(4)[:, None]
    # teacher at 2 rows/s onto 4 frames/s: positions -0.25, 0.25, 0.75, 1.25
    np.testing.assert_array_equal(match_frames(vals, 4, 2.0, 4.0)[:, 0], [0, 0, 1, 1])
    # exact half-way goes to the earlier row: 3 frames from 2 rows at equal span
    np.testing.assert_array_equal(match_frames(np.arange(2)[:, None], 1)[:, 0], [0])
    np.testing.assert_array_equal(match_frames(vals, 4)[:, 0], [0, 1, 2, 3])
