import math

import numpy as np
import pytest
import torch

from hac.evaluation import (
    AbxItem,
    abx_error,
    abx_items_from_alignment,
    dtw_distance,
    f1_score,
    frame_distances,
    mel_distance,
    pnmi,
    pnmi_from_counts,
    si_sdr,
    stft_distance,
    token_features,
    token_runs,
    word_detector_f1,
)
from hac.io import SILENCE, AlignmentTier
from hac.spectral import log_mel_l1

from oracles import angular, brute_abx, brute_dtw, euclidean, naive_log_mel_l1, plugin_pnmi


# -- frame distances / DTW --------------------------------------------------


def test_angular_examples():
    a = np.array([[1.0, 0.0]])
    np.testing.assert_allclose(frame_distances(a, np.array([[0.0, 1.0]])), [[0.5]])
    np.testing.assert_allclose(frame_distances(a, np.array([[-3.0, 0.0]])), [[1.0]])
    np.testing.assert_allclose(frame_distances(a, np.array([[2.0, 0.0]])), [[0.0]])
    np.testing.assert_allclose(frame_distances(np.zeros((1, 2)), np.zeros((1, 2))), [[0.0]])
    np.testing.assert_allclose(frame_distances(a, np.zeros((1, 2))), [[0.5]])


def test_frame_distances_match_scalar_oracle():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
    want = [[angular(u, v) for v in b] for u in a]
    np.testing.assert_allclose(frame_distances(a, b), want, atol=1e-12)
    want = [[euclidean(u, v) for v in b] for u in a]
    np.testing.assert_allclose(frame_distances(a, b, "euclidean"), want, atol=1e-12)


def test_dtw_examples():
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert dtw_distance(a, a) == 0.0
    # stretching one frame costs nothing along the diagonal-free path
    assert dtw_distance(a, np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])) == 0.0
    # single frames: the distance itself
    assert dtw_distance(a[:1], a[1:]) == pytest.approx(0.5)


@pytest.mark.parametrize("metric, dist", [("angular", angular), ("euclidean", euclidean)])
def test_dtw_matches_path_enumeration(metric, dist):
    rng = np.random.default_rng(1)
    for _ in range(30):
        n, m = rng.integers(1, 6, size=2)
        a, b = rng.standard_normal((n, 3)), rng.standard_normal((m, 3))
        want = brute_dtw(a, b, dist)
        assert dtw_distance(a, b, metric) == pytest.approx(want, abs=1e-12)


def test_dtw_tie_prefers_shorter_path():
    # all costs zero except one cell; both the diagonal and a detour reach 0
    a = np.array([[1.0], [1.0]])
    assert dtw_distance(a, a, "euclidean") == 0.0
    # equal total cost 1.0 on paths of length 2 and 3: the shorter one wins
    x = np.array([[0.0], [1.0]])
    y = np.array([[1.0], [1.0]])
    assert dtw_distance(x, y, "euclidean") == pytest.approx(brute_dtw(x, y, euclidean))
    assert dtw_distance(x, y, "euclidean") == pytest.approx(1.0 / 2)


def test_dtw_symmetry():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((4, 2)), rng.standard_normal((3, 2))
    assert dtw_distance(a, b) == pytest.approx(dtw_distance(b, a), abs=1e-15)


def test_dtw_empty():
    with pytest.raises(ValueError):
        dtw_distance(np.zeros((0, 2)), np.zeros((1, 2)))


# -- ABX --------------------------------------------------------------------


def _item(label, speaker, vec, context=None):
    return AbxItem(np.asarray(vec, dtype=float)[None], label, speaker, context)


def test_abx_separable_is_zero():
    items = [_item("a", 0, [1, 0]), _item("a", 0, [1, 0.1]), _item("b", 0, [0, 1]), _item("b", 0, [0.1, 1])]
    assert abx_error(items) == 0.0


def test_abx_identical_features_is_half():
    items = [_item(lab, 0, [1, 1]) for lab in "aabb"]
    assert abx_error(items) == 0.5


def test_abx_needs_two_categories():
    with pytest.raises(ValueError):
        abx_error([_item("a", 0, [1, 0]), _item("a", 0, [0, 1])])


def test_abx_no_valid_triples():
    # across-speaker pairing with a single speaker leaves nothing to score
    items = [_item("a", 0, [1, 0]), _item("a", 0, [1, 0]), _item("b", 0, [0, 1])]
    with pytest.raises(ValueError, match="no valid"):
        abx_error(items, pairing="across_speaker")


def _random_items(rng, n):
    labels = [f"p{i}" for i in range(rng.integers(2, 5))]
    ctx = ["x", "y"]
    items = []
    for _ in range(n):
        lab = labels[rng.integers(len(labels))]
        frames = rng.integers(1, 4)
        feats = rng.standard_normal((frames, 3)) + 2 * np.eye(3)[labels.index(lab) % 3]
        items.append(AbxItem(feats, lab, int(rng.integers(2)), (ctx[rng.integers(2)], ctx[rng.integers(2)])))
    return items


def test_abx_matches_brute_force():
    rng = np.random.default_rng(3)
    settings = [("CI", "within_speaker"), ("CI", "across_speaker"), ("CD", "any"), ("CI", "any")]
    for k in range(20):
        items = _random_items(rng, int(rng.integers(6, 30)))
        mode, pairing = settings[k % len(settings)]
        want = brute_abx(items, mode, pairing, lambda i, j: dtw_distance(items[i].features, items[j].features))
        if want is None:
            with pytest.raises(ValueError):
                abx_error(items, mode, pairing)
        else:
            assert abx_error(items, mode, pairing) == want


def test_abx_from_alignment_contexts():
    tier = AlignmentTier("phone", [(0.0, 0.04, "a"), (0.04, 0.1, "b"), (0.1, 0.12, "c")])
    feats = np.arange(6, dtype=float)[:, None]
    items = abx_items_from_alignment(feats, tier, 50.0, "s")
    assert [it.label for it in items] == ["a", "b", "c"]
    assert items[0].context == (SILENCE, "b") and items[1].context == ("a", "c")
    assert [len(it.features) for it in items] == [2, 3, 1]


def test_token_features():
    np.testing.assert_array_equal(token_features(np.array([1, 0]), codebook_size=3), [[0, 1, 0], [1, 0, 0]])
    entries = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(token_features(np.array([1]), entries), [[3.0, 4.0]])


# -- PNMI -------------------------------------------------------------------


def test_pnmi_examples():
    assert pnmi(["a", "b", "a", "b"], [0, 1, 0, 1]) == pytest.approx(1.0)
    assert pnmi(["a", "b", "a", "b"], [0, 0, 0, 0]) == pytest.approx(0.0)
    # silence frames are not counted
    assert pnmi(["a", SILENCE, "b"], [0, 5, 1]) == pytest.approx(1.0)


def test_pnmi_matches_plugin_loops():
    rng = np.random.default_rng(4)
    for _ in range(20):
        table = rng.integers(0, 20, size=(rng.integers(2, 6), rng.integers(2, 8)))
        table[0, 0] += 1
        table[1, 1] += 1
        assert pnmi_from_counts(table) == pytest.approx(plugin_pnmi(table.tolist()), abs=1e-6)


def test_pnmi_permutation_invariance():
    rng = np.random.default_rng(5)
    labels = [f"p{i}" for i in rng.integers(0, 5, 300)]
    tokens = rng.integers(0, 10, 300)
    perm = rng.permutation(10)
    rename = {f"p{i}": f"q{(3 * i) % 5}" for i in range(5)}
    base = pnmi(labels, tokens)
    assert 0 <= base <= 1
    assert pnmi([rename[l] for l in labels], perm[tokens]) == pytest.approx(base, abs=1e-12)


def test_pnmi_pooled_over_utterances():
    a = pnmi([["a", "b"], ["a"]], [np.array([0, 1]), np.array([0])])
    assert a == pytest.approx(pnmi(["a", "b", "a"], [0, 1, 0]))
    with pytest.raises(ValueError, match="silence"):
        pnmi([SILENCE, SILENCE], [0, 1])


# -- word detectors ---------------------------------------------------------


def test_token_runs():
    assert token_runs(np.array([3, 3, 1, 1, 1, 3])) == [(3, 0, 2), (1, 2, 5), (3, 5, 6)]


def test_word_detector_perfect_token():
    # frames of 0.1 s; word "cat" on frames 1-2 and 5-6
    tier = AlignmentTier("word", [(0.1, 0.3, "cat"), (0.3, 0.5, "dog"), (0.5, 0.7, "cat")])
    codes = np.array([9, 4, 4, 7, 7, 4, 4, 9])
    rows, curve = word_detector_f1([codes], [tier], 10.0)
    best = {(r.word, r.token): r for r in rows}
    assert best[("cat", 4)].precision == 1.0 and best[("cat", 4)].recall == 1.0
    assert best[("dog", 7)].f1 == 1.0
    # token 9 sits on silence only and is never assigned
    assert all(r.token != 9 for r in rows)
    assert curve[0.95] == 2


def test_word_detector_partial():
    tier = AlignmentTier("word", [(0.0, 0.2, "a"), (0.2, 0.4, "b"), (0.4, 0.6, "a")])
    codes = np.array([1, 1, 1, 1, 2, 2])
    rows, _ = word_detector_f1([codes], [tier], 10.0)
    r = {(r.word, r.token): r for r in rows}
    # one run of token 1 spans a (2 frames) and b (2 frames): ties go to the earlier word
    assert r[("a", 1)].precision == 1.0 and r[("a", 1)].recall == 0.5
    assert r[("a", 1)].f1 == pytest.approx(f1_score(1.0, 0.5))
    assert r[("a", 2)].recall == 0.5


def test_word_detector_reorder_invariant():
    rng = np.random.default_rng(6)
    tiers, seqs = [], []
    for _ in range(5):
        ivs, t = [], 0.0
        for _ in range(4):
            d = 0.1 * rng.integers(1, 4)
            ivs.append((t, t + d, f"w{rng.integers(3)}"))
            t += d + 0.1
        tiers.append(AlignmentTier("word", ivs))
        seqs.append(rng.integers(0, 4, int(t * 10) + 1))
    rows_a, curve_a = word_detector_f1(seqs, tiers, 10.0)
    order = [3, 1, 4, 0, 2]
    rows_b, curve_b = word_detector_f1([seqs[i] for i in order], [tiers[i] for i in order], 10.0)
    assert rows_a == rows_b and curve_a == curve_b
    assert all(r.f1 <= 1.0 for r in rows_a)


# -- SI-SDR and spectral distances -----------------------------------------


def test_si_sdr_examples():
    assert si_sdr([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.0, abs=1e-12)
    x = np.random.default_rng(7).standard_normal(100)
    assert si_sdr(x, x) == 100.0
    assert si_sdr(x, np.zeros(100)) == -100.0
    with pytest.raises(ValueError):
        si_sdr(np.zeros(4), np.ones(4))


@pytest.mark.parametrize("alpha", [-2.0, 0.5, 3.0])
def test_si_sdr_scale_invariance(alpha):
    rng = np.random.default_rng(8)
    x = rng.standard_normal(400)
    y = x + 0.3 * rng.standard_normal(400)
    assert abs(si_sdr(x, alpha * y) - si_sdr(x, y)) < 1e-9


def test_si_sdr_closed_form():
    rng = np.random.default_rng(9)
    x = rng.standard_normal(64)
    n = rng.standard_normal(64)
    n -= (n @ x) / (x @ x) * x  # orthogonal noise
    y = 2 * x + n
    assert si_sdr(x, y) == pytest.approx(10 * math.log10((4 * x @ x) / (n @ n)))


def test_log_mel_matches_naive_dft():
    rng = np.random.default_rng(10)
    x, y = rng.standard_normal(2048), rng.standard_normal(2048)
    for win, bins in ((64, 10), (256, 40)):
        got = float(log_mel_l1(torch.as_tensor(x), torch.as_tensor(y), 16000, win, bins))
        assert got == pytest.approx(naive_log_mel_l1(x, y, 16000, win, bins), rel=1e-9)


def test_mel_distance_sums_scales():
    rng = np.random.default_rng(11)
    x, y = rng.standard_normal(4096), rng.standard_normal(4096)
    windows, bins = (64, 256, 1024), (10, 40, 80)
    want = sum(naive_log_mel_l1(x, y, 16000, w, m) for w, m in zip(windows, bins))
    assert mel_distance(x, y, 16000, windows, bins) == pytest.approx(want, rel=1e-9)


def test_distance_identity_and_symmetry():
    rng = np.random.default_rng(12)
    x, y = rng.standard_normal(8000), rng.standard_normal(8000)
    assert mel_distance(x, x, 16000) == 0.0
    assert stft_distance(x, x) == 0.0
    assert mel_distance(x, y, 16000) == pytest.approx(mel_distance(y, x, 16000))
    assert stft_distance(x, y) == pytest.approx(stft_distance(y, x))
    with pytest.raises(ValueError, match="length"):
        stft_distance(x, y[:-1])
