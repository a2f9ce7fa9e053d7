import math

import numpy as np
import pytest
import torch

from hac.distill import (
    TeacherSpec,
    avg_layers,
    expand_to_frames,
    kd_cosine_loss,
    mock_teacher,
    onehot_teacher,
    time_cosine,
)
from hac.io import AlignmentTier, TeacherEmbeddings, Waveform

from oracles import central_difference, scalar_kd_loss

LN_1PE_M1 = math.log(1 + math.exp(-1))
LN2 = math.log(2)
LN_1PE = math.log(1 + math.e)


def _pair(kind, f=4, d=3, seed=0):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((f, d))
    if kind == "identical":
        s = t.copy()
    elif kind == "anti":
        s = -2.5 * t
    else:
        # per dimension, make the student's time series orthogonal to the teacher's
        s = rng.standard_normal((f, d))
        s -= t * (s * t).sum(0) / (t * t).sum(0)
    return torch.as_tensor(s), torch.as_tensor(t)


@pytest.mark.parametrize("kind, want", [("identical", LN_1PE_M1), ("orthogonal", LN2), ("anti", LN_1PE)])
def test_closed_forms(kind, want):
    s, t = _pair(kind)
    assert abs(float(kd_cosine_loss(s, t)) - want) < 1e-6


def test_matches_scalar_loop():
    rng = np.random.default_rng(1)
    for _ in range(10):
        s, t = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
        got = float(kd_cosine_loss(torch.as_tensor(s), torch.as_tensor(t)))
        assert got == pytest.approx(scalar_kd_loss(s.tolist(), t.tolist()), abs=1e-12)


def test_projection_applied():
    rng = np.random.default_rng(2)
    s, a, t = rng.standard_normal((6, 3)), rng.standard_normal((3, 2)), rng.standard_normal((6, 2))
    got = float(kd_cosine_loss(torch.as_tensor(s), torch.as_tensor(t), projection=torch.as_tensor(a)))
    assert got == pytest.approx(scalar_kd_loss((s @ a).tolist(), t.tolist()), abs=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    s0, t = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    s = torch.tensor(s0, requires_grad=True)
    kd_cosine_loss(s, torch.as_tensor(t)).backward()
    num = central_difference(lambda x: scalar_kd_loss(x.tolist(), t.tolist()), s0)
    np.testing.assert_allclose(s.grad.numpy(), num, rtol=1e-4, atol=1e-9)


def test_projection_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    s, a0, t = rng.standard_normal((4, 3)), rng.standard_normal((3, 3)), rng.standard_normal((4, 3))
    a = torch.tensor(a0, requires_grad=True)
    kd_cosine_loss(torch.as_tensor(s), torch.as_tensor(t), projection=a).backward()
    num = central_difference(lambda x: scalar_kd_loss((s @ x).tolist(), t.tolist()), a0)
    np.testing.assert_allclose(a.grad.numpy(), num, rtol=1e-4, atol=1e-9)


def test_zero_column_gives_ln2():
    s, t = _pair("identical")
    s[:, 1] = 0
    want = (2 * LN_1PE_M1 + LN2) / 3
    assert float(kd_cosine_loss(s, t)) == pytest.approx(want, abs=1e-12)


def test_errors():
    with pytest.raises(ValueError, match="2 frames"):
        kd_cosine_loss(torch.ones(1, 3), torch.ones(1, 3))
    with pytest.raises(ValueError):
        kd_cosine_loss(torch.ones(4, 3), torch.ones(4, 2))


def test_mask_and_batch():
    rng = np.random.default_rng(5)
    s, t = rng.standard_normal((2, 6, 3)), rng.standard_normal((2, 6, 3))
    mask = np.ones((2, 6), dtype=bool)
    mask[0, 4:] = False
    got = float(kd_cosine_loss(torch.as_tensor(s), torch.as_tensor(t), mask=torch.as_tensor(mask)))
    want = (scalar_kd_loss(s[0, :4].tolist(), t[0, :4].tolist()) + scalar_kd_loss(s[1].tolist(), t[1].tolist())) / 2
    assert got == pytest.approx(want, abs=1e-12)
    # a fully masked item is left out of the batch mean
    mask[1] = False
    got = float(kd_cosine_loss(torch.as_tensor(s), torch.as_tensor(t), mask=torch.as_tensor(mask)))
    assert got == pytest.approx(scalar_kd_loss(s[0, :4].tolist(), t[0, :4].tolist()), abs=1e-12)


def test_time_cosine_shape():
    assert time_cosine(torch.ones(2, 5, 3), torch.ones(2, 5, 3)).shape == (2, 3)


def test_teacher_spec():
    TeacherSpec("lexical", 768, granularity="word")
    with pytest.raises(ValueError):
        TeacherSpec("phonetic", 768, granularity="word")
    with pytest.raises(ValueError):
        TeacherSpec("semantic", 4)


def test_avg_layers():
    np.testing.assert_allclose(avg_layers([np.ones((2, 2)), 3 * np.ones((2, 2))]), 2 * np.ones((2, 2)))
    with pytest.raises(ValueError):
        avg_layers([np.ones((2, 2)), np.ones((3, 2))])


def test_expand_words_to_frames():
    tier = AlignmentTier("word", [(0.0, 0.04, "a"), (0.08, 0.12, "b")])
    teacher = TeacherEmbeddings("word", 2, np.array([[1.0, 0.0], [0.0, 1.0]]))
    vals, mask = expand_to_frames(teacher, tier, 7, 50.0)
    np.testing.assert_array_equal(mask, [1, 1, 0, 0, 1, 1, 0])
    np.testing.assert_array_equal(vals[:, 0], [1, 1, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(vals[:, 1], [0, 0, 0, 0, 1, 1, 0])


def test_expand_utterance_broadcast():
    teacher = TeacherEmbeddings("utterance", 3, np.array([[1.0, 2.0, 3.0]]))
    vals, mask = expand_to_frames(teacher, None, 4, 50.0)
    assert vals.shape == (4, 3) and mask.all()


def test_expand_row_count_mismatch():
    tier = AlignmentTier("word", [(0.0, 0.04, "a")])
    with pytest.raises(ValueError, match="rows"):
        expand_to_frames(TeacherEmbeddings("word", 2, np.zeros((2, 2))), tier, 3, 50.0)


def test_mock_lexical_is_word_hash():
    tier = AlignmentTier("word", [(0.0, 0.1, "cat"), (0.2, 0.3, "dog"), (0.4, 0.5, "cat")])
    t = mock_teacher("lexical", 7, 16, word_tier=tier)
    np.testing.assert_array_equal(t.values[0], t.values[2])
    assert not np.allclose(t.values[0], t.values[1])
    again = mock_teacher("lexical", 7, 16, word_tier=tier)
    np.testing.assert_array_equal(t.values, again.values)
    assert not np.allclose(mock_teacher("lexical", 8, 16, word_tier=tier).values, t.values)


def test_mock_phonetic_frames():
    wav = Waveform(np.random.default_rng(0).standard_normal(16000).astype(np.float32) * 0.1, 16000)
    t = mock_teacher("phonetic", 0, 12, wav=wav, frame_rate=50.0)
    assert t.values.shape == (50, 12) and t.granularity == "frame"


def test_onehot_teacher():
    tier = AlignmentTier("phone", [(0.0, 0.04, "b"), (0.04, 0.08, "a")])
    t = onehot_teacher(tier, ["a", "b"], 5, 50.0, noise=0.0)
    np.testing.assert_array_equal(t.values, [[0, 1], [0, 1], [1, 0], [1, 0], [0, 0]])
