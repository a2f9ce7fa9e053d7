import numpy as np
import pytest
import torch

from hac import config as C
from hac.discriminator import Discriminator, gan_losses
from hac.io import TokenMatrix, Waveform
from hac.model import BranchEncoder, HierarchicalCodec, frames_for


@pytest.fixture(scope="module")
def toy():
    torch.manual_seed(0)
    return HierarchicalCodec(C.get_preset("hac-toy").codec).eval()


def test_forward_shapes(toy):
    x = torch.randn(2, 3 * 320 + 17) * 0.1
    out = toy(x)
    assert out.reconstruction.shape == (2, 3 * 320)
    assert out.codes.shape == (2, 9, 3)
    assert out.layer_names == ["lexical", "phonetic"] + [f"acoustic_{i}" for i in range(1, 8)]
    assert out.kd_student_phn.shape == (2, 3, 32) and out.kd_student_lex.shape == (2, 3, 32)
    torch.testing.assert_close(out.z_q, out.z_qa + out.z_qp + out.z_ql)


def test_short_input_rejected(toy):
    with pytest.raises(ValueError, match="one frame"):
        toy(torch.zeros(1, 100))


def test_tokenize_roundtrip(toy):
    wav = Waveform((np.random.default_rng(0).standard_normal(1000) * 0.1).astype(np.float32), 16000)
    tokens = toy.tokenize(wav)
    assert tokens.num_frames == frames_for(1000, toy.cfg) == 3
    assert tokens.layers == toy.cfg.token_layers
    out = toy.detokenize(tokens)
    assert len(out) == 3 * 320
    # decoding the codes equals the forward reconstruction
    with torch.no_grad():
        ref = toy(torch.as_tensor(wav.samples)[None]).reconstruction[0]
    np.testing.assert_allclose(out.samples, ref.numpy(), atol=1e-5)


def test_detokenize_wrong_codebook(toy):
    layers = list(toy.cfg.token_layers)
    layers[1] = ("phonetic", 128)
    bad = TokenMatrix(toy.cfg.frame_rate, layers, np.zeros((2, 9), dtype=int))
    with pytest.raises(ValueError, match="phonetic"):
        toy.detokenize(bad)


def test_st_student_is_first_rvq_stage():
    torch.manual_seed(1)
    m = HierarchicalCodec(C.get_preset("st-10-toy").codec).eval()
    out = m(torch.randn(1, 640) * 0.1)
    assert out.z_qp is None and out.kd_student_lex is None
    assert out.codes.shape == (1, 9, 2)
    stage1 = m.rvq.quantizers[0].decode_codes(out.codes[:, 0])
    torch.testing.assert_close(out.kd_student_phn, m.proj_phn(stage1.transpose(1, 2)))


def test_dac_topologies():
    for name, has_tf in (("dac-10-toy", False), ("dac-14-t-toy", True)):
        m = HierarchicalCodec(C.get_preset(name).codec)
        assert m.lexical_vq is None and m.phonetic_vq is not None
        assert (m.phonetic_encoder is not None) == has_tf


def test_branch_encoder_uses_position():
    torch.manual_seed(2)
    enc = BranchEncoder(8, C.TransformerConfig(layers=1, heads=2, model_dim=8, ff_dim=16,
                                                 pos_conv_kernel=3, pos_conv_groups=2)).eval()
    z = torch.randn(1, 8, 1).repeat(1, 1, 6)
    with torch.no_grad():
        with_pos = enc(z)
        enc.use_positional = False
        without = enc(z)
    # identical frames stay identical without positional information
    assert torch.allclose(without, without[..., :1].expand_as(without), atol=1e-6)
    assert not torch.allclose(with_pos, with_pos[..., :1].expand_as(with_pos), atol=1e-6)


def test_gradients_reach_every_branch():
    torch.manual_seed(3)
    m = HierarchicalCodec(C.get_preset("hac-toy").codec)
    out = m(torch.randn(1, 960) * 0.1)
    loss = out.reconstruction.pow(2).mean() + out.kd_student_phn.sum() + out.kd_student_lex.sum()
    loss.backward()
    for mod in (m.encoder, m.phonetic_encoder, m.lexical_encoder, m.decoder):
        assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in mod.parameters())


def test_discriminator_outputs():
    torch.manual_seed(4)
    cfg = C.get_preset("hac-toy").discriminator
    d = Discriminator(cfg)
    outs = d(torch.randn(2, 4000) * 0.1)
    assert len(outs) == cfg.num_subdiscriminators
    real = d(torch.randn(2, 4000) * 0.1)
    g, dl, fm = gan_losses(real, outs)
    assert g.ndim == 0 and dl.ndim == 0 and fm >= 0


def test_gan_losses_closed_form():
    ones, zeros = torch.ones(3), torch.zeros(3)
    real = [(ones, [ones])]
    fake = [(zeros, [zeros])]
    g, d, fm = gan_losses(real, fake)
    # LSGAN: generator (1 - D(fake))^2 = 1, discriminator (1 - D(real))^2 + D(fake)^2 = 0
    assert float(g) == 1.0 and float(d) == 0.0 and float(fm) == 1.0
    with pytest.raises(ValueError):
        gan_losses(real, fake + fake)


def test_full_scale_parameter_counts():
    m = HierarchicalCodec(C.get_preset("hac-14").codec)
    assert m.rvq.quantizers[0].entries.shape == (1024, 8)
    assert m.phonetic_vq.entries.shape == (16384, 128)
    assert m.lexical_vq.entries.shape == (16384, 128)
    assert len(m.phonetic_encoder.layers.layers) == 4
