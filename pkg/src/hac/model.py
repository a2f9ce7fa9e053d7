"""Convolutional encoder/decoder, transformer branch encoders and the codec."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.parametrizations import weight_norm

from .config import CodecConfig
from .io import TokenMatrix, Waveform
from .quantize import QuantizerOutput, ResidualVectorQuantizer, VectorQuantizer, fuse


def WNConv1d(*args, **kwargs):
    return weight_norm(nn.Conv1d(*args, **kwargs))


def WNConvTranspose1d(*args, **kwargs):
    return weight_norm(nn.ConvTranspose1d(*args, **kwargs))


def snake(x, alpha):
    return x + (alpha + 1e-9).reciprocal() * torch.sin(alpha * x).pow(2)


class Snake1d(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.alpha = nn.Parameter(torch.ones(1, channels, 1))

    def forward(self, x):
        return snake(x, self.alpha)


class ResidualUnit(nn.Module):
    def __init__(self, dim: int, dilation: int = 1):
        super().__init__()
        pad = ((7 - 1) * dilation) // 2
        self.block = nn.Sequential(
            Snake1d(dim),
            WNConv1d(dim, dim, kernel_size=7, dilation=dilation, padding=pad),
            Snake1d(dim),
            WNConv1d(dim, dim, kernel_size=1),
        )

    def forward(self, x):
        return x + self.block(x)


class EncoderBlock(nn.Module):
    def __init__(self, dim: int, stride: int, dilations=(1, 3, 9)):
        super().__init__()
        self.stride = stride
        self.block = nn.Sequential(
            *[ResidualUnit(dim // 2, d) for d in dilations],
            Snake1d(dim // 2),
            WNConv1d(dim // 2, dim, kernel_size=2 * stride, stride=stride, padding=math.ceil(stride / 2)),
        )

    def forward(self, x):
        n = x.shape[-1] // self.stride
        return self.block(x)[..., :n]


class Encoder(nn.Module):
    """Strided CNN: (B, 1, T) -> (B, latent_dim, T / prod(strides))."""

    def __init__(self, channels: int, strides, latent_dim: int, dilations=(1, 3, 9)):
        super().__init__()
        layers: List[nn.Module] = [WNConv1d(1, channels, kernel_size=7, padding=3)]
        for stride in strides:
            channels *= 2
            layers.append(EncoderBlock(channels, stride, dilations))
        layers += [Snake1d(channels), WNConv1d(channels, latent_dim, kernel_size=3, padding=1)]
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class DecoderBlock(nn.Module):
    def __init__(self, input_dim: int, output_dim: int, stride: int, dilations=(1, 3, 9)):
        super().__init__()
        self.block = nn.Sequential(
            Snake1d(input_dim),
            WNConvTranspose1d(
                input_dim,
                output_dim,
                kernel_size=2 * stride,
                stride=stride,
                padding=math.ceil(stride / 2),
                output_padding=stride % 2,
            ),
            *[ResidualUnit(output_dim, d) for d in dilations],
        )

    def forward(self, x):
        return self.block(x)


class Decoder(nn.Module):
    """Transposed-conv upsampler ending in tanh: (B, latent_dim, F) -> (B, 1, F * prod(rates))."""

    def __init__(self, latent_dim: int, channels: int, rates, dilations=(1, 3, 9)):
        super().__init__()
        layers: List[nn.Module] = [WNConv1d(latent_dim, channels, kernel_size=7, padding=3)]
        out_dim = channels
        for i, stride in enumerate(rates):
            in_dim = max(1, channels // 2**i)
            out_dim = max(1, channels // 2 ** (i + 1))
            layers.append(DecoderBlock(in_dim, out_dim, stride, dilations))
        layers += [Snake1d(out_dim), WNConv1d(out_dim, 1, kernel_size=7, padding=3), nn.Tanh()]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


class ConvPositionalEmbedding(nn.Module):
    """Grouped convolution over time added to the input (wav2vec 2.0 style)."""

    def __init__(self, dim: int, kernel_size: int, groups: int):
        super().__init__()
        groups = math.gcd(dim, groups) or 1
        self.conv = weight_norm(
            nn.Conv1d(dim, dim, kernel_size=kernel_size, padding=kernel_size // 2, groups=groups), dim=2
        )
        self.kernel_size = kernel_size

    def forward(self, x):  # (B, F, C)
        y = self.conv(x.transpose(1, 2))
        if self.kernel_size % 2 == 0:
            y = y[..., :-1]
        return F.gelu(y).transpose(1, 2)


class BranchEncoder(nn.Module):
    """Non-causal pre-LN transformer over frames, projected back to the latent size.

    ``use_positional`` is a test hook; without the convolutional positional
    embedding the stack is permutation-equivariant over frames.
    """

    def __init__(self, latent_dim: int, cfg):
        super().__init__()
        self.project_in = nn.Linear(latent_dim, cfg.model_dim)
        self.positional = ConvPositionalEmbedding(cfg.model_dim, cfg.pos_conv_kernel, cfg.pos_conv_groups)
        self.use_positional = True
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.model_dim,
            nhead=cfg.heads,
            dim_feedforward=cfg.ff_dim,
            dropout=cfg.dropout,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.layers = nn.TransformerEncoder(layer, num_layers=cfg.layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(cfg.model_dim)
        self.project_out = nn.Linear(cfg.model_dim, latent_dim)

    def forward(self, z):  # (B, D, F) -> (B, D, F)
        h = self.project_in(z.transpose(1, 2))
        if self.use_positional:
            h = h + self.positional(h)
        h = self.norm(self.layers(h))
        return self.project_out(h).transpose(1, 2)


@dataclass
class CodecOutput:
    """Batched forward results; embeddings are (B, D, F), codes (B, layers, F)."""

    reconstruction: torch.Tensor
    z: torch.Tensor
    z_q: torch.Tensor
    z_qa: torch.Tensor
    z_qp: Optional[torch.Tensor]
    z_ql: Optional[torch.Tensor]
    codes: torch.Tensor
    layer_names: List[str]
    losses: Dict[str, torch.Tensor] = field(default_factory=dict)
    kd_student_phn: Optional[torch.Tensor] = None
    kd_student_lex: Optional[torch.Tensor] = None


def _quantizer(cfg: CodecConfig, size: int, code_dim: int) -> VectorQuantizer:
    ema = cfg.quantizer_style == "ema"
    return VectorQuantizer(
        cfg.latent_dim,
        size,
        cfg.latent_dim if ema else code_dim,
        style=cfg.quantizer_style,
        normalize=cfg.normalize_lookup,
        decay=cfg.ema_decay,
        window=cfg.ema_window,
        dead_windows=cfg.ema_dead_windows,
    )


class HierarchicalCodec(nn.Module):
    """Encoder -> {acoustic RVQ, phonetic VQ, lexical VQ} -> sum -> decoder.

    The branch set follows ``cfg.branches``; projection heads for the two
    distillation losses live here so they train with the generator.
    """

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg.encoder_channels, cfg.encoder_strides, cfg.latent_dim, cfg.dilations)
        self.decoder = Decoder(cfg.latent_dim, cfg.decoder_channels, tuple(reversed(cfg.encoder_strides)), cfg.dilations)
        self.rvq = ResidualVectorQuantizer(
            [_quantizer(cfg, cfg.acoustic_codebook_size, cfg.code_dim_acoustic) for _ in range(cfg.n_acoustic)],
            dropout=cfg.quantizer_dropout,
        )
        self.phonetic_encoder = None
        self.phonetic_vq = None
        self.lexical_encoder = None
        self.lexical_vq = None
        self.proj_phn = None
        self.proj_lex = None
        if cfg.has_phonetic:
            if cfg.phonetic_transformer:
                self.phonetic_encoder = BranchEncoder(cfg.latent_dim, cfg.transformer)
            self.phonetic_vq = _quantizer(cfg, cfg.phonetic_codebook_size, cfg.code_dim_phonetic)
        if cfg.has_lexical:
            self.lexical_encoder = BranchEncoder(cfg.latent_dim, cfg.transformer)
            self.lexical_vq = _quantizer(cfg, cfg.lexical_codebook_size, cfg.code_dim_lexical)
        if cfg.has_phonetic or cfg.kd_in_rvq:
            self.proj_phn = nn.Linear(cfg.latent_dim, cfg.teacher_dim_phonetic, bias=False)
        if cfg.has_lexical:
            self.proj_lex = nn.Linear(cfg.latent_dim, cfg.teacher_dim_lexical, bias=False)

    @property
    def hop_length(self) -> int:
        return self.cfg.hop_length

    @property
    def layer_names(self) -> List[str]:
        return [n for n, _ in self.cfg.token_layers]

    def set_positional(self, enabled: bool) -> None:
        for enc in (self.phonetic_encoder, self.lexical_encoder):
            if enc is not None:
                enc.use_positional = enabled

    # -- continuous path ---------------------------------------------------

    def encode(self, audio: torch.Tensor) -> torch.Tensor:
        """(B, T) or (B, 1, T) audio -> (B, D, F); trailing partial frame dropped."""
        if audio.dim() == 2:
            audio = audio.unsqueeze(1)
        n = audio.shape[-1] // self.hop_length
        if n < 1:
            raise ValueError(
                f"input of {audio.shape[-1]} samples is shorter than one frame ({self.hop_length})"
            )
        return self.encoder(audio[..., : n * self.hop_length])

    def branch_encode(self, z: torch.Tensor, which: str) -> torch.Tensor:
        enc = {"phonetic": self.phonetic_encoder, "lexical": self.lexical_encoder}[which]
        return z if enc is None else enc(z)

    def decode(self, z_q: torch.Tensor) -> torch.Tensor:
        """(B, D, F) -> (B, F * hop) waveform in [-1, 1]."""
        return self.decoder(z_q).squeeze(1)

    # -- full pipeline -----------------------------------------------------

    def forward(self, audio: torch.Tensor, n_acoustic: Optional[int] = None) -> CodecOutput:
        z = self.encode(audio)
        acoustic = self.rvq(z, n_acoustic)
        losses = {
            "codebook": acoustic.codebook_loss,
            "commitment": acoustic.commitment_loss,
        }
        codes = []
        z_qp = z_ql = None
        student_phn = student_lex = None
        if self.lexical_vq is not None:
            lex = self.lexical_vq(self.branch_encode(z, "lexical"))
            z_ql = lex.quantized
            codes.append(lex.codes)
            losses["codebook"] = losses["codebook"] + lex.codebook_loss
            losses["commitment"] = losses["commitment"] + lex.commitment_loss
            student_lex = self.proj_lex(z_ql.transpose(1, 2))
        if self.phonetic_vq is not None:
            phn = self.phonetic_vq(self.branch_encode(z, "phonetic"))
            z_qp = phn.quantized
            codes.append(phn.codes)
            losses["codebook"] = losses["codebook"] + phn.codebook_loss
            losses["commitment"] = losses["commitment"] + phn.commitment_loss
            student_phn = self.proj_phn(z_qp.transpose(1, 2))
        elif self.cfg.kd_in_rvq:
            student_phn = self.proj_phn(acoustic.stage_outputs[0].transpose(1, 2))
        codes = torch.cat([c.unsqueeze(1) for c in codes] + [acoustic.codes], dim=1)
        z_q = fuse(acoustic.quantized, z_qp, z_ql)
        recon = self.decode(z_q)
        return CodecOutput(
            reconstruction=recon,
            z=z,
            z_q=z_q,
            z_qa=acoustic.quantized,
            z_qp=z_qp,
            z_ql=z_ql,
            codes=codes,
            layer_names=self.layer_names[: codes.shape[1]],
            losses=losses,
            kd_student_phn=student_phn,
            kd_student_lex=student_lex,
        )

    # -- discrete path -----------------------------------------------------

    def quantizer_for(self, layer: str) -> VectorQuantizer:
        if layer == "lexical":
            return self.lexical_vq
        if layer == "phonetic":
            return self.phonetic_vq
        if layer.startswith("acoustic_"):
            return self.rvq.quantizers[int(layer.split("_")[1]) - 1]
        raise KeyError(layer)

    def decode_codes(self, codes: torch.Tensor) -> torch.Tensor:
        """(B, layers, F) codes in ``layer_names`` order -> waveform."""
        z_q = 0
        for j, name in enumerate(self.layer_names[: codes.shape[1]]):
            z_q = z_q + self.quantizer_for(name).decode_codes(codes[:, j])
        return self.decode(z_q)

    @torch.no_grad()
    def tokenize(self, wav: Waveform) -> TokenMatrix:
        if wav.sample_rate != self.cfg.sample_rate:
            raise ValueError(f"expected {self.cfg.sample_rate} Hz audio, got {wav.sample_rate}")
        was_training = self.training
        self.eval()
        try:
            x = torch.as_tensor(wav.samples, dtype=self.dtype)[None]
            out = self(x)
        finally:
            self.train(was_training)
        return TokenMatrix(
            frame_rate=self.cfg.frame_rate,
            layers=self.cfg.token_layers,
            codes=out.codes[0].t().cpu().numpy(),
        )

    @torch.no_grad()
    def detokenize(self, tokens: TokenMatrix) -> Waveform:
        expected = self.cfg.token_layers
        if len(tokens.layers) != len(expected):
            raise ValueError(f"token file has {len(tokens.layers)} layers, model expects {len(expected)}")
        for (name, k), (ename, ek) in zip(tokens.layers, expected):
            if name != ename or k != ek:
                raise ValueError(
                    f"layer {name!r} (codebook size {k}) does not match model layer {ename!r} (codebook size {ek})"
                )
        if tokens.frame_rate != TokenMatrix(self.cfg.frame_rate, [("x", 1)], np.zeros((1, 1))).frame_rate:
            raise ValueError(f"token frame rate {tokens.frame_rate} != model frame rate {self.cfg.frame_rate}")
        was_training = self.training
        self.eval()
        try:
            codes = torch.as_tensor(tokens.codes.T[None], dtype=torch.long)
            audio = self.decode_codes(codes)[0]
        finally:
            self.train(was_training)
        return Waveform(audio.float().cpu().numpy(), self.cfg.sample_rate)

    @property
    def dtype(self):
        return next(self.parameters()).dtype


def frames_for(num_samples: int, cfg: CodecConfig) -> int:
    return num_samples // cfg.hop_length
