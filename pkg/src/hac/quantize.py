"""Vector quantizers: low-dimensional lookup VQ, EMA codebooks, residual VQ."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class QuantizerOutput:
    """Quantizer results for a batch laid out as (B, D, F).

    ``codes`` is (B, F) for a single layer and (B, n, F) for RVQ.
    ``latents`` holds the projected lookup-space inputs (one entry per stage).
    """

    quantized: torch.Tensor
    codes: torch.Tensor
    codebook_loss: torch.Tensor
    commitment_loss: torch.Tensor
    residual: Optional[torch.Tensor] = None
    latents: Optional[List[torch.Tensor]] = None
    stage_outputs: Optional[List[torch.Tensor]] = None


def nearest_code(e: torch.Tensor, entries: torch.Tensor, chunk: int = 1 << 24) -> torch.Tensor:
    """Index of the closest entry (squared Euclidean) for each row of ``e``.

    Distances are computed from explicit differences, not the expanded
    ||a||^2 - 2ab + ||b||^2 form, so ties resolve to the lowest index
    the same way an exhaustive search does.
    """
    n, d = e.shape
    k = entries.shape[0]
    step = max(1, chunk // max(1, k * d))
    out = []
    for i in range(0, n, step):
        diff = e[i : i + step, None, :] - entries[None, :, :]
        out.append(diff.pow(2).sum(-1).argmin(dim=1))
    if not out:
        return torch.zeros(0, dtype=torch.long, device=e.device)
    return torch.cat(out)


class VectorQuantizer(nn.Module):
    """Single VQ layer.

    With ``style="low_dim_lookup"`` the input is projected to ``code_dim``
    before the nearest-neighbour search and projected back afterwards;
    entries are learned by the codebook loss. With ``style="ema"`` the
    lookup happens in the input space and entries follow exponential
    moving averages of their assigned vectors.
    """

    def __init__(
        self,
        input_dim: int,
        codebook_size: int,
        code_dim: int,
        style: str = "low_dim_lookup",
        normalize: bool = False,
        decay: float = 0.99,
        window: int = 100,
        dead_windows: int = 2,
    ):
        super().__init__()
        if codebook_size < 1:
            raise ValueError("codebook_size must be >= 1")
        self.input_dim = input_dim
        self.codebook_size = codebook_size
        self.style = style
        self.normalize = normalize
        self.decay = decay
        self.window = window
        self.dead_windows = dead_windows
        if style == "ema":
            if code_dim != input_dim:
                raise ValueError("EMA codebooks require code_dim == input_dim")
            self.project_in = nn.Identity()
            self.project_out = nn.Identity()
        else:
            self.project_in = nn.Linear(input_dim, code_dim)
            self.project_out = nn.Linear(code_dim, input_dim)
        self.code_dim = code_dim
        self.codebook = nn.Embedding(codebook_size, code_dim)
        if style == "ema":
            self.codebook.weight.requires_grad_(False)
            # statistics start empty so the initial entries carry no weight
            self.register_buffer("ema_counts", torch.zeros(codebook_size))
            self.register_buffer("ema_sums", torch.zeros(codebook_size, code_dim))
            self.register_buffer("window_usage", torch.zeros(codebook_size))
            self.register_buffer("idle_windows", torch.zeros(codebook_size, dtype=torch.long))
            self.register_buffer("updates", torch.zeros((), dtype=torch.long))

    @property
    def entries(self) -> torch.Tensor:
        return self.codebook.weight

    def lookup(self, e: torch.Tensor) -> torch.Tensor:
        """Codes for lookup-space vectors ``e`` of shape (N, code_dim)."""
        entries = self.entries
        if self.normalize:
            e = F.normalize(e, dim=-1)
            entries = F.normalize(entries, dim=-1)
        return nearest_code(e.detach(), entries.detach())

    def forward(self, z: torch.Tensor) -> QuantizerOutput:
        """Quantize ``z`` of shape (B, D, F)."""
        if z.dim() != 3 or z.shape[1] != self.input_dim:
            raise ValueError(f"expected (B, {self.input_dim}, F) input, got {tuple(z.shape)}")
        b, _, f = z.shape
        e = self.project_in(z.transpose(1, 2))  # (B, F, code_dim)
        flat = e.reshape(-1, self.code_dim)
        codes = self.lookup(flat)
        if self.style == "ema" and self.training:
            self.ema_update(codes, flat.detach())
        q = self.entries[codes].view(b, f, self.code_dim)

        codebook_loss = F.mse_loss(q, e.detach())
        commitment_loss = F.mse_loss(e, q.detach())
        if self.style == "ema":
            codebook_loss = codebook_loss.detach() * 0.0

        q = e + (q - e).detach()
        quantized = self.project_out(q).transpose(1, 2)
        return QuantizerOutput(
            quantized=quantized,
            codes=codes.view(b, f),
            codebook_loss=codebook_loss,
            commitment_loss=commitment_loss,
            latents=[e],
        )

    def decode_codes(self, codes: torch.Tensor) -> torch.Tensor:
        """(B, F) integer codes -> (B, D, F) embeddings."""
        return self.project_out(self.entries[codes]).transpose(1, 2)

    @torch.no_grad()
    def ema_update(self, codes: torch.Tensor, embeddings: torch.Tensor, decay: Optional[float] = None):
        """EMA cluster-count/sum update, then reseed long-idle entries.

        Each entry is the decay-weighted mean of the vectors assigned to it;
        an entry that has never been assigned keeps its value.

        ``codes`` (N,) assigns each row of ``embeddings`` (N, code_dim).
        """
        if self.style != "ema":
            raise TypeError("ema_update called on a gradient-trained codebook")
        decay = self.decay if decay is None else decay
        onehot = F.one_hot(codes, self.codebook_size).to(embeddings.dtype)
        counts = onehot.sum(0)
        sums = onehot.t() @ embeddings
        self.ema_counts.mul_(decay).add_(counts, alpha=1 - decay)
        self.ema_sums.mul_(decay).add_(sums, alpha=1 - decay)
        seen = self.ema_counts > 1e-8
        means = self.ema_sums / self.ema_counts.clamp_min(1e-8)[:, None]
        self.codebook.weight.copy_(torch.where(seen[:, None], means, self.codebook.weight))

        self.window_usage.add_(counts)
        self.updates.add_(1)
        if self.window > 0 and int(self.updates) % self.window == 0:
            idle = self.window_usage < 1
            self.idle_windows.copy_(torch.where(idle, self.idle_windows + 1, torch.zeros_like(self.idle_windows)))
            self.window_usage.zero_()
            dead = torch.nonzero(self.idle_windows >= self.dead_windows).flatten()
            if dead.numel():
                pick = torch.randint(0, embeddings.shape[0], (dead.numel(),), device=embeddings.device)
                self.codebook.weight[dead] = embeddings[pick]
                self.ema_sums[dead] = embeddings[pick]
                self.ema_counts[dead] = 1.0
                self.idle_windows[dead] = 0


def vq_forward(z: torch.Tensor, quantizer: VectorQuantizer) -> QuantizerOutput:
    """Quantize one utterance's (F, D) frames; returns (F, D) / (F,) tensors."""
    out = quantizer(z.t().unsqueeze(0))
    out.quantized = out.quantized[0].t()
    out.codes = out.codes[0]
    return out


class ResidualVectorQuantizer(nn.Module):
    def __init__(self, quantizers: Sequence[VectorQuantizer], dropout: float = 0.0):
        super().__init__()
        if len(quantizers) == 0:
            raise ValueError("residual quantizer needs at least one codebook")
        self.quantizers = nn.ModuleList(quantizers)
        self.dropout = dropout

    def __len__(self):
        return len(self.quantizers)

    def forward(self, z: torch.Tensor, n_active: Optional[int] = None) -> QuantizerOutput:
        """Stagewise quantization of (B, D, F) input.

        Quantizer dropout (training only, probability ``dropout``) draws a
        random depth per call; codes are still produced for every layer.
        """
        n = len(self.quantizers) if n_active is None else int(n_active)
        if not 1 <= n <= len(self.quantizers):
            raise ValueError(f"n_active must be in [1, {len(self.quantizers)}]")
        if self.training and self.dropout > 0 and torch.rand(()) < self.dropout:
            n = int(torch.randint(1, n + 1, ()))
        residual = z
        quantized = torch.zeros_like(z)
        codes, latents, stages = [], [], []
        cb_loss = z.new_zeros(())
        cm_loss = z.new_zeros(())
        for quantizer in self.quantizers[:n]:
            out = quantizer(residual)
            quantized = quantized + out.quantized
            residual = residual - out.quantized
            cb_loss = cb_loss + out.codebook_loss
            cm_loss = cm_loss + out.commitment_loss
            codes.append(out.codes)
            latents.extend(out.latents)
            stages.append(out.quantized)
        return QuantizerOutput(
            quantized=quantized,
            codes=torch.stack(codes, dim=1),
            codebook_loss=cb_loss,
            commitment_loss=cm_loss,
            residual=residual,
            latents=latents,
            stage_outputs=stages,
        )

    def decode_codes(self, codes: torch.Tensor) -> torch.Tensor:
        """(B, n, F) codes -> summed (B, D, F) embedding."""
        out = 0
        for i in range(codes.shape[1]):
            out = out + self.quantizers[i].decode_codes(codes[:, i])
        return out


def fuse(*parts: Optional[torch.Tensor]) -> torch.Tensor:
    """Elementwise sum of the branch embeddings that are present."""
    present = [p for p in parts if p is not None]
    if not present:
        raise ValueError("nothing to fuse")
    shape = present[0].shape
    for p in present[1:]:
        if p.shape != shape:
            raise ValueError(f"cannot fuse shapes {tuple(shape)} and {tuple(p.shape)}")
    out = present[0]
    for p in present[1:]:
        out = out + p
    return out


def codebook_stats(codes, codebook_size: int):
    """(utilization fraction, perplexity) of an integer code array."""
    codes = np.asarray(codes).reshape(-1)
    if codes.size == 0:
        return 0.0, 0.0
    counts = np.bincount(codes, minlength=codebook_size).astype(np.float64)
    p = counts[counts > 0] / counts.sum()
    entropy = float(-(p * np.log(p)).sum())
    return float((counts > 0).sum()) / codebook_size, math.exp(entropy)
