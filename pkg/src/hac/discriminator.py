"""Multi-period and multi-band spectrogram discriminators."""

from __future__ import annotations

from typing import List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.parametrizations import weight_norm

from .config import DiscriminatorConfig


def WNConv2d(*args, **kwargs):
    return weight_norm(nn.Conv2d(*args, **kwargs))


class PeriodDiscriminator(nn.Module):
    """Folds the waveform into (T / p, p) and applies 2-D convs along time."""

    def __init__(self, period: int, channels: int = 32, max_channels: int = 1024):
        super().__init__()
        self.period = period
        chans = [1] + [min(channels * 2**i, max_channels) for i in range(4)] + [min(channels * 16, max_channels)]
        convs = []
        for i in range(4):
            convs.append(WNConv2d(chans[i], chans[i + 1], (5, 1), (3, 1), padding=(2, 0)))
        convs.append(WNConv2d(chans[4], chans[5], (5, 1), 1, padding=(2, 0)))
        self.convs = nn.ModuleList(convs)
        self.conv_post = WNConv2d(chans[5], 1, (3, 1), 1, padding=(1, 0))

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        t = x.shape[-1]
        x = F.pad(x, (0, (-t) % self.period), mode="reflect" if t > self.period else "constant")
        x = x.view(x.shape[0], 1, -1, self.period)
        fmaps = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.1)
            fmaps.append(x)
        x = self.conv_post(x)
        fmaps.append(x)
        return x, fmaps


class BandDiscriminator(nn.Module):
    """Complex STFT split into frequency bands, one conv stack per band."""

    def __init__(self, window_length: int, bands, channels: int = 32, hop_factor: float = 0.25):
        super().__init__()
        self.window_length = window_length
        self.hop = int(window_length * hop_factor)
        n_bins = window_length // 2 + 1
        self.bands = [(int(lo * n_bins), max(int(lo * n_bins) + 1, int(hi * n_bins))) for lo, hi in bands]
        ch = channels

        def stack():
            return nn.ModuleList(
                [
                    WNConv2d(2, ch, (3, 9), (1, 1), padding=(1, 4)),
                    WNConv2d(ch, ch, (3, 9), (1, 2), padding=(1, 4)),
                    WNConv2d(ch, ch, (3, 9), (1, 2), padding=(1, 4)),
                    WNConv2d(ch, ch, (3, 9), (1, 2), padding=(1, 4)),
                    WNConv2d(ch, ch, (3, 3), (1, 1), padding=(1, 1)),
                ]
            )

        self.band_convs = nn.ModuleList([stack() for _ in self.bands])
        self.conv_post = WNConv2d(ch, 1, (3, 3), (1, 1), padding=(1, 1))

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        window = torch.hann_window(self.window_length, dtype=x.dtype, device=x.device)
        sig = x.squeeze(1)
        if sig.shape[-1] <= self.window_length // 2:
            sig = F.pad(sig, (0, self.window_length // 2 + 1 - sig.shape[-1]))
        spec = torch.stft(
            sig, self.window_length, self.hop, window=window, center=True, return_complex=True
        )
        spec = torch.view_as_real(spec).permute(0, 3, 2, 1)  # (B, 2, frames, bins)
        fmaps, outs = [], []
        for (lo, hi), convs in zip(self.bands, self.band_convs):
            h = spec[..., lo:hi]
            for conv in convs:
                h = F.leaky_relu(conv(h), 0.1)
                fmaps.append(h)
            outs.append(h)
        h = self.conv_post(torch.cat(outs, dim=-1))
        fmaps.append(h)
        return h, fmaps


class Discriminator(nn.Module):
    """Returns one (logits, feature maps) pair per sub-discriminator."""

    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.cfg = cfg
        subs: List[nn.Module] = [
            PeriodDiscriminator(p, cfg.period_channels, cfg.period_max_channels) for p in cfg.periods
        ]
        subs += [BandDiscriminator(n, cfg.bands, cfg.band_channels) for n in cfg.fft_sizes]
        self.discriminators = nn.ModuleList(subs)

    def forward(self, x: torch.Tensor) -> List[Tuple[torch.Tensor, List[torch.Tensor]]]:
        if x.dim() == 2:
            x = x.unsqueeze(1)
        x = x - x.mean(dim=-1, keepdim=True)
        x = 0.8 * x / (x.abs().max(dim=-1, keepdim=True)[0] + 1e-9)
        return [d(x) for d in self.discriminators]


def gan_losses(real, fake):
    """LSGAN objectives plus L1 feature matching.

    ``real``/``fake`` are discriminator outputs (lists of (logits, fmaps)).
    Returns (generator adversarial, discriminator, feature matching); the
    discriminator term is meant for outputs computed on a detached fake.
    """
    if len(real) != len(fake):
        raise ValueError(f"{len(real)} real vs {len(fake)} fake sub-discriminator outputs")
    gen_adv = 0.0
    disc = 0.0
    fm_terms = []
    for (lr, fr), (lf, ff) in zip(real, fake):
        if len(fr) != len(ff):
            raise ValueError("feature map lists differ in length")
        gen_adv = gen_adv + torch.mean((1 - lf) ** 2)
        disc = disc + torch.mean((1 - lr) ** 2) + torch.mean(lf**2)
        for a, b in zip(fr, ff):
            if a.shape != b.shape:
                raise ValueError(f"feature map shapes {tuple(a.shape)} vs {tuple(b.shape)}")
            fm_terms.append(F.l1_loss(b, a.detach()))
    feat = torch.stack(fm_terms).mean() if fm_terms else torch.zeros(())
    return gen_adv, disc, feat
