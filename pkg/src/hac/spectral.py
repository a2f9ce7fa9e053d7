"""STFT magnitudes, mel filterbanks and multi-scale spectral distances."""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np
import torch

CLAMP_EPS = 1e-5


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=64)
def _mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    n_freqs = n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, sample_rate / 2.0, n_freqs)
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    lower = hz_pts[:-2, None]
    center = hz_pts[1:-1, None]
    upper = hz_pts[2:, None]
    up = (fft_freqs[None, :] - lower) / (center - lower)
    down = (upper - fft_freqs[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(up, down))
    return fb  # (n_mels, n_freqs)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """Triangular HTK-scale filters, unnormalized, shape (n_mels, n_fft//2+1)."""
    return _mel_filterbank(int(sample_rate), int(n_fft), int(n_mels)).copy()


def stft_magnitude(x: torch.Tensor, window_length: int, hop_length: int = None) -> torch.Tensor:
    """|STFT| of (..., T) audio: periodic Hann, centered with reflect padding."""
    hop = hop_length or window_length // 4
    shape = x.shape
    x = x.reshape(-1, shape[-1])
    if x.shape[-1] <= window_length // 2:
        x = torch.nn.functional.pad(x, (0, window_length // 2 + 1 - x.shape[-1]))
    window = torch.hann_window(window_length, periodic=True, dtype=x.dtype, device=x.device)
    spec = torch.stft(
        x,
        n_fft=window_length,
        hop_length=hop,
        win_length=window_length,
        window=window,
        center=True,
        pad_mode="reflect",
        return_complex=True,
    )
    return spec.abs().reshape(*shape[:-1], spec.shape[-2], spec.shape[-1])


def mel_spectrogram(x: torch.Tensor, sample_rate: int, window_length: int, n_mels: int) -> torch.Tensor:
    mag = stft_magnitude(x, window_length)
    fb = torch.as_tensor(mel_filterbank(sample_rate, window_length, n_mels), dtype=x.dtype, device=x.device)
    return torch.einsum("mf,...ft->...mt", fb, mag)


def log_mel_l1(x, y, sample_rate, window_length, n_mels) -> torch.Tensor:
    mx = mel_spectrogram(x, sample_rate, window_length, n_mels)
    my = mel_spectrogram(y, sample_rate, window_length, n_mels)
    return (torch.log10(mx.clamp_min(CLAMP_EPS)) - torch.log10(my.clamp_min(CLAMP_EPS))).abs().mean()


def log_stft_l1(x, y, window_length) -> torch.Tensor:
    sx = stft_magnitude(x, window_length)
    sy = stft_magnitude(y, window_length)
    return (torch.log10(sx.clamp_min(CLAMP_EPS)) - torch.log10(sy.clamp_min(CLAMP_EPS))).abs().mean()


def multiscale_mel_loss(
    x: torch.Tensor,
    x_hat: torch.Tensor,
    sample_rate: int,
    windows: Sequence[int],
    n_mels: Sequence[int],
    reduce: str = "mean",
) -> torch.Tensor:
    """L1 distance between log10-mel spectrograms at several window sizes."""
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    if len(windows) != len(n_mels):
        raise ValueError("windows and n_mels must pair up")
    terms = [log_mel_l1(x, x_hat, sample_rate, w, m) for w, m in zip(windows, n_mels)]
    total = torch.stack(terms).sum()
    return total / len(terms) if reduce == "mean" else total
