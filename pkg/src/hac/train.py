"""Adversarial training of the codec with distillation losses."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from . import config as C
from .data import Utterance, crop_batch
from .discriminator import Discriminator, gan_losses
from .distill import kd_cosine_loss
from .model import HierarchicalCodec
from .spectral import multiscale_mel_loss

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "hac-checkpoint"
CHECKPOINT_VERSION = 1
MODEL_FORMAT = "hac-model"

LOSS_TERMS = ("mel", "adversarial", "feature_match", "codebook", "commitment", "kd_phn", "kd_lex")


class TrainingDiverged(RuntimeError):
    """A loss term became NaN or infinite."""


@dataclass
class TrainState:
    preset: C.Preset
    generator: HierarchicalCodec
    discriminator: Discriminator
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    step: int = 0
    seed: int = 0

    @property
    def train_cfg(self) -> C.TrainConfig:
        return self.preset.train

    @property
    def lr(self) -> float:
        return lr_at(self.train_cfg, self.step)


def lr_at(train: C.TrainConfig, step: int) -> float:
    return train.lr * train.lr_gamma**step


def step_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, step]).generate_state(1)[0])


def init_state(preset: C.Preset, seed: int = 0, dtype=torch.float32) -> TrainState:
    torch.manual_seed(seed)
    gen = HierarchicalCodec(preset.codec).to(dtype)
    disc = Discriminator(preset.discriminator).to(dtype)
    t = preset.train
    opt_g = torch.optim.AdamW(
        [p for p in gen.parameters() if p.requires_grad], lr=t.lr, betas=t.betas, weight_decay=t.weight_decay
    )
    opt_d = torch.optim.AdamW(disc.parameters(), lr=t.lr, betas=t.betas, weight_decay=t.weight_decay)
    return TrainState(preset, gen, disc, opt_g, opt_d, 0, seed)


def active_terms(preset: C.Preset) -> List[str]:
    """Loss terms that exist for this topology and carry non-zero weight."""
    w = preset.train.weights
    cfg = preset.codec
    terms = ["mel", "codebook", "commitment"]
    if w.adversarial > 0 or w.feature_match > 0:
        terms[1:1] = ["adversarial", "feature_match"]
    if (cfg.has_phonetic or cfg.kd_in_rvq) and w.kd_phn > 0:
        terms.append("kd_phn")
    if cfg.has_lexical and w.kd_lex > 0:
        terms.append("kd_lex")
    return terms


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def train_step(state: TrainState, batch: Dict[str, torch.Tensor]) -> Dict[str, float]:
    """One discriminator update followed by one generator update.

    The discriminator is skipped when neither adversarial term is weighted.
    Returns the logged scalars for the step (loss terms, lr, codebook
    utilisation per token layer). Raises TrainingDiverged naming the first
    non-finite term.
    """
    preset = state.preset
    w = preset.train.weights
    gen, disc = state.generator, state.discriminator
    dtype = gen.dtype
    lr = lr_at(preset.train, state.step)
    for opt in (state.opt_g, state.opt_d):
        for group in opt.param_groups:
            group["lr"] = lr

    x = batch["audio"].to(dtype)
    gen.train()
    disc.train()
    out = gen(x)
    x_hat = out.reconstruction
    x_ref = x[..., : x_hat.shape[-1]]
    use_adv = w.adversarial > 0 or w.feature_match > 0

    logs: Dict[str, float] = {"step": state.step + 1, "lr": lr}
    if use_adv:
        _set_requires_grad(disc, True)
        state.opt_d.zero_grad(set_to_none=True)
        d_real = disc(x_ref)
        d_fake = disc(x_hat.detach())
        _, loss_d, _ = gan_losses(d_real, d_fake)
        _check({"discriminator": loss_d})
        loss_d.backward()
        state.opt_d.step()
        logs["discriminator"] = loss_d.item()

    terms: Dict[str, torch.Tensor] = {
        "mel": multiscale_mel_loss(x_ref, x_hat, preset.codec.sample_rate,
                                   preset.train.mel_windows, preset.train.mel_bins),
    }
    if use_adv:
        _set_requires_grad(disc, False)
        d_fake = disc(x_hat)
        with torch.no_grad():
            d_real = disc(x_ref)
        terms["adversarial"], _, terms["feature_match"] = gan_losses(d_real, d_fake)
    terms["codebook"] = out.losses["codebook"]
    terms["commitment"] = out.losses["commitment"]
    if out.kd_student_phn is not None and "phn_teacher" in batch and w.kd_phn > 0:
        terms["kd_phn"] = kd_cosine_loss(out.kd_student_phn, batch["phn_teacher"].to(dtype))
    if out.kd_student_lex is not None and "lex_teacher" in batch and w.kd_lex > 0:
        terms["kd_lex"] = kd_cosine_loss(
            out.kd_student_lex, batch["lex_teacher"].to(dtype), mask=batch.get("lex_mask")
        )
    _check(terms)
    loss_g = sum(getattr(w, name) * value for name, value in terms.items())
    state.opt_g.zero_grad(set_to_none=True)
    loss_g.backward()
    state.opt_g.step()
    _set_requires_grad(disc, True)

    for name, value in terms.items():
        logs[name] = value.item()
    logs["generator"] = loss_g.item()
    codes = out.codes.detach()
    for j, (name, k) in enumerate(preset.codec.token_layers[: codes.shape[1]]):
        logs[f"util_{name}"] = float(torch.unique(codes[:, j]).numel()) / k
    state.step += 1
    return logs


def _check(terms: Dict[str, torch.Tensor]) -> None:
    for name, value in terms.items():
        if not torch.isfinite(value).all():
            raise TrainingDiverged(f"loss term {name!r} is {value.detach().item()}")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(state: TrainState, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "preset": state.preset.name,
        "codec": C.to_dict(state.preset.codec),
        "discriminator_config": C.to_dict(state.preset.discriminator),
        "train": C.to_dict(state.preset.train),
        "step": state.step,
        "seed": state.seed,
        "generator": state.generator.state_dict(),
        "discriminator": state.discriminator.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def _read(path, formats=(CHECKPOINT_FORMAT,)) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") not in formats:
        raise ValueError(f"{path}: not a codec checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    return payload


def preset_from_checkpoint(payload: dict) -> C.Preset:
    return C.Preset(
        payload["preset"],
        C.codec_from_dict(payload["codec"]),
        C.discriminator_from_dict(payload["discriminator_config"]),
        C.train_from_dict(payload["train"]),
    )


def load_checkpoint(path) -> TrainState:
    payload = _read(path)
    state = init_state(preset_from_checkpoint(payload), payload["seed"])
    state.generator.load_state_dict(payload["generator"])
    state.discriminator.load_state_dict(payload["discriminator"])
    state.opt_g.load_state_dict(payload["opt_g"])
    state.opt_d.load_state_dict(payload["opt_d"])
    state.step = int(payload["step"])
    return state


def export_model(checkpoint, path) -> None:
    """Write the generator and its codec config without optimizer or discriminator state."""
    payload = _read(checkpoint)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": MODEL_FORMAT,
            "version": CHECKPOINT_VERSION,
            "preset": payload["preset"],
            "codec": payload["codec"],
            "generator": payload["generator"],
        },
        path,
    )


def load_model(path) -> HierarchicalCodec:
    """Generator only, in eval mode, from a checkpoint or an exported model."""
    payload = _read(path, (CHECKPOINT_FORMAT, MODEL_FORMAT))
    model = HierarchicalCodec(C.codec_from_dict(payload["codec"]))
    model.load_state_dict(payload["generator"])
    return model.eval()


# ---------------------------------------------------------------------------
# loop
# ---------------------------------------------------------------------------


def log_columns(preset: C.Preset) -> List[str]:
    cols = ["step", "lr"]
    terms = active_terms(preset)
    if "adversarial" in terms:
        cols.append("discriminator")
    cols += terms + ["generator"]
    cols += [f"util_{name}" for name, _ in preset.codec.token_layers]
    return cols


def _rewrite_log(path: Path, columns: Sequence[str], keep_until: int) -> None:
    rows = []
    if path.is_file():
        with path.open(newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if int(r["step"]) <= keep_until]
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        writer.writerows(rows)


def train_loop(
    preset: C.Preset,
    dataset: Sequence[Utterance],
    steps: int,
    out_dir,
    checkpoint_every: int = 0,
    seed: int = 0,
    resume: Optional[str] = None,
    state: Optional[TrainState] = None,
    log_every: int = 0,
) -> TrainState:
    """Train until ``steps`` total steps, logging every step to ``train_log.csv``.

    Batches are drawn from a generator seeded by (seed, step) and torch is
    reseeded per step, so resuming from a checkpoint reproduces an
    uninterrupted run.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if state is None:
        state = load_checkpoint(resume) if resume else init_state(preset, seed)
    columns = log_columns(state.preset)
    log_path = out_dir / "train_log.csv"
    _rewrite_log(log_path, columns, state.step)
    with log_path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        while state.step < steps:
            step = state.step
            rng = np.random.default_rng([state.seed, step])
            torch.manual_seed(step_seed(state.seed, step))
            batch = crop_batch(dataset, state.preset.codec, state.preset.train, rng)
            logs = train_step(state, batch)
            writer.writerow({k: _fmt(logs.get(k)) for k in columns})
            fh.flush()
            if log_every and state.step % log_every == 0:
                logger.info("step %d mel %.4f", state.step, logs["mel"])
            if checkpoint_every and state.step % checkpoint_every == 0:
                save_checkpoint(state, out_dir / f"ckpt_{state.step:08d}.pt")
                save_checkpoint(state, out_dir / "last.pt")
    return state


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))
