"""Model, discriminator and training configuration plus the preset registry."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

BRANCHES = ("none", "phonetic_only", "phonetic+lexical")
QUANTIZER_STYLES = ("low_dim_lookup", "ema")


@dataclass(frozen=True)
class TransformerConfig:
    layers: int = 4
    heads: int = 8
    model_dim: int = 768
    ff_dim: int = 3072
    pos_conv_kernel: int = 127
    pos_conv_groups: int = 16
    dropout: float = 0.0


@dataclass(frozen=True)
class CodecConfig:
    sample_rate: int = 16000
    encoder_strides: Tuple[int, ...] = (2, 4, 5, 8)
    encoder_channels: int = 64
    decoder_channels: int = 1536
    dilations: Tuple[int, ...] = (1, 3, 9)
    latent_dim: int = 1024
    n_acoustic: int = 7
    acoustic_codebook_size: int = 1024
    phonetic_codebook_size: int = 16384
    lexical_codebook_size: int = 16384
    code_dim_acoustic: int = 8
    code_dim_phonetic: int = 128
    code_dim_lexical: int = 128
    transformer: TransformerConfig = field(default_factory=TransformerConfig)
    branches: str = "phonetic+lexical"
    phonetic_transformer: bool = True
    quantizer_style: str = "low_dim_lookup"
    kd_in_rvq: bool = False
    normalize_lookup: bool = False
    quantizer_dropout: float = 0.0
    ema_decay: float = 0.99
    ema_window: int = 100
    ema_dead_windows: int = 2
    teacher_dim_phonetic: int = 768
    teacher_dim_lexical: int = 768

    def __post_init__(self):
        if self.branches not in BRANCHES:
            raise ValueError(f"branches must be one of {BRANCHES}, got {self.branches!r}")
        if self.quantizer_style not in QUANTIZER_STYLES:
            raise ValueError(f"quantizer_style must be one of {QUANTIZER_STYLES}")
        if not self.encoder_strides or any(s < 1 for s in self.encoder_strides):
            raise ValueError("encoder_strides must be positive integers")
        sizes = {
            "sample_rate": self.sample_rate,
            "latent_dim": self.latent_dim,
            "n_acoustic": self.n_acoustic,
            "acoustic_codebook_size": self.acoustic_codebook_size,
            "phonetic_codebook_size": self.phonetic_codebook_size,
            "lexical_codebook_size": self.lexical_codebook_size,
            "code_dim_acoustic": self.code_dim_acoustic,
            "code_dim_phonetic": self.code_dim_phonetic,
            "code_dim_lexical": self.code_dim_lexical,
            "encoder_channels": self.encoder_channels,
            "decoder_channels": self.decoder_channels,
        }
        for name, value in sizes.items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.quantizer_style == "ema" and self.code_dim_acoustic != self.latent_dim:
            raise ValueError("EMA codebooks look up in the full latent space (code_dim == latent_dim)")
        if self.kd_in_rvq and self.branches != "none":
            raise ValueError("kd_in_rvq is only meaningful without factored branches")

    @property
    def hop_length(self) -> int:
        return math.prod(self.encoder_strides)

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_length

    @property
    def has_phonetic(self) -> bool:
        return self.branches != "none"

    @property
    def has_lexical(self) -> bool:
        return self.branches == "phonetic+lexical"

    @property
    def token_layers(self):
        """(name, codebook size) per emitted token layer, in file order."""
        layers = []
        if self.has_lexical:
            layers.append(("lexical", self.lexical_codebook_size))
        if self.has_phonetic:
            layers.append(("phonetic", self.phonetic_codebook_size))
        layers += [(f"acoustic_{i + 1}", self.acoustic_codebook_size) for i in range(self.n_acoustic)]
        return layers

    @property
    def tokens_per_frame(self) -> int:
        return len(self.token_layers)

    @property
    def bits_per_frame(self) -> int:
        return sum((k - 1).bit_length() for _, k in self.token_layers)


@dataclass(frozen=True)
class DiscriminatorConfig:
    periods: Tuple[int, ...] = (2, 3, 5, 7, 11)
    fft_sizes: Tuple[int, ...] = (2048, 1024, 512)
    bands: Tuple[Tuple[float, float], ...] = (
        (0.0, 0.1),
        (0.1, 0.25),
        (0.25, 0.5),
        (0.5, 0.75),
        (0.75, 1.0),
    )
    period_channels: int = 32
    period_max_channels: int = 1024
    band_channels: int = 32

    @property
    def num_subdiscriminators(self) -> int:
        return len(self.periods) + len(self.fft_sizes)


@dataclass(frozen=True)
class LossWeights:
    mel: float = 15.0
    adversarial: float = 1.0
    feature_match: float = 2.0
    codebook: float = 1.0
    commitment: float = 0.25
    kd_phn: float = 1.0
    kd_lex: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    betas: Tuple[float, float] = (0.8, 0.9)
    weight_decay: float = 0.01
    lr_gamma: float = 0.999996
    crop_seconds: float = 3.8
    batch_seconds: float = 60.0
    mel_windows: Tuple[int, ...] = (32, 64, 128, 256, 512, 1024, 2048)
    mel_bins: Tuple[int, ...] = (5, 10, 20, 40, 80, 160, 320)
    weights: LossWeights = field(default_factory=LossWeights)

    @property
    def crops_per_batch(self) -> int:
        return max(1, int(math.floor(self.batch_seconds / self.crop_seconds + 1e-9)))


@dataclass(frozen=True)
class Preset:
    name: str
    codec: CodecConfig
    discriminator: DiscriminatorConfig
    train: TrainConfig
    description: str = ""


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

_TOY_TRANSFORMER = TransformerConfig(
    layers=2, heads=2, model_dim=32, ff_dim=64, pos_conv_kernel=9, pos_conv_groups=4
)

_TOY_DISC = DiscriminatorConfig(
    periods=(2, 3),
    fft_sizes=(256,),
    period_channels=4,
    period_max_channels=16,
    band_channels=4,
)

_TOY_TRAIN = TrainConfig(
    lr=1e-3,
    lr_gamma=0.9999,
    crop_seconds=1.0,
    batch_seconds=2.0,
    mel_windows=(64, 256, 1024),
    mel_bins=(10, 40, 80),
)


def _toy(codec: CodecConfig, **overrides) -> CodecConfig:
    """Shrink a full-scale config to desk size, keeping its topology."""
    ema = codec.quantizer_style == "ema"
    latent = 32
    small = dict(
        encoder_strides=(2, 4, 5, 8),
        encoder_channels=4,
        decoder_channels=64,
        dilations=(1, 3),
        latent_dim=latent,
        acoustic_codebook_size=64,
        phonetic_codebook_size=64,
        lexical_codebook_size=64,
        code_dim_acoustic=latent if ema else 8,
        code_dim_phonetic=16,
        code_dim_lexical=16,
        transformer=_TOY_TRANSFORMER,
        teacher_dim_phonetic=32,
        teacher_dim_lexical=32,
    )
    small.update(overrides)
    return dataclasses.replace(codec, **small)


def _full_family() -> Dict[str, Tuple[CodecConfig, str]]:
    st = CodecConfig(
        n_acoustic=9,
        acoustic_codebook_size=1024,
        code_dim_acoustic=1024,
        branches="none",
        phonetic_transformer=False,
        quantizer_style="ema",
        kd_in_rvq=True,
    )
    dac10 = CodecConfig(
        n_acoustic=8,
        phonetic_codebook_size=1024,
        branches="phonetic_only",
        phonetic_transformer=False,
    )
    dac14 = dataclasses.replace(dac10, phonetic_codebook_size=16384)
    dac14t = dataclasses.replace(dac14, phonetic_transformer=True)
    hac14 = CodecConfig()
    hac10 = dataclasses.replace(hac14, phonetic_codebook_size=1024, lexical_codebook_size=1024)
    plain = CodecConfig(n_acoustic=9, branches="none", phonetic_transformer=False)
    return {
        "st-10": (st, "ST-10-HuB-en baseline: 9 EMA 10-bit layers, KD on RVQ layer 1"),
        "dac-10": (dac10, "DAC-10-HuB-en: 8 residual + 1 factored 10-bit phonetic layer"),
        "dac-14": (dac14, "DAC-14-HuB-en: 14-bit factored phonetic layer"),
        "dac-14-t": (dac14t, "DAC-14-HuB-T-en: transformer before the phonetic layer"),
        "hac-10": (hac10, "HAC-10: 10-bit lexical and phonetic layers (layer-wise analyses)"),
        "hac-14": (hac14, "HAC-14: 7 acoustic + 14-bit phonetic + 14-bit lexical layers"),
        "dac-orig": (plain, "plain RVQ-GAN without distillation"),
    }


ALIASES = {
    "hac": "hac-14",
    "hac-toy": "hac-14-toy",
    "st-10-hub-en": "st-10",
    "dac-10-hub-en": "dac-10",
    "dac-14-hub-en": "dac-14",
    "dac-14-hub-t-en": "dac-14-t",
    "dac-14-mhub-t-en": "dac-14-t",
    "dac-14-mhub-t-l16": "dac-14-t",
    "dac-10-hub-t-en": "dac-14-t",
    "hac-14-labse-hub-t-en": "hac-14",
    "hac-14-samu-hub-t-en": "hac-14",
    "hac-14-samu-mhub-t-l16": "hac-14",
    "hac-14-labse-mhub-t-l16": "hac-14",
    "hac-10-samu-hub-t-en": "hac-10",
}


def _registry() -> Dict[str, Preset]:
    out = {}
    for name, (codec, desc) in _full_family().items():
        out[name] = Preset(name, codec, DiscriminatorConfig(), TrainConfig(), desc)
        toy_name = f"{name}-toy"
        out[toy_name] = Preset(
            toy_name, _toy(codec), _TOY_DISC, _TOY_TRAIN, f"desk-scale twin of {name}"
        )
    return out


PRESETS: Dict[str, Preset] = _registry()


def get_preset(name: str) -> Preset:
    key = name.lower()
    key = ALIASES.get(key, key)
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[key]


def preset_names() -> List[str]:
    return sorted(PRESETS)


# ---------------------------------------------------------------------------
# (de)serialization
# ---------------------------------------------------------------------------


def to_dict(cfg) -> Dict[str, Any]:
    """JSON-safe mapping of a config dataclass (plain mappings pass through)."""
    return json.loads(json.dumps(dataclasses.asdict(cfg) if dataclasses.is_dataclass(cfg) else cfg))


def codec_from_dict(d: Dict[str, Any]) -> CodecConfig:
    d = dict(d)
    d["transformer"] = TransformerConfig(**d.get("transformer", {}))
    for key in ("encoder_strides", "dilations"):
        if key in d:
            d[key] = tuple(d[key])
    return CodecConfig(**d)


def discriminator_from_dict(d: Dict[str, Any]) -> DiscriminatorConfig:
    d = dict(d)
    for key in ("periods", "fft_sizes"):
        if key in d:
            d[key] = tuple(d[key])
    if "bands" in d:
        d["bands"] = tuple(tuple(b) for b in d["bands"])
    return DiscriminatorConfig(**d)


def train_from_dict(d: Dict[str, Any]) -> TrainConfig:
    d = dict(d)
    d["weights"] = LossWeights(**d.get("weights", {}))
    for key in ("betas", "mel_windows", "mel_bins"):
        if key in d:
            d[key] = tuple(d[key])
    return TrainConfig(**d)


def config_hash(*cfgs) -> str:
    blob = json.dumps([to_dict(c) for c in cfgs], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
