"""Encoder/decoder pair around the multi-codebook quantizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from ctvae.mcqvae.quantizer import CodeGrid, MultiCodebookQuantizer

DOWNSAMPLE_FACTOR = 8  # three stride-2 stages


@dataclass
class McqVaeConfig:
    image_size: tuple[int, int] = (32, 32)
    channels: int = 1
    hidden: int = 64
    embedding_dim: int = 128
    num_codebooks: int = 1
    codebook_size: int = 64

    def __post_init__(self):
        h, w = self.image_size
        if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
            raise ValueError(f"image size {self.image_size} must be divisible by {DOWNSAMPLE_FACTOR}")

    @property
    def latent_size(self) -> tuple[int, int]:
        return self.image_size[0] // DOWNSAMPLE_FACTOR, self.image_size[1] // DOWNSAMPLE_FACTOR

    @property
    def num_nodes(self) -> int:
        lh, lw = self.latent_size
        return lh * lw * self.num_codebooks

    def to_dict(self) -> dict:
        return {
            "image_size": list(self.image_size),
            "channels": self.channels,
            "hidden": self.hidden,
            "embedding_dim": self.embedding_dim,
            "num_codebooks": self.num_codebooks,
            "codebook_size": self.codebook_size,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "McqVaeConfig":
        return cls(
            image_size=tuple(data["image_size"]),
            channels=int(data["channels"]),
            hidden=int(data["hidden"]),
            embedding_dim=int(data["embedding_dim"]),
            num_codebooks=int(data["num_codebooks"]),
            codebook_size=int(data["codebook_size"]),
        )


def _norm(channels: int) -> nn.GroupNorm:
    # batch-independent normalization keeps training deterministic and pulls
    # the decoder off the mean-image plateau that binary sprites induce
    return nn.GroupNorm(min(8, channels), channels)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
            _norm(channels),
            nn.ReLU(),
            nn.Conv2d(channels, channels, 1),
        )

    def forward(self, x):
        return x + self.body(x)


class Encoder(nn.Module):
    """Three stride-2 convolutions plus two residual blocks, then a 1x1
    projection to the embedding dimension (8x spatial reduction)."""

    def __init__(self, cfg: McqVaeConfig):
        super().__init__()
        h = cfg.hidden
        self.cfg = cfg
        self.net = nn.Sequential(
            nn.Conv2d(cfg.channels, h // 2, 4, stride=2, padding=1),
            _norm(h // 2),
            nn.ReLU(),
            nn.Conv2d(h // 2, h, 4, stride=2, padding=1),
            _norm(h),
            nn.ReLU(),
            nn.Conv2d(h, h, 4, stride=2, padding=1),
            ResidualBlock(h),
            ResidualBlock(h),
            nn.Conv2d(h, cfg.embedding_dim, 1),
        )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) images -> (B, h, w, D) feature grid."""
        b, c, h, w = images.shape
        if (h, w) != self.cfg.image_size or c != self.cfg.channels:
            raise ValueError(
                f"expected images of shape (B, {self.cfg.channels}, {self.cfg.image_size[0]}, "
                f"{self.cfg.image_size[1]}), got {tuple(images.shape)}"
            )
        feats = self.net(images)
        return feats.permute(0, 2, 3, 1).contiguous()


class Decoder(nn.Module):
    """Mirror of the encoder: residual stack then three stride-2 transposed
    convolutions, sigmoid output in [0, 1]."""

    def __init__(self, cfg: McqVaeConfig):
        super().__init__()
        h = cfg.hidden
        self.cfg = cfg
        self.net = nn.Sequential(
            nn.Conv2d(cfg.embedding_dim, h, 3, padding=1),
            ResidualBlock(h),
            ResidualBlock(h),
            nn.ConvTranspose2d(h, h, 4, stride=2, padding=1),
            _norm(h),
            nn.ReLU(),
            nn.ConvTranspose2d(h, h // 2, 4, stride=2, padding=1),
            _norm(h // 2),
            nn.ReLU(),
            nn.ConvTranspose2d(h // 2, cfg.channels, 4, stride=2, padding=1),
            nn.Sigmoid(),
        )

    def forward(self, embedded: torch.Tensor) -> torch.Tensor:
        """(B, h, w, D) embedded grid -> (B, C, H, W) image in [0, 1]."""
        lh, lw = self.cfg.latent_size
        if embedded.shape[1:] != (lh, lw, self.cfg.embedding_dim):
            raise ValueError(
                f"expected embedded grid (B, {lh}, {lw}, {self.cfg.embedding_dim}), "
                f"got {tuple(embedded.shape)}"
            )
        return self.net(embedded.permute(0, 3, 1, 2).contiguous())


class McqVae(nn.Module):
    def __init__(self, cfg: McqVaeConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.quantizer = MultiCodebookQuantizer(
            cfg.num_codebooks, cfg.codebook_size, cfg.embedding_dim
        )
        self.decoder = Decoder(cfg)

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        return self.encoder(images)

    def quantize(self, features: torch.Tensor) -> CodeGrid:
        return self.quantizer(features)

    def decode(self, code: CodeGrid) -> torch.Tensor:
        return self.decoder(code.embedded)

    def decode_indices(self, indices: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.quantizer.grid_from_indices(indices).embedded)

    def forward(self, images: torch.Tensor):
        features = self.encoder(images)
        code = self.quantizer(features)
        recon = self.decoder(code.embedded)
        return recon, code, features

    def codes_for(self, images: torch.Tensor) -> CodeGrid:
        with torch.no_grad():
            return self.quantizer(self.encoder(images))


def images_to_tensor(images: np.ndarray) -> torch.Tensor:
    """(B, H, W, C) float arrays in [0, 1] -> (B, C, H, W) float32 tensor."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


def tensor_to_images(batch: torch.Tensor) -> np.ndarray:
    """(B, C, H, W) tensor -> (B, H, W, C) float32 array."""
    return batch.detach().permute(0, 2, 3, 1).contiguous().cpu().numpy()
