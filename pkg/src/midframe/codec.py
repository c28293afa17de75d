"""Vector-quantized autoencoder with a motion-guided decoder.

The encoder maps a frame to a latent at downsample factor f and exposes a
feature pyramid tapped after every stage. The decoder reconstructs the
middle frame from the quantized latent by hierarchically fusing warped
neighbor-frame features under motion-hint guidance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import ConfigError, ShapeError, TrainingDiverged
from .hints import HintSource, MotionHints, extract_motion_hints, hints_to_tensor, make_hint_backend
from .nn_blocks import Downsample, ResBlock, Upsample, group_norm, seed_parameters, zero_module
from .warp import GuidedWarp


@dataclass
class CodecConfig:
    in_channels: int = 1
    f: int = 8                      # spatial downsample factor (power of two)
    codebook_size: int = 512
    embed_dim: int = 64
    base_width: int = 64
    hint_channels: int = 18         # 2*B per hint direction
    channel_mult: tuple = ()        # per-level width multipliers; default (1, 2, 4, ...)

    def __post_init__(self):
        if self.f < 2 or self.f & (self.f - 1):
            raise ConfigError(f"f must be a power of two >= 2, got {self.f}")
        if self.codebook_size < 2:
            raise ConfigError(f"codebook_size must be >= 2, got {self.codebook_size}")
        if not self.channel_mult:
            self.channel_mult = tuple(min(2 ** i, 4) for i in range(self.pyramid_levels))
        if len(self.channel_mult) != self.pyramid_levels:
            raise ConfigError(
                f"channel_mult needs {self.pyramid_levels} entries, got {self.channel_mult}"
            )

    @property
    def pyramid_levels(self) -> int:
        return int(math.log2(self.f))

    @property
    def widths(self) -> list[int]:
        return [self.base_width * m for m in self.channel_mult]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LatentCode:
    """Encoder output, its quantized form, and the codebook indices."""

    z: torch.Tensor
    z_q: torch.Tensor
    indices: torch.Tensor


def quantize(z: torch.Tensor, codebook: torch.Tensor, beta_commit: float = 0.25):
    """Nearest-codebook-entry assignment with a straight-through gradient.

    Ties resolve to the lowest index. Returns (z_q, indices, vq_loss) where
    vq_loss = ||sg[z] - e||^2 + beta_commit * ||z - sg[e]||^2 (mean-squared).
    """
    if codebook.numel() == 0:
        raise ConfigError("empty codebook")
    b, d, h, w = z.shape
    if codebook.shape[1] != d:
        raise ShapeError(f"codebook dim {codebook.shape[1]} != latent dim {d}")
    flat = z.permute(0, 2, 3, 1).reshape(-1, d)
    dist = (
        flat.pow(2).sum(1, keepdim=True)
        - 2.0 * flat @ codebook.t()
        + codebook.pow(2).sum(1)
    )
    # numpy argmin guarantees the first (lowest-index) minimum
    idx_np = np.argmin(dist.detach().to(torch.float64).cpu().numpy(), axis=1)
    indices = torch.from_numpy(idx_np).to(z.device)
    z_q = codebook[indices].reshape(b, h, w, d).permute(0, 3, 1, 2)
    vq_loss = F.mse_loss(z_q, z.detach()) + beta_commit * F.mse_loss(z, z_q.detach())
    # straight-through with exact codebook values: z - z.detach() is exactly
    # zero, so z_q_st bit-equals the selected entries while grad(z_q_st, z) = I
    z_q_st = z_q.detach() + (z - z.detach())
    return z_q_st, indices.reshape(b, h, w), vq_loss


def codebook_perplexity(indices: torch.Tensor, codebook_size: int) -> float:
    """exp(entropy) of codebook usage; 1.0 means a single code is used."""
    hist = torch.bincount(indices.reshape(-1), minlength=codebook_size).double()
    p = hist / hist.sum()
    nz = p[p > 0]
    return float(torch.exp(-(nz * nz.log()).sum()))


class VectorQuantizer(nn.Module):
    def __init__(self, codebook_size: int, embed_dim: int, beta_commit: float = 0.25):
        super().__init__()
        self.codebook = nn.Embedding(codebook_size, embed_dim)
        self.codebook.weight.data.uniform_(-1.0 / codebook_size, 1.0 / codebook_size)
        self.beta_commit = beta_commit

    def forward(self, z: torch.Tensor):
        return quantize(z, self.codebook.weight, self.beta_commit)


class Encoder(nn.Module):
    """Strided conv encoder; pyramid taps are the per-stage outputs."""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        widths = cfg.widths
        self.stem = nn.Conv2d(cfg.in_channels, cfg.base_width, 3, padding=1)
        downs, blocks = [], []
        prev_w = cfg.base_width
        for w in widths:
            downs.append(Downsample(prev_w, w))
            blocks.append(ResBlock(w, w))
            prev_w = w
        self.downs = nn.ModuleList(downs)
        self.blocks = nn.ModuleList(blocks)
        self.out_norm = group_norm(widths[-1])
        self.out_conv = nn.Conv2d(widths[-1], cfg.embed_dim, 3, padding=1)

    def forward(self, x: torch.Tensor):
        h = self.stem(x)
        pyramid = []
        for down, block in zip(self.downs, self.blocks):
            h = block(down(h))
            pyramid.append(h)
        z = self.out_conv(F.silu(self.out_norm(h)))
        return z, pyramid


class Decoder(nn.Module):
    """Upsampling decoder with one hint-guided fusion block per level."""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        widths = cfg.widths
        self.levels = cfg.pyramid_levels
        self.hint_channels = cfg.hint_channels
        self.in_conv = nn.Conv2d(cfg.embed_dim, widths[-1], 3, padding=1)
        self.in_block = ResBlock(widths[-1], widths[-1])
        fuses, blocks, ups = [], [], []
        for i in reversed(range(self.levels)):  # coarse -> fine
            fuses.append(GuidedWarp(widths[i], cfg.hint_channels))
            blocks.append(ResBlock(widths[i], widths[i]))
            ups.append(Upsample(widths[i], widths[i - 1] if i > 0 else widths[0]))
        self.fuses = nn.ModuleList(fuses)
        self.post_blocks = nn.ModuleList(blocks)
        self.ups = nn.ModuleList(ups)
        self.head_norm = group_norm(widths[0])
        self.head = nn.Conv2d(widths[0], cfg.in_channels, 3, padding=1)

    def forward(self, z_q, pyramid_prev, pyramid_next, hints: torch.Tensor):
        if len(pyramid_prev) != self.levels or len(pyramid_next) != self.levels:
            raise ShapeError(
                f"expected {self.levels} pyramid levels, got "
                f"{len(pyramid_prev)}/{len(pyramid_next)}"
            )
        if hints.shape[1] != 2 * self.hint_channels:
            raise ShapeError(
                f"hints have {hints.shape[1]} channels, expected {2 * self.hint_channels}"
            )
        m_fwd = hints[:, : self.hint_channels]
        m_bwd = hints[:, self.hint_channels:]
        h = self.in_block(self.in_conv(z_q))
        for step, level in enumerate(reversed(range(self.levels))):
            h = self.fuses[step](h, pyramid_prev[level], pyramid_next[level], m_fwd, m_bwd)
            h = self.post_blocks[step](h)
            h = self.ups[step](h)
        return torch.sigmoid(self.head(F.silu(self.head_norm(h))))


class MotionGuidedCodec(nn.Module):
    def __init__(self, cfg: CodecConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.quantizer = VectorQuantizer(cfg.codebook_size, cfg.embed_dim)
        self.decoder = Decoder(cfg)

    def encode(self, images: torch.Tensor):
        h, w = images.shape[-2:]
        if h % self.cfg.f or w % self.cfg.f:
            raise ShapeError(
                f"resolution {h}x{w} not divisible by f={self.cfg.f}; resize required"
            )
        return self.encoder(images)

    def quantize(self, z: torch.Tensor):
        return self.quantizer(z)

    def latent_code(self, images: torch.Tensor) -> LatentCode:
        z, _ = self.encode(images)
        z_q, indices, _ = self.quantizer(z)
        return LatentCode(z=z, z_q=z_q, indices=indices)

    def decode(self, z_q, pyramid_prev, pyramid_next, hints: torch.Tensor):
        return self.decoder(z_q, pyramid_prev, pyramid_next, hints)

    def reconstruct(self, prev: torch.Tensor, mid: torch.Tensor, nxt: torch.Tensor,
                    hints: torch.Tensor):
        """Encode all three frames, quantize the middle, decode with hints."""
        n = mid.shape[0]
        z_all, pyr_all = self.encode(torch.cat([mid, prev, nxt], dim=0))
        z0 = z_all[:n]
        pyr_prev = [lvl[n:2 * n] for lvl in pyr_all]
        pyr_next = [lvl[2 * n:] for lvl in pyr_all]
        z_q, indices, vq_loss = self.quantizer(z0)
        recon = self.decode(z_q, pyr_prev, pyr_next, hints)
        return recon, vq_loss, indices


_SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
_SOBEL_Y = _SOBEL_X.t().contiguous()


def edge_gradient_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """L1 distance between Sobel gradient maps; perceptual-loss stand-in."""
    c = a.shape[1]
    kx = _SOBEL_X.to(a.dtype).expand(c, 1, 3, 3)
    ky = _SOBEL_Y.to(a.dtype).expand(c, 1, 3, 3)
    loss = 0.0
    for k in (kx, ky):
        ga = F.conv2d(a, k, padding=1, groups=c)
        gb = F.conv2d(b, k, padding=1, groups=c)
        loss = loss + (ga - gb).abs().mean()
    return loss


class PatchDiscriminator(nn.Module):
    """3-layer patch discriminator for the hinge adversarial loss."""

    def __init__(self, in_channels: int = 1, width: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, width, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, width * 2, 4, stride=2, padding=1),
            group_norm(width * 2),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width * 2, 1, 4, padding=1),
        )

    def forward(self, x):
        return self.net(x)


def hinge_d_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    return F.relu(1.0 - real_logits).mean() + F.relu(1.0 + fake_logits).mean()


def hint_dropout_coin(gen: torch.Generator, p: float = 0.5) -> bool:
    """True means replace this sample's hints with empty hints."""
    return bool(torch.rand((), generator=gen) < p)


@dataclass
class CodecTrainConfig:
    steps: int = 2000
    batch_size: int = 4
    lr: float = 1e-4
    lambda_percep: float = 0.1
    lambda_adv: float = 0.1
    adv_warmup_frac: float = 0.2
    hint_dropout: float = 0.5
    use_hints: bool = True
    hint_backend: str = "simulator"
    contrast_threshold: float = 0.2
    b_channels: int = 9
    disc_width: int = 32
    augment: bool = False
    crop: int | None = None


@dataclass
class CodecTrainResult:
    model: MotionGuidedCodec
    discriminator: PatchDiscriminator
    optimizer: torch.optim.Optimizer
    disc_optimizer: torch.optim.Optimizer
    generator: torch.Generator | None = None
    history: dict = field(default_factory=dict)


def train_codec(
    triplets,
    codec_cfg: CodecConfig,
    train_cfg: CodecTrainConfig,
    seed: int = 0,
) -> CodecTrainResult:
    """Train the autoencoder on frame triplets (appendix-style procedure).

    Each step samples a batch, extracts hints from the ground-truth middle
    frame, replaces each sample's hints with empty ones with probability
    hint_dropout, reconstructs the middle frame, and minimizes
    L1 + lambda_percep * edge loss + vq loss (+ hinge adversarial term after
    a warm-up fraction of the steps).
    """
    from .data import augment as augment_triplet

    if 2 * train_cfg.b_channels != codec_cfg.hint_channels:
        raise ConfigError(
            f"b_channels={train_cfg.b_channels} inconsistent with "
            f"hint_channels={codec_cfg.hint_channels}"
        )
    gen = torch.Generator().manual_seed(seed)
    model = MotionGuidedCodec(codec_cfg)
    seed_parameters(model, seed)
    disc = PatchDiscriminator(codec_cfg.in_channels, train_cfg.disc_width)
    seed_parameters(disc, seed + 1)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr, betas=(0.5, 0.9))
    d_opt = torch.optim.Adam(disc.parameters(), lr=train_cfg.lr, betas=(0.5, 0.9))
    backend = make_hint_backend(
        train_cfg.hint_backend,
        b_channels=train_cfg.b_channels,
        contrast_threshold=train_cfg.contrast_threshold,
    )

    adv_start = int(train_cfg.adv_warmup_frac * train_cfg.steps)
    history = {
        "loss": [], "l1": [], "percep": [], "vq": [], "g_adv": [], "d_loss": [],
        "perplexity": [], "hints_dropped": 0, "hints_seen": 0,
    }

    for step in range(train_cfg.steps):
        idx = torch.randint(len(triplets), (train_cfg.batch_size,), generator=gen)
        prevs, mids, nxts, hint_list = [], [], [], []
        for i in idx.tolist():
            tri = triplets[i]
            if train_cfg.augment:
                aug_seed = int(torch.randint(2 ** 31 - 1, (), generator=gen))
                tri = augment_triplet(tri, aug_seed, crop=train_cfg.crop)
            if train_cfg.use_hints and not hint_dropout_coin(gen, train_cfg.hint_dropout):
                hints = extract_motion_hints(tri.prev, tri.mid, tri.next, backend=backend)
                history["hints_seen"] += 1
            else:
                shape = (tri.mid.shape[0], tri.mid.shape[1], codec_cfg.hint_channels)
                hints = MotionHints(
                    np.zeros(shape, np.float32), np.zeros(shape, np.float32),
                    HintSource.EMPTY,
                )
                if train_cfg.use_hints:
                    history["hints_dropped"] += 1
            prevs.append(_to_tensor(tri.prev))
            mids.append(_to_tensor(tri.mid))
            nxts.append(_to_tensor(tri.next))
            hint_list.append(hints_to_tensor(hints))
        prev_b = torch.cat(prevs)
        mid_b = torch.cat(mids)
        nxt_b = torch.cat(nxts)
        hints_b = torch.cat(hint_list)

        recon, vq_loss, indices = model.reconstruct(prev_b, mid_b, nxt_b, hints_b)
        l1 = (recon - mid_b).abs().mean()
        percep = edge_gradient_loss(recon, mid_b)
        loss = l1 + train_cfg.lambda_percep * percep + vq_loss

        adv_active = train_cfg.lambda_adv > 0 and step >= adv_start
        if adv_active:
            g_adv = -disc(recon).mean()
            loss = loss + train_cfg.lambda_adv * g_adv
        else:
            g_adv = torch.zeros(())

        if not torch.isfinite(loss):
            raise TrainingDiverged(step, {
                "l1": l1.item(), "percep": percep.item(), "vq": vq_loss.item(),
                "g_adv": g_adv.item(),
            })
        opt.zero_grad()
        loss.backward()
        opt.step()

        d_loss_val = 0.0
        if adv_active:
            d_loss = hinge_d_loss(disc(mid_b), disc(recon.detach()))
            d_opt.zero_grad()
            d_loss.backward()
            d_opt.step()
            d_loss_val = d_loss.item()

        history["loss"].append(loss.item())
        history["l1"].append(l1.item())
        history["percep"].append(percep.item())
        history["vq"].append(vq_loss.item())
        history["g_adv"].append(g_adv.item())
        history["d_loss"].append(d_loss_val)
        history["perplexity"].append(codebook_perplexity(indices, codec_cfg.codebook_size))

    model.eval()
    return CodecTrainResult(model, disc, opt, d_opt, gen, history)


def _to_tensor(image: np.ndarray) -> torch.Tensor:
    """(H, W, C) float image in [0, 1] -> (1, C, H, W) float32 tensor."""
    if image.ndim == 2:
        image = image[:, :, None]
    arr = np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32)
    return torch.from_numpy(arr)[None]


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """(1, C, H, W) tensor -> (H, W, C) float32 numpy image."""
    return t.detach()[0].permute(1, 2, 0).contiguous().numpy()
