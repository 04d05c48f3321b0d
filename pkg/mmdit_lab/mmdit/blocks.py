from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import apply_rope, unified_attention
from .config import ModelConfig


class RMSNorm(nn.Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + self.eps) * self.weight


class Modulation(nn.Module):
    """Timestep-conditioned (shift, scale, gate) chunks, adaLN style."""

    def __init__(self, dim: int, n_chunks: int):
        super().__init__()
        self.n_chunks = n_chunks
        self.linear = nn.Linear(dim, n_chunks * dim)

    def forward(self, vec: torch.Tensor) -> tuple[torch.Tensor, ...]:
        return self.linear(F.silu(vec)).chunk(self.n_chunks, dim=-1)


class MLP(nn.Module):
    def __init__(self, dim: int, ratio: float):
        super().__init__()
        hidden = max(1, int(dim * ratio))
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x), approximate="tanh"))


class TimestepEmbedder(nn.Module):
    def __init__(self, dim: int, frequency_dim: int = 64):
        super().__init__()
        self.frequency_dim = frequency_dim
        self.fc1 = nn.Linear(frequency_dim, dim)
        self.fc2 = nn.Linear(dim, dim)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.frequency_dim // 2
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
        angles = (t.to(torch.float64) * 1000.0)[..., None] * freqs
        emb = torch.cat([angles.cos(), angles.sin()], dim=-1).to(self.fc1.weight.dtype)
        return self.fc2(F.silu(self.fc1(emb)))


class _Stream(nn.Module):
    """QKV + output projection + MLP for one parameter set."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.mod = Modulation(d, 6)
        self.norm1 = RMSNorm(d)
        self.qkv = nn.Linear(d, 3 * d)
        self.q_norm = RMSNorm(config.head_dim)
        self.k_norm = RMSNorm(config.head_dim)
        self.attn_out = nn.Linear(d, d)
        self.norm2 = RMSNorm(d)
        self.mlp = MLP(d, config.mlp_ratio)

    def project(self, x, vec, n_heads, cos, sin):
        shift1, scale1, gate1, shift2, scale2, gate2 = self.mod(vec)
        h = self.norm1(x) * (1 + scale1) + shift1
        q, k, v = self.qkv(h).chunk(3, dim=-1)
        n = x.shape[0]
        q = apply_rope(self.q_norm(q.reshape(n, n_heads, -1)), cos, sin).reshape(n, -1)
        k = apply_rope(self.k_norm(k.reshape(n, n_heads, -1)), cos, sin).reshape(n, -1)
        return (q, k, v), (gate1, shift2, scale2, gate2)

    def finish(self, x, attn, modulation):
        gate1, shift2, scale2, gate2 = modulation
        x = x + gate1 * self.attn_out(attn)
        h = self.norm2(x) * (1 + scale2) + shift2
        return x + gate2 * self.mlp(h)


class DoubleStreamBlock(nn.Module):
    """
    Separate text-side and image-side parameters sharing one attention operation.

    Rows ``[0, text_len)`` (content + padding) use the text stream; every later row
    (reference and image) uses the image stream.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_heads = config.n_heads
        self.text_len = config.text_len
        self.txt = _Stream(config)
        self.img = _Stream(config)

    def forward(self, x, vec, cos, sin, mask=None):
        L = self.text_len
        txt_qkv, txt_mod = self.txt.project(x[:L], vec, self.n_heads, cos[:L], sin[:L])
        img_qkv, img_mod = self.img.project(x[L:], vec, self.n_heads, cos[L:], sin[L:])
        q, k, v = (torch.cat([a, b], dim=0) for a, b in zip(txt_qkv, img_qkv))
        attn = unified_attention(q, k, v, self.n_heads, mask)
        return torch.cat(
            [self.txt.finish(x[:L], attn[:L], txt_mod), self.img.finish(x[L:], attn[L:], img_mod)],
            dim=0,
        )


class SingleStreamBlock(nn.Module):
    """One shared parameter set for the whole concatenated sequence."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_heads = config.n_heads
        self.stream = _Stream(config)

    def forward(self, x, vec, cos, sin, mask=None):
        (q, k, v), modulation = self.stream.project(x, vec, self.n_heads, cos, sin)
        attn = unified_attention(q, k, v, self.n_heads, mask)
        return self.stream.finish(x, attn, modulation)


class FinalLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.mod = Modulation(config.d_model, 2)
        self.norm = RMSNorm(config.d_model)
        self.linear = nn.Linear(config.d_model, config.d_model)

    def forward(self, x, vec):
        shift, scale = self.mod(vec)
        return self.linear(self.norm(x) * (1 + scale) + shift)
