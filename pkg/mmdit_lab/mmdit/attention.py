from __future__ import annotations

import math

import torch

from ..exceptions import FullyMaskedRow, ShapeMismatch


def rope_tables(positions: torch.Tensor, axes: tuple[int, ...], theta: float = 10000.0):
    """
    cos/sin tables of shape [n_tokens, head_dim // 2] for integer positions [n_tokens, n_axes].

    Each axis rotates its own slice of the head dimension.
    """
    angles = []
    for axis, dim in enumerate(axes):
        if dim == 0:
            continue
        freqs = 1.0 / (theta ** (torch.arange(0, dim, 2, dtype=torch.float64) / dim))
        angles.append(positions[:, axis].to(torch.float64)[:, None] * freqs[None, :])
    angle = torch.cat(angles, dim=-1)
    return angle.cos(), angle.sin()


def apply_rope(x: torch.Tensor, cos: torch.Tensor, sin: torch.Tensor) -> torch.Tensor:
    """x: [n_tokens, n_heads, head_dim]; rotates interleaved (even, odd) pairs."""
    n, h, d = x.shape
    pairs = x.reshape(n, h, d // 2, 2)
    x0, x1 = pairs[..., 0], pairs[..., 1]
    c, s = cos[:, None, :], sin[:, None, :]
    return torch.stack([x0 * c - x1 * s, x1 * c + x0 * s], dim=-1).reshape(n, h, d)


def _split_heads(x: torch.Tensor, n_heads: int) -> torch.Tensor:
    n, d = x.shape
    return x.reshape(n, n_heads, d // n_heads).transpose(0, 1)


def check_mask(mask: torch.Tensor, n_tokens: int) -> None:
    if tuple(mask.shape) != (n_tokens, n_tokens):
        raise ShapeMismatch(f"mask {tuple(mask.shape)} != ({n_tokens}, {n_tokens})")
    allowed = mask.any(dim=-1)
    if not bool(allowed.all()):
        raise FullyMaskedRow(torch.nonzero(~allowed).flatten().tolist())


def attention_weights(q: torch.Tensor, k: torch.Tensor, n_heads: int, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Softmax probabilities [n_heads, n_tokens, n_tokens]; blocked logits are -inf before the softmax."""
    if q.shape != k.shape or q.ndim != 2:
        raise ShapeMismatch("q and k must be matching [n_tokens, d_model] matrices")
    if q.shape[1] % n_heads:
        raise ShapeMismatch(f"width {q.shape[1]} not divisible by {n_heads} heads")
    n = q.shape[0]
    qh, kh = _split_heads(q, n_heads), _split_heads(k, n_heads)
    logits = (qh @ kh.transpose(-2, -1)) / math.sqrt(qh.shape[-1])
    if mask is not None:
        check_mask(mask, n)
        logits = logits.masked_fill(~mask.to(torch.bool), float("-inf"))
    return torch.softmax(logits, dim=-1)


def unified_attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    n_heads: int,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """One joint attention over the whole sequence; ``mask[i, j]`` allows query i to read key j."""
    if v.shape != q.shape:
        raise ShapeMismatch("v must match q")
    probs = attention_weights(q, k, n_heads, mask)
    out = probs @ _split_heads(v, n_heads)
    return out.transpose(0, 1).reshape(q.shape)
