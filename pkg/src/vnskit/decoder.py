"""Forward pass of the mask-edge token decoder.

Token layout is ``[sam-output, prompt..., vns-mask, vns-edge]``. Two two-way
transformer layers update tokens and the image embedding; after each layer the
edge token is folded into the mask token, and in training mode each level
produces a mask logit map (MPL head) and an edge logit map (EPL head). Inference
keeps only the second-level mask and the SAM output-token mask.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import ShapeError, TokenSet

N_LAYERS = 2
LEVELS = (1, 2)


class ConfigurationError(ValueError):
    """Token set or configuration does not fit the decoder contract."""


@dataclass(frozen=True)
class DecoderConfig:
    dim: int = 256
    heads: int = 8
    mlp_dim: int = 2048
    feat_channels: int = 32  # channels of the mined mask/edge features
    fuse_hidden: int = 16

    def __post_init__(self):
        if self.dim % self.heads:
            raise ConfigurationError(f"{self.heads} heads do not divide dim {self.dim}")
        if self.dim % 8:
            raise ConfigurationError("dim must be a multiple of 8 for the upscaling path")

    @property
    def up_channels(self):
        return self.dim // 8


FULL_DECODER = DecoderConfig()


@dataclass
class DecoderOutput:
    """Logit maps keyed by level; infer mode carries level 2 masks only."""

    mode: str
    vns_mask: dict
    vns_edge: dict
    sam_mask: np.ndarray
    attention: list = field(default_factory=list, repr=False)

    def maps(self):
        out = [(f"vns_mask_l{k}", v) for k, v in sorted(self.vns_mask.items())]
        out += [(f"vns_edge_l{k}", v) for k, v in sorted(self.vns_edge.items())]
        out.append(("sam_mask", self.sam_mask))
        return out


# ---------------------------------------------------------------- weights

def _attn_params(pb, name, dim):
    for proj in "qkvo":
        pb.linear(f"{name}.{proj}", dim, dim)


def init_decoder(cfg: DecoderConfig, rng, params=None, prefix="dec"):
    pb = nn.ParamBuilder(rng, params)
    d, cu, cf = cfg.dim, cfg.up_channels, cfg.feat_channels
    pb.vector(f"{prefix}.pe.gauss", (2, d // 2))
    for name in ("sam", "vns_mask", "vns_edge", "point", "box_tl", "box_br"):
        pb.vector(f"{prefix}.embed.{name}", (d,), scale=0.02)
    for layer in range(N_LAYERS):
        p = f"{prefix}.layer{layer}"
        _attn_params(pb, f"{p}.self_attn", d)
        pb.norm(f"{p}.norm1", d)
        _attn_params(pb, f"{p}.t2i", d)
        pb.norm(f"{p}.norm2", d)
        pb.linear(f"{p}.mlp.0", d, cfg.mlp_dim)
        pb.linear(f"{p}.mlp.1", cfg.mlp_dim, d)
        pb.norm(f"{p}.norm3", d)
        _attn_params(pb, f"{p}.i2t", d)
        pb.norm(f"{p}.norm4", d)
    pb.linear(f"{prefix}.fuse", d, d)
    pb.conv_t(f"{prefix}.up.0", d, d // 4)
    pb.norm(f"{prefix}.up.norm", d // 4)
    pb.conv_t(f"{prefix}.up.1", d // 4, cu)
    for level in LEVELS:
        init_mpl(pb, f"{prefix}.level{level}.mpl", cfg)
        init_epl(pb, f"{prefix}.level{level}.epl", cfg)
    _token_mlp(pb, f"{prefix}.sam_head", d, cu)
    return pb.params


def _token_mlp(pb, name, d, cout):
    pb.linear(f"{name}.0", d, d)
    pb.linear(f"{name}.1", d, d)
    pb.linear(f"{name}.2", d, cout)


def init_epl(pb, name, cfg: DecoderConfig):
    pb.conv(f"{name}.proj", 1, 1, cfg.feat_channels, cfg.up_channels)
    _token_mlp(pb, f"{name}.mlp", cfg.dim, cfg.up_channels)


def init_mpl(pb, name, cfg: DecoderConfig):
    init_epl(pb, name, cfg)
    cu = cfg.up_channels
    pb.conv(f"{name}.supp.0", 3, 3, cu, cu)
    pb.conv(f"{name}.supp.1", 1, 1, cu, 1)
    pb.conv(f"{name}.head.0", 3, 3, 2, cfg.fuse_hidden)
    pb.conv(f"{name}.head.1", 1, 1, cfg.fuse_hidden, 1)


# ---------------------------------------------------------------- attention

def attention(q_in, k_in, v_in, p, heads):
    """Multi-head attention; returns ``(output, probabilities[heads, nq, nk])``."""
    q = nn.linear(q_in, nn.sub(p, "q"))
    k = nn.linear(k_in, nn.sub(p, "k"))
    v = nn.linear(v_in, nn.sub(p, "v"))
    nq, d = q.shape
    hd = d // heads
    q = q.reshape(nq, heads, hd).transpose(1, 0, 2)
    k = k.reshape(-1, heads, hd).transpose(1, 0, 2)
    v = v.reshape(-1, heads, hd).transpose(1, 0, 2)
    probs = nn.softmax(q @ k.transpose(0, 2, 1) / np.sqrt(hd), axis=-1)
    out = (probs @ v).transpose(1, 0, 2).reshape(nq, d)
    return nn.linear(out, nn.sub(p, "o")), probs


def _two_way(queries, keys, query_pe, key_pe, p, heads, trace):
    out, a = attention(queries + query_pe, queries + query_pe, queries, nn.sub(p, "self_attn"), heads)
    queries = nn.layer_norm(queries + out, nn.sub(p, "norm1"))
    out, b = attention(queries + query_pe, keys + key_pe, keys, nn.sub(p, "t2i"), heads)
    queries = nn.layer_norm(queries + out, nn.sub(p, "norm2"))
    queries = nn.layer_norm(queries + nn.mlp(queries, nn.sub(p, "mlp"), 2), nn.sub(p, "norm3"))
    out, c = attention(keys + key_pe, queries + query_pe, queries, nn.sub(p, "i2t"), heads)
    keys = nn.layer_norm(keys + out, nn.sub(p, "norm4"))
    if trace is not None:
        trace.extend([a, b, c])
    return queries, keys


def two_way_layer(tokens: TokenSet, emb, p, heads, query_pe=None, key_pe=None, trace=None):
    """One layer: token self-attention, token-to-image attention, token MLP,
    image-to-token attention, each with a residual and layer norm.

    ``p`` holds this layer's parameters; ``emb`` is HxWxD. Attention
    probabilities are appended to ``trace`` when given.
    """
    emb = np.asarray(emb, np.float64)
    if emb.ndim != 3 or emb.shape[2] != tokens.dim:
        raise ShapeError(f"embedding {emb.shape} does not match token dim {tokens.dim}")
    h, w, d = emb.shape
    keys = emb.reshape(h * w, d)
    query_pe = np.zeros_like(tokens.tokens) if query_pe is None else query_pe
    key_pe = np.zeros_like(keys) if key_pe is None else key_pe.reshape(h * w, d)
    q, k = _two_way(tokens.tokens, keys, query_pe, key_pe, p, heads, trace)
    return TokenSet(q, tokens.labels), k.reshape(h, w, d)


def fuse_vns_tokens(e_mk, e_eg, p):
    """Linear map of the element-wise sum of the two VNS tokens."""
    e_mk, e_eg = np.asarray(e_mk), np.asarray(e_eg)
    if e_mk.shape != e_eg.shape:
        raise ShapeError(f"token shapes differ: {e_mk.shape} vs {e_eg.shape}")
    return nn.linear(e_mk + e_eg, p)


# ---------------------------------------------------------------- prompts / pe

def positional_encoding(coords, gauss):
    """Random Fourier features of (x, y) coordinates normalized to [0, 1]."""
    c = 2.0 * np.asarray(coords, np.float64) - 1.0
    proj = 2.0 * np.pi * (c @ gauss)
    return np.concatenate([np.sin(proj), np.cos(proj)], axis=-1)


def image_pe(h, w, gauss):
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    grid = np.stack(np.meshgrid(xs, ys, indexing="xy"), axis=-1)
    return positional_encoding(grid, gauss)


def encode_prompts(params, image_size, box=None, points=None, prefix="dec") -> TokenSet:
    """Box corners and positive points as prompt tokens (coordinates in pixels)."""
    p = nn.sub(params, prefix)
    img_w, img_h = image_size
    scale = np.array([img_w, img_h], np.float64)
    rows = []
    for x, y in points or ():
        rows.append(positional_encoding(np.array([x + 0.5, y + 0.5]) / scale, p["pe.gauss"]) + p["embed.point"])
    if box is not None:
        x1, y1, x2, y2 = box
        rows.append(positional_encoding(np.array([x1, y1]) / scale, p["pe.gauss"]) + p["embed.box_tl"])
        rows.append(positional_encoding(np.array([x2, y2]) / scale, p["pe.gauss"]) + p["embed.box_br"])
    if not rows:
        raise ConfigurationError("at least one prompt is required")
    return TokenSet(np.stack(rows), ("prompt",) * len(rows))


def assemble_tokens(prompt_tokens: TokenSet, params, prefix="dec") -> TokenSet:
    p = nn.sub(params, prefix)
    head = TokenSet(p["embed.sam"][None], ("sam-output",))
    tail = TokenSet(np.stack([p["embed.vns_mask"], p["embed.vns_edge"]]), ("vns-mask", "vns-edge"))
    return head.concat(prompt_tokens).concat(tail)


def _check_layout(tokens: TokenSet):
    labels = tokens.labels
    if labels.count("vns-mask") != 1 or labels.count("vns-edge") != 1:
        raise ConfigurationError("exactly one vns-mask and one vns-edge token are required")
    if labels[-2:] != ("vns-mask", "vns-edge"):
        raise ConfigurationError("VNS tokens must come last, mask before edge")
    if labels.count("sam-output") != 1 or labels[0] != "sam-output":
        raise ConfigurationError("the SAM output token must come first")


# ---------------------------------------------------------------- heads

def upscale(emb, p):
    x = nn.conv_transpose2x2(emb, nn.sub(p, "0"))
    x = nn.gelu(nn.layer_norm(x, nn.sub(p, "norm")))
    return nn.gelu(nn.conv_transpose2x2(x, nn.sub(p, "1")))


def _token_dot(token, feat, p):
    h = nn.mlp(token, p, 3)
    if feat.shape[2] != h.shape[0]:
        raise ShapeError(f"token head width {h.shape[0]} vs feature channels {feat.shape[2]}")
    return feat @ h


def _fused_feature(up_emb, feat, p):
    if feat.shape[:2] != up_emb.shape[:2]:
        raise ShapeError(f"feature {feat.shape[:2]} vs upscaled embedding {up_emb.shape[:2]}")
    return up_emb + nn.conv2d(feat, nn.sub(p, "proj"))


def epl_forward(e_eg, up_emb, f_eg, p):
    """Edge logits: token MLP dotted with the fused edge feature."""
    fused = _fused_feature(up_emb, f_eg, p)
    return _token_dot(e_eg, fused, nn.sub(p, "mlp"))


def mpl_forward(e_mk, up_emb, f_mk, p):
    """Mask logits: token dot-product map concatenated with a map computed from the
    upscaled embedding, fused by a 3x3 then a 1x1 convolution."""
    fused = _fused_feature(up_emb, f_mk, p)
    dot = _token_dot(e_mk, fused, nn.sub(p, "mlp"))
    supp = nn.gelu(nn.conv2d(up_emb, nn.sub(p, "supp.0")))
    supp = nn.conv2d(supp, nn.sub(p, "supp.1"))[..., 0]
    x = nn.gelu(nn.conv2d(np.stack([dot, supp], axis=-1), nn.sub(p, "head.0")))
    return nn.conv2d(x, nn.sub(p, "head.1"))[..., 0]


def mpl_param_count(cfg: DecoderConfig) -> int:
    d, cu, cf, hid = cfg.dim, cfg.up_channels, cfg.feat_channels, cfg.fuse_hidden
    return epl_param_count(cfg) + (9 * cu * cu + cu) + (cu + 1) + (9 * 2 * hid + hid) + (hid + 1)


def epl_param_count(cfg: DecoderConfig) -> int:
    d, cu, cf = cfg.dim, cfg.up_channels, cfg.feat_channels
    return (cf * cu + cu) + (d * d + d) * 2 + (d * cu + cu)


# ---------------------------------------------------------------- full pass

def decoder_forward(emb, tokens: TokenSet, f_mk, f_eg, params, cfg: DecoderConfig,
                    mode="train", prefix="dec", trace=None) -> DecoderOutput:
    """Run both layers. ``tokens`` is the full set (see :func:`assemble_tokens`)."""
    if mode not in ("train", "infer"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    _check_layout(tokens)
    emb = np.asarray(emb, np.float64)
    if emb.ndim != 3 or emb.shape[2] != cfg.dim or tokens.dim != cfg.dim:
        raise ShapeError(f"embedding {emb.shape} / token dim {tokens.dim} vs config dim {cfg.dim}")
    p = nn.sub(params, prefix)
    h, w, _ = emb.shape
    key_pe = image_pe(h, w, p["pe.gauss"])
    query_pe = tokens.tokens
    i_mk, i_eg = len(tokens) - 2, len(tokens) - 1
    attn = [] if trace is None else trace
    masks, edges = {}, {}
    up = None
    for layer in range(N_LAYERS):
        level = layer + 1
        tokens, emb = two_way_layer(tokens, emb, nn.sub(p, f"layer{layer}"), cfg.heads,
                                    query_pe, key_pe, attn)
        e_eg = tokens.tokens[i_eg]
        tokens = tokens.replace(i_mk, fuse_vns_tokens(tokens.tokens[i_mk], e_eg, nn.sub(p, "fuse")))
        if mode == "infer" and level < N_LAYERS:
            continue
        up = upscale(emb, nn.sub(p, "up"))
        masks[level] = mpl_forward(tokens.tokens[i_mk], up, f_mk, nn.sub(p, f"level{level}.mpl"))
        if mode == "train":
            edges[level] = epl_forward(e_eg, up, f_eg, nn.sub(p, f"level{level}.epl"))
    sam = _token_dot(tokens.tokens[0], up, nn.sub(p, "sam_head"))
    return DecoderOutput(mode, masks, edges, sam, attn)
