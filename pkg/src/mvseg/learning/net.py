"""A small two-branch RGB-D encoder-decoder with per-scale classifiers.

The encoder runs parallel RGB and depth convolution stacks; after every
scale the depth features are added into the RGB path and the result is
max-pooled with remembered switches. The decoder mirrors the encoder with
memorized unpooling followed by stride-1 deconvolution, and a 1x1
classifier produces class scores at every decoder resolution, coarsest
first. All passes are hand-derived numpy; parameters live in a flat
name -> array dict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mvseg.core import ConfigError, ShapeError
from mvseg.learning import layers


@dataclass(frozen=True)
class ToyNetConfig:
    num_classes: int = 4
    widths: tuple = (8, 16)
    kernel: int = 3

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"need >= 2 classes, got {self.num_classes}")
        if not self.widths:
            raise ConfigError("need at least one encoder scale")
        if self.kernel % 2 == 0:
            raise ConfigError("kernel size must be odd")

    @property
    def num_scales(self):
        return len(self.widths)

    def decoder_width(self, stage):
        return self.widths[max(stage - 1, 0)]

    @property
    def scales(self):
        """Downsampling exponents of the emitted score maps, coarse to fine."""
        return list(range(self.num_scales - 1, -1, -1))


@dataclass
class FrameForward:
    """Forward-pass results for one frame."""

    scores: list  # (K, H/2^l, W/2^l), coarse -> fine
    features: list  # decoder features feeding each classifier, same order
    scales: list  # downsampling exponent per entry
    cache: dict = field(repr=False, default_factory=dict)


def init_params(config: ToyNetConfig, rng):
    """He-style initialization; biases start at zero."""

    def conv_init(cout, cin, k):
        std = np.sqrt(2.0 / (cin * k * k))
        return rng.normal(0.0, std, size=(cout, cin, k, k))

    k = config.kernel
    params = {}
    in_rgb, in_d = 3, 1
    for i, width in enumerate(config.widths):
        params[f"enc_rgb{i}_w"] = conv_init(width, in_rgb, k)
        params[f"enc_rgb{i}_b"] = np.zeros(width)
        params[f"enc_d{i}_w"] = conv_init(width, in_d, k)
        params[f"enc_d{i}_b"] = np.zeros(width)
        in_rgb = in_d = width
    for i in range(config.num_scales):
        cin = config.widths[i]
        cout = config.decoder_width(i)
        std = np.sqrt(2.0 / (cin * k * k))
        params[f"dec{i}_w"] = rng.normal(0.0, std, size=(cin, cout, k, k))
        params[f"dec{i}_b"] = np.zeros(cout)
        params[f"cls{i}_w"] = conv_init(config.num_classes, cout, 1)
        params[f"cls{i}_b"] = np.zeros(config.num_classes)
    return params


def zero_grads(params):
    return {name: np.zeros_like(p) for name, p in params.items()}


def _check_inputs(config, rgb, depth):
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ShapeError(f"rgb must be (3, H, W), got {rgb.shape}")
    if depth.ndim == 2:
        depth = depth[None]
    if depth.shape[0] != 1 or depth.shape[1:] != rgb.shape[1:]:
        raise ShapeError(
            f"depth shape {depth.shape} does not match rgb {rgb.shape}"
        )
    div = 1 << config.num_scales
    if rgb.shape[1] % div or rgb.shape[2] % div:
        raise ConfigError(
            f"input {rgb.shape[1]}x{rgb.shape[2]} not divisible by {div}"
        )
    return rgb.astype(np.float64), depth.astype(np.float64)


def toynet_forward_full(params, config: ToyNetConfig, rgb, depth) -> FrameForward:
    """Run the network and keep every intermediate needed for backward."""
    rgb, depth = _check_inputs(config, rgb, depth)
    s = config.num_scales
    cache = {"enc": [], "dec": []}

    x_rgb, x_d = rgb, depth
    switches_rgb = []
    for i in range(s):
        rgb_pre = layers.conv2d_forward(x_rgb, params[f"enc_rgb{i}_w"], params[f"enc_rgb{i}_b"])
        rgb_act = layers.relu_forward(rgb_pre)
        d_pre = layers.conv2d_forward(x_d, params[f"enc_d{i}_w"], params[f"enc_d{i}_b"])
        d_act = layers.relu_forward(d_pre)
        fused = rgb_act + d_act
        pooled_fused, sw_rgb = layers.maxpool2_forward(fused)
        stage = {
            "rgb_in": x_rgb, "d_in": x_d,
            "rgb_pre": rgb_pre, "d_pre": d_pre,
            "sw_rgb": sw_rgb, "fused_shape": fused.shape,
        }
        if i < s - 1:
            pooled_d, sw_d = layers.maxpool2_forward(d_act)
            stage["sw_d"] = sw_d
            stage["d_act_shape"] = d_act.shape
            x_d = pooled_d
        cache["enc"].append(stage)
        switches_rgb.append(sw_rgb)
        x_rgb = pooled_fused

    x = x_rgb  # bottleneck
    feats, scores = {}, {}
    for i in range(s - 1, -1, -1):
        up = layers.unpool2_forward(x, switches_rgb[i])
        dec_pre = layers.deconv2d_forward(up, params[f"dec{i}_w"], params[f"dec{i}_b"])
        feat = layers.relu_forward(dec_pre)
        sc = layers.conv2d_forward(feat, params[f"cls{i}_w"], params[f"cls{i}_b"])
        cache["dec"].append({"stage": i, "in": x, "up": up, "dec_pre": dec_pre, "feat": feat})
        feats[i] = feat
        scores[i] = sc
        x = feat

    order = config.scales  # stage S-1 (coarsest) first
    return FrameForward(
        scores=[scores[i] for i in order],
        features=[feats[i] for i in order],
        scales=list(order),
        cache=cache,
    )


def toynet_forward(params, config: ToyNetConfig, rgb, depth):
    """Score maps at every decoder scale, coarse to fine."""
    return toynet_forward_full(params, config, rgb, depth).scores


def toynet_backward(params, config: ToyNetConfig, fwd: FrameForward,
                    grad_scores=None, grad_features=None):
    """Accumulate parameter gradients for one frame.

    ``grad_scores``/``grad_features`` are lists aligned with
    ``fwd.scores``/``fwd.features`` (None entries allowed): upstream
    gradients arriving at the per-scale classifier outputs and, for
    losses that tap the decoder directly, at the decoder features.
    """
    s = config.num_scales
    grads = zero_grads(params)
    n_out = len(fwd.scores)
    grad_scores = grad_scores or [None] * n_out
    grad_features = grad_features or [None] * n_out
    by_stage_scores = {fwd.scales[j]: grad_scores[j] for j in range(n_out)}
    by_stage_feats = {fwd.scales[j]: grad_features[j] for j in range(n_out)}
    dec_cache = {entry["stage"]: entry for entry in fwd.cache["dec"]}

    # Decoder: stage 0 produced the final feature map, so walk-up order is
    # 0, 1, ..., S-1, carrying the gradient each stage sends to its input.
    carry = None
    for i in range(s):
        entry = dec_cache[i]
        g_feat = np.zeros_like(entry["feat"])
        g_sc = by_stage_scores.get(i)
        if g_sc is not None:
            g_x, g_w, g_b = layers.conv2d_backward(
                entry["feat"], params[f"cls{i}_w"], g_sc)
            grads[f"cls{i}_w"] += g_w
            grads[f"cls{i}_b"] += g_b
            g_feat += g_x
        g_extra = by_stage_feats.get(i)
        if g_extra is not None:
            g_feat += g_extra
        if carry is not None:
            g_feat += carry
        g_pre = layers.relu_backward(entry["dec_pre"], g_feat)
        g_up, g_w, g_b = layers.deconv2d_backward(entry["up"], params[f"dec{i}_w"], g_pre)
        grads[f"dec{i}_w"] += g_w
        grads[f"dec{i}_b"] += g_b
        carry = layers.unpool2_backward(fwd.cache["enc"][i]["sw_rgb"], g_up)

    # Encoder: carry now holds the bottleneck gradient.
    g_pooled_fused = carry
    g_pooled_d = None
    for i in range(s - 1, -1, -1):
        stage = fwd.cache["enc"][i]
        g_fused = layers.maxpool2_backward(stage["sw_rgb"], g_pooled_fused,
                                           stage["fused_shape"])
        g_rgb_act = g_fused
        g_d_act = g_fused.copy()
        if g_pooled_d is not None:
            g_d_act += layers.maxpool2_backward(stage["sw_d"], g_pooled_d,
                                                stage["d_act_shape"])
        g_rgb_pre = layers.relu_backward(stage["rgb_pre"], g_rgb_act)
        g_rgb_in, g_w, g_b = layers.conv2d_backward(
            stage["rgb_in"], params[f"enc_rgb{i}_w"], g_rgb_pre)
        grads[f"enc_rgb{i}_w"] += g_w
        grads[f"enc_rgb{i}_b"] += g_b
        g_d_pre = layers.relu_backward(stage["d_pre"], g_d_act)
        g_d_in, g_w, g_b = layers.conv2d_backward(
            stage["d_in"], params[f"enc_d{i}_w"], g_d_pre)
        grads[f"enc_d{i}_w"] += g_w
        grads[f"enc_d{i}_b"] += g_b
        g_pooled_fused = g_rgb_in
        g_pooled_d = g_d_in
    return grads
