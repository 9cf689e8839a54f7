"""Deterministic forward (and, for the rational activation, backward)
implementations of the computational blocks: adaptive-average-pooling
prior extraction, bi-branch gated modulation, the channel-split gate,
group-rational activations, and the windowed spectral pipeline built on
them.

Feature maps are bare float arrays of shape (channels, height, width);
unlike images their channel count and value range are unconstrained.
No training loop lives here: linear maps are caller-supplied or drawn by
the variance-preserving initializer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import (
    ChannelCountError,
    DimensionMismatchError,
    EmptyInputError,
    IncompatibleStackError,
    NonFiniteInputError,
    WeightShapeError,
)
from .spectral import (
    dct_planes,
    idct_planes,
    invert_zigzag,
    window_partition,
    window_reverse,
    zigzag_order,
)

VARIANCE_MC_SAMPLES = 100_000


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact Gaussian-error GELU."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


# ---------------------------------------------------------------------------
# Adaptive average pooling prior
# ---------------------------------------------------------------------------

def _adaptive_avg_pool(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Adaptive mean pooling of (C, H, W) to (C, out_h, out_w); buckets are
    floor/ceil partitions, so uneven sizes are handled like the usual
    adaptive operators."""
    c, h, w = x.shape
    if h % out_h == 0 and w % out_w == 0:
        bh, bw = h // out_h, w // out_w
        return x.reshape(c, out_h, bh, out_w, bw).mean(axis=(2, 4))
    out = np.empty((c, out_h, out_w))
    for i in range(out_h):
        r0, r1 = (i * h) // out_h, -((-(i + 1) * h) // out_h)
        for j in range(out_w):
            c0, c1 = (j * w) // out_w, -((-(j + 1) * w) // out_w)
            out[:, i, j] = x[:, r0:r1, c0:c1].mean(axis=(1, 2))
    return out


def aap(x: np.ndarray, grid=None) -> np.ndarray:
    """Global-prior pooling: global_mean * local_pool + global_mean.

    Both pooling sizes are OUTPUT sizes; ``grid`` defaults to
    (H//16, W//16) clamped to at least 1x1. Channels are preserved and the
    global term broadcasts over the grid.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] < 1:
        raise EmptyInputError(f"expected non-empty (C, H, W), got shape {x.shape}")
    h, w = x.shape[1], x.shape[2]
    if grid is None:
        grid = (max(1, h // 16), max(1, w // 16))
    out_h, out_w = grid
    if out_h < 1 or out_w < 1 or out_h > h or out_w > w:
        raise EmptyInputError(f"grid {grid} invalid for {h}x{w} input")
    glob = x.mean(axis=(1, 2))[:, None, None]
    local = _adaptive_avg_pool(x, out_h, out_w)
    return glob * local + glob


# ---------------------------------------------------------------------------
# Channel-split gate
# ---------------------------------------------------------------------------

def simple_gate(x: np.ndarray) -> np.ndarray:
    """Split channels in half and return gelu(first) * second."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] % 2:
        raise ChannelCountError(f"channel count {x.shape[0]} must be even")
    half = x.shape[0] // 2
    return gelu(x[:half]) * x[half:]


# ---------------------------------------------------------------------------
# Bi-branch gated modulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PixelLinear:
    """Per-pixel (1x1) linear map over channels: y = W x + b."""

    weight: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        if w.ndim != 2:
            raise WeightShapeError(f"weight must be 2-D, got shape {w.shape}")
        b = self.bias
        if b is not None:
            b = np.asarray(b, dtype=np.float64)
            if b.shape != (w.shape[0],):
                raise WeightShapeError(
                    f"bias shape {b.shape} does not match {w.shape[0]} outputs")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def identity(cls, channels: int) -> "PixelLinear":
        return cls(np.eye(channels))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.in_channels:
            raise WeightShapeError(
                f"map expects {self.in_channels} channels, got {x.shape[0]}")
        out = np.einsum("oc,chw->ohw", self.weight, x)
        if self.bias is not None:
            out = out + self.bias[:, None, None]
        return out


def pair_average_reduce(channels: int) -> PixelLinear:
    """Default 2C -> C reduction: average channel c with channel c + C."""
    w = np.zeros((channels, 2 * channels))
    idx = np.arange(channels)
    w[idx, idx] = 0.5
    w[idx, idx + channels] = 0.5
    return PixelLinear(w)


@dataclass(frozen=True)
class BbgmWeights:
    """The three 1x1 maps of the gate path plus the concat reduction."""

    f_proj: PixelLinear
    g_proj: PixelLinear
    gate_proj: PixelLinear
    reduce: PixelLinear

    @classmethod
    def identity(cls, channels: int) -> "BbgmWeights":
        gate = np.vstack([np.eye(channels), np.eye(channels)])
        return cls(PixelLinear.identity(channels), PixelLinear.identity(channels),
                   PixelLinear(gate), pair_average_reduce(channels))


def bbgm(f: np.ndarray, g: np.ndarray, weights: BbgmWeights,
         use_wb: bool = False) -> np.ndarray:
    """Fuse a feature map with a global prior by fusion, gating, and
    interaction.

    The gate pair comes from splitting gelu(gate_proj(g_proj(g) * f_proj(f)));
    the first gate modulates both interaction branches as written, unless
    ``use_wb`` swaps the second gate into the second branch. The two
    branches are concatenated and reduced back to C channels.
    """
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise DimensionMismatchError(f"feature/prior shapes differ: {f.shape} vs {g.shape}")
    c = f.shape[0]
    if weights.f_proj.in_channels != c or weights.g_proj.in_channels != c:
        raise WeightShapeError("projection maps do not match the channel count")
    if weights.gate_proj.out_channels != 2 * c:
        raise WeightShapeError("gate map must produce 2C channels for the split")
    if weights.reduce.in_channels != 2 * c or weights.reduce.out_channels != c:
        raise WeightShapeError("reduction map must map 2C channels to C")
    gates = gelu(weights.gate_proj(weights.g_proj(g) * weights.f_proj(f)))
    w_a, w_b = gates[:c], gates[c:]
    second = w_b if use_wb else w_a
    fused = np.concatenate([f + w_a * g, g + second * f], axis=0)
    return weights.reduce(fused)


# ---------------------------------------------------------------------------
# Group-rational activation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RationalActivation:
    """Safe rational function y = P(x) / (1 + |S(x)|) applied group-wise.

    ``numer`` is (groups, m+1) holding a_0..a_m; ``denom`` is (groups, n)
    holding b_1..b_n of S(x) = sum b_j x^j. The denominator form keeps
    Q >= 1, so the function is pole-free for all real x.
    """

    numer: np.ndarray
    denom: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.numer, dtype=np.float64))
        b = np.atleast_2d(np.asarray(self.denom, dtype=np.float64))
        if a.shape[0] != b.shape[0]:
            raise WeightShapeError("numerator and denominator group counts differ")
        object.__setattr__(self, "numer", a)
        object.__setattr__(self, "denom", b)

    @property
    def groups(self) -> int:
        return self.numer.shape[0]

    @classmethod
    def identity(cls, groups: int = 1, m: int = 5, n: int = 4) -> "RationalActivation":
        a = np.zeros((groups, m + 1))
        a[:, 1] = 1.0
        return cls(a, np.zeros((groups, n)))


def _group_index(length: int, groups: int) -> np.ndarray:
    """Contiguous-block group assignment of ``length`` positions."""
    return (np.arange(length) * groups) // length


def _poly_eval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Horner evaluation; coeffs has a trailing degree axis broadcasting
    against x."""
    acc = np.zeros_like(x)
    for i in range(coeffs.shape[-1] - 1, -1, -1):
        acc = acc * x + coeffs[..., i]
    return acc


def _select_coeffs(act: RationalActivation, x: np.ndarray):
    """Per-position coefficient rows for the last axis of x."""
    if act.groups == 1 or x.ndim == 0:
        return act.numer[0], act.denom[0]
    idx = _group_index(x.shape[-1], act.groups)
    return act.numer[idx], act.denom[idx]


def rational_forward(x, act: RationalActivation) -> np.ndarray:
    """Evaluate the rational activation; groups partition the last axis
    into contiguous blocks."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("rational activation requires finite inputs")
    a, b = _select_coeffs(act, x)
    p = _poly_eval(a, x)
    s = _poly_eval(np.concatenate([np.zeros_like(b[..., :1]), b], axis=-1), x)
    return p / (1.0 + np.abs(s))


def rational_backward(x, act: RationalActivation):
    """Analytic derivatives of :func:`rational_forward`.

    Returns (dy/dx, dy/da, dy/db) where the coefficient gradients carry a
    trailing degree axis. The |S| kink uses subgradient zero.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("rational activation requires finite inputs")
    a, b = _select_coeffs(act, x)
    m1 = a.shape[-1]
    n = b.shape[-1]
    b_full = np.concatenate([np.zeros_like(b[..., :1]), b], axis=-1)
    p = _poly_eval(a, x)
    s = _poly_eval(b_full, x)
    q = 1.0 + np.abs(s)
    sgn = np.sign(s)
    dp = _poly_eval(a[..., 1:] * np.arange(1, m1), x) if m1 > 1 else np.zeros_like(x)
    ds = _poly_eval(b_full[..., 1:] * np.arange(1, n + 1), x) if n > 0 else np.zeros_like(x)
    dq = sgn * ds
    dx = (dp * q - p * dq) / q ** 2
    pow_a = np.power(x[..., None], np.arange(m1))
    da = pow_a / q[..., None]
    pow_b = np.power(x[..., None], np.arange(1, n + 1))
    db = pow_b * (-(p * sgn / q ** 2))[..., None]
    return dx, da, db


# ---------------------------------------------------------------------------
# Windowed rational stack
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KanLayer:
    """One stack layer: a window-local linear map followed by a
    group-rational activation."""

    weight: np.ndarray
    bias: np.ndarray
    activation: RationalActivation

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise WeightShapeError(
                f"layer weight {w.shape} and bias {b.shape} are inconsistent")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class FwKanStack:
    """Stacked window-local layers applied to zigzag window partitions.

    Every linear map acts within a single window, so windows never mix;
    the first input width and the last output width must both equal
    ``window_len`` so the window reverse can restore the sequence.
    """

    layers: tuple
    window_len: int

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise IncompatibleStackError("stack needs at least one layer")
        if layers[0].weight.shape[1] != self.window_len:
            raise IncompatibleStackError(
                f"first layer expects width {layers[0].weight.shape[1]}, "
                f"window_len is {self.window_len}")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise IncompatibleStackError(
                    f"layer widths do not chain: {prev.weight.shape[0]} -> "
                    f"{nxt.weight.shape[1]}")
        if layers[-1].weight.shape[0] != self.window_len:
            raise IncompatibleStackError(
                f"last layer emits width {layers[-1].weight.shape[0]}, "
                f"window_len is {self.window_len}")
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)


def identity_stack(window_len: int, depth: int = 1) -> FwKanStack:
    """Stack of identity maps with identity activations; the whole pipeline
    collapses to the transform round trip."""
    layer = KanLayer(np.eye(window_len), np.zeros(window_len),
                     RationalActivation.identity())
    return FwKanStack(tuple(layer for _ in range(depth)), window_len)


def apply_stack(windows: np.ndarray, stack: FwKanStack) -> np.ndarray:
    """Run the stack over (..., count, window_len) windows independently."""
    out = np.asarray(windows, dtype=np.float64)
    if out.shape[-1] != stack.window_len:
        raise IncompatibleStackError(
            f"windows of width {out.shape[-1]} fed to a window_len "
            f"{stack.window_len} stack")
    for layer in stack.layers:
        out = out @ layer.weight.T + layer.bias
        out = rational_forward(out, layer.activation)
    return out


def fwkan_pipeline(x: np.ndarray, stack: FwKanStack) -> np.ndarray:
    """Transform, reorder, window, refine, and invert: the full spectral
    window pipeline over a (C, H, W) feature map."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionMismatchError(f"expected (C, H, W), got shape {x.shape}")
    c, h, w = x.shape
    order = zigzag_order(h, w)
    seq = dct_planes(x).reshape(c, -1)[:, order.flat]
    windows, part = window_partition(seq, stack.window_len)
    refined = apply_stack(windows, stack)
    seq_out = window_reverse(refined, part)
    spec = invert_zigzag(seq_out, order)
    return idct_planes(spec.coeffs)


# ---------------------------------------------------------------------------
# Variance-preserving initialization
# ---------------------------------------------------------------------------

def activation_second_moment(act: RationalActivation, width: int,
                             rng: np.random.Generator,
                             samples: int = VARIANCE_MC_SAMPLES) -> float:
    """Monte-Carlo E[phi(z)^2] for z ~ N(0,1), pooled over the group
    assignment of ``width`` positions."""
    z = rng.standard_normal(samples)
    idx = _group_index(width, act.groups)
    counts = np.bincount(idx, minlength=act.groups)
    total = 0.0
    for grp in range(act.groups):
        if counts[grp] == 0:
            continue
        sub = RationalActivation(act.numer[grp:grp + 1], act.denom[grp:grp + 1])
        total += counts[grp] * float(np.mean(rational_forward(z, sub) ** 2))
    return total / width


def init_variance_preserving(stack: FwKanStack, seed: int) -> FwKanStack:
    """Redraw every linear map with scale 1/sqrt(fan_in * E[phi^2]), where
    E[phi^2] is the second moment of the activation feeding that layer
    (unity for the first layer). Biases reset to zero; deterministic for a
    fixed seed."""
    rng = np.random.default_rng(seed)
    moment = 1.0
    layers = []
    for layer in stack.layers:
        fan_in = layer.weight.shape[1]
        scale = 1.0 / np.sqrt(fan_in * moment)
        weight = rng.normal(0.0, scale, size=layer.weight.shape)
        layers.append(KanLayer(weight, np.zeros(layer.weight.shape[0]),
                               layer.activation))
        moment = activation_second_moment(layer.activation,
                                          layer.weight.shape[0], rng)
    return FwKanStack(tuple(layers), stack.window_len)


# ---------------------------------------------------------------------------
# Stack serialization (reproducible kan-check runs)
# ---------------------------------------------------------------------------

def stack_to_json(stack: FwKanStack, seed: int | None = None) -> str:
    doc = {
        "version": 1,
        "window_len": stack.window_len,
        "seed": seed,
        "layers": [
            {
                "weight": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
                "activation": {
                    "numerator": layer.activation.numer.tolist(),
                    "denominator": layer.activation.denom.tolist(),
                },
            }
            for layer in stack.layers
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def stack_from_json(text: str) -> FwKanStack:
    doc = json.loads(text)
    layers = tuple(
        KanLayer(
            np.asarray(spec["weight"], dtype=np.float64),
            np.asarray(spec["bias"], dtype=np.float64),
            RationalActivation(
                np.asarray(spec["activation"]["numerator"], dtype=np.float64),
                np.asarray(spec["activation"]["denominator"], dtype=np.float64),
            ),
        )
        for spec in doc["layers"]
    )
    return FwKanStack(layers, int(doc["window_len"]))
