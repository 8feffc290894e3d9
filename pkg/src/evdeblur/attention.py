"""Reference event-image cross-modal channel attention block.

Pipeline for image features ``X`` and event features ``Y`` (both ``(h, w, C)``,
flattened to ``n = h*w`` rows):

1. per-pixel layer normalization of each branch with its own gain and bias
2. ``Q = norm(X) Wq + bq``, ``K = norm(Y) Wk + bk``, ``V = norm(Y) Wv + bv``
3. ``A = softmax(Q^T K / sqrt(d_k))`` normalized down each column, so the map
   is ``c x c`` whatever the spatial size; ``d_k`` defaults to ``n``
4. ``O = V A``
5. ``Z = X + O Wo + bo``
6. ``out = Z + gelu(Z W1 + b1) W2 + b2``

With ``heads > 1`` the ``c`` projected channels are split evenly and each
head gets its own ``c/heads`` square map. Everything runs in float64 numpy;
this is a clarity-first kernel meant to be checked against finite differences.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, fields, replace
from typing import Callable

import numpy as np
from scipy.special import erf

logger = logging.getLogger(__name__)

NORM_EPS = 1e-5
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AttentionParams:
    g_img: np.ndarray
    b_img: np.ndarray
    g_evt: np.ndarray
    b_evt: np.ndarray
    w_q: np.ndarray
    b_q: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray
    w_o: np.ndarray
    b_o: np.ndarray
    w_1: np.ndarray
    b_1: np.ndarray
    w_2: np.ndarray
    b_2: np.ndarray
    heads: int = 1
    d_k: float | None = None

    def __post_init__(self):
        C, c = self.w_q.shape
        hidden = self.w_1.shape[1]
        expected = {
            "g_img": (C,), "b_img": (C,), "g_evt": (C,), "b_evt": (C,),
            "w_q": (C, c), "b_q": (c,), "w_k": (C, c), "b_k": (c,),
            "w_v": (C, c), "b_v": (c,), "w_o": (c, C), "b_o": (C,),
            "w_1": (C, hidden), "b_1": (hidden,), "w_2": (hidden, C), "b_2": (C,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.heads < 1 or c % self.heads:
            raise ValueError(f"{c} projected channels cannot be split into {self.heads} heads")

    @property
    def channels(self) -> int:
        return self.w_q.shape[0]

    @property
    def proj_channels(self) -> int:
        return self.w_q.shape[1]

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name not in ("heads", "d_k")]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.names()}

    def with_arrays(self, **arrays) -> "AttentionParams":
        return replace(self, **arrays)

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], heads: int = 1, d_k: float | None = None):
        return cls(**{k: np.asarray(arrays[k], dtype=np.float64) for k in cls.names()}, heads=heads, d_k=d_k)


def init_params(C: int, c: int, ratio: int = 2, seed: int = 0, heads: int = 1,
                d_k: float | None = None) -> AttentionParams:
    """Random parameters with fan-in scaled weights and non-trivial norm affines."""
    rng = np.random.default_rng(seed)

    def w(fan_in, fan_out):
        return rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out))

    def b(size):
        return rng.normal(0.0, 0.1, size=size)

    return AttentionParams(
        g_img=1.0 + b(C), b_img=b(C), g_evt=1.0 + b(C), b_evt=b(C),
        w_q=w(C, c), b_q=b(c), w_k=w(C, c), b_k=b(c), w_v=w(C, c), b_v=b(c),
        w_o=w(c, C), b_o=b(C), w_1=w(C, ratio * C), b_1=b(ratio * C),
        w_2=w(ratio * C, C), b_2=b(C), heads=heads, d_k=d_k,
    )


def gelu(x):
    """Exact GELU, ``x * Phi(x)``."""
    return x * 0.5 * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def softmax_columns(s: np.ndarray) -> np.ndarray:
    """Softmax down axis -2, i.e. each column of every map sums to one."""
    z = np.exp(s - s.max(axis=-2, keepdims=True))
    return z / z.sum(axis=-2, keepdims=True)


def _layer_norm(x, g, b):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + NORM_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


def _split(m, heads):
    """``(n, c)`` -> ``(heads, n, c/heads)``."""
    n, c = m.shape
    return m.reshape(n, heads, c // heads).transpose(1, 0, 2)


def _merge(m):
    heads, n, ch = m.shape
    return m.transpose(1, 0, 2).reshape(n, heads * ch)


@dataclass
class Forward:
    """Output plus every intermediate the backward pass needs."""

    out: np.ndarray
    attn: np.ndarray | None
    cache: dict


def _check_inputs(img, evt, p: AttentionParams, strict: bool):
    img = np.asarray(img, dtype=np.float64)
    evt = np.asarray(evt, dtype=np.float64)
    if img.ndim != 3 or img.shape != evt.shape:
        raise ValueError(f"image {img.shape} and event {evt.shape} features must share (h, w, C)")
    if img.shape[2] != p.channels:
        raise ValueError(f"features have {img.shape[2]} channels, params expect {p.channels}")
    n = img.shape[0] * img.shape[1]
    if p.proj_channels >= n:
        msg = f"projected channels c={p.proj_channels} not below h*w={n}"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, stacklevel=3)
    return img, evt


def eica_run(img, evt, p: AttentionParams, use_attention: bool = True, strict: bool = False) -> Forward:
    img, evt = _check_inputs(img, evt, p, strict)
    h, w, C = img.shape
    n = h * w
    x = img.reshape(n, C)
    y = evt.reshape(n, C)
    cache = {"shape": img.shape, "x": x}

    if use_attention:
        xn, cache["ln_x"] = _layer_norm(x, p.g_img, p.b_img)
        yn, cache["ln_y"] = _layer_norm(y, p.g_evt, p.b_evt)
        q = xn @ p.w_q + p.b_q
        k = yn @ p.w_k + p.b_k
        v = yn @ p.w_v + p.b_v
        scale = 1.0 / math.sqrt(p.d_k if p.d_k is not None else n)
        qh, kh, vh = _split(q, p.heads), _split(k, p.heads), _split(v, p.heads)
        attn = softmax_columns(qh.transpose(0, 2, 1) @ kh * scale)
        o = _merge(vh @ attn)
        z = x + o @ p.w_o + p.b_o
        cache.update(xn=xn, yn=yn, qh=qh, kh=kh, vh=vh, attn=attn, o=o, scale=scale)
    else:
        attn = None
        z = x

    h1 = z @ p.w_1 + p.b_1
    g1 = gelu(h1)
    out = z + g1 @ p.w_2 + p.b_2
    cache.update(z=z, h1=h1, g1=g1)
    return Forward(out.reshape(h, w, C), attn, cache)


def eica_forward(img, evt, p: AttentionParams, use_attention: bool = True, strict: bool = False) -> np.ndarray:
    return eica_run(img, evt, p, use_attention, strict).out


def attention_map(img, evt, p: AttentionParams) -> np.ndarray:
    """The soft attention map; ``(c, c)`` for one head, else ``(heads, c/heads, c/heads)``."""
    attn = eica_run(img, evt, p).attn
    return attn[0] if p.heads == 1 else attn


def eica_backward(img, evt, p: AttentionParams, upstream, use_attention: bool = True,
                  fwd: Forward | None = None) -> dict[str, np.ndarray]:
    """Gradients of ``sum(upstream * out)`` w.r.t. both inputs and every parameter.

    Keys are ``"img"``, ``"evt"`` and the parameter names.
    """
    if fwd is None:
        fwd = eica_run(img, evt, p, use_attention)
    cache = fwd.cache
    h, w, C = cache["shape"]
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (h, w, C):
        raise ValueError(f"upstream gradient {upstream.shape} does not match output {(h, w, C)}")
    d_out = upstream.reshape(h * w, C)
    grads = {name: np.zeros_like(a) for name, a in p.arrays().items()}

    # MLP with residual
    grads["w_2"] = cache["g1"].T @ d_out
    grads["b_2"] = d_out.sum(axis=0)
    d_h1 = (d_out @ p.w_2.T) * gelu_grad(cache["h1"])
    grads["w_1"] = cache["z"].T @ d_h1
    grads["b_1"] = d_h1.sum(axis=0)
    d_z = d_out + d_h1 @ p.w_1.T

    d_x = d_z.copy()
    d_y = np.zeros_like(d_x)
    if use_attention:
        grads["w_o"] = cache["o"].T @ d_z
        grads["b_o"] = d_z.sum(axis=0)
        d_oh = _split(d_z @ p.w_o.T, p.heads)
        attn, vh, qh, kh, scale = cache["attn"], cache["vh"], cache["qh"], cache["kh"], cache["scale"]
        d_vh = d_oh @ attn.transpose(0, 2, 1)
        d_attn = vh.transpose(0, 2, 1) @ d_oh
        d_s = attn * (d_attn - (attn * d_attn).sum(axis=-2, keepdims=True))
        d_qh = kh @ d_s.transpose(0, 2, 1) * scale
        d_kh = qh @ d_s * scale
        d_q, d_k, d_v = _merge(d_qh), _merge(d_kh), _merge(d_vh)

        xn, yn = cache["xn"], cache["yn"]
        grads["w_q"], grads["b_q"] = xn.T @ d_q, d_q.sum(axis=0)
        grads["w_k"], grads["b_k"] = yn.T @ d_k, d_k.sum(axis=0)
        grads["w_v"], grads["b_v"] = yn.T @ d_v, d_v.sum(axis=0)
        d_xn = d_q @ p.w_q.T
        d_yn = d_k @ p.w_k.T + d_v @ p.w_v.T
        dx_ln, grads["g_img"], grads["b_img"] = _layer_norm_backward(d_xn, p.g_img, cache["ln_x"])
        dy_ln, grads["g_evt"], grads["b_evt"] = _layer_norm_backward(d_yn, p.g_evt, cache["ln_y"])
        d_x += dx_ln
        d_y = dy_ln

    grads["img"] = d_x.reshape(h, w, C)
    grads["evt"] = d_y.reshape(h, w, C)
    return grads


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    tol: float
    per_group: dict[str, float]

    def to_dict(self) -> dict:
        return {"max_rel_err": self.max_rel_err, "pass": self.passed, "tol": self.tol,
                "per_group": self.per_group}


def numerical_gradient(f: Callable[[], float], a: np.ndarray, step: float) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``a`` (perturbed in place)."""
    grad = np.zeros_like(a)
    flat, gflat = a.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest entry-wise difference, relative to the group's largest gradient entry."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def grad_check(params: AttentionParams | None = None, shape=(4, 4, 8, 4), tol: float = 1e-5,
               seed: int = 7, ratio: int = 2, step: float = 1e-5, use_attention: bool = True,
               backward=eica_backward) -> GradCheckReport:
    """Compare analytic gradients with central differences for every group.

    ``shape`` is ``(h, w, C, c)``. The scalar checked is ``sum(G * out)`` for a
    fixed random ``G``, which exercises every output entry with distinct weights.
    ``backward`` can be swapped out to test the checker itself.
    """
    h, w, C, c = shape
    if params is None:
        params = init_params(C, c, ratio, seed=seed)
    rng = np.random.default_rng(seed + 1)
    img = rng.normal(size=(h, w, C))
    evt = rng.normal(size=(h, w, C))
    weight = rng.normal(size=(h, w, C))

    analytic = backward(img, evt, params, weight, use_attention=use_attention)
    arrays = {k: np.array(v) for k, v in params.arrays().items()}
    inputs = {"img": img, "evt": evt}

    def loss() -> float:
        p = params.with_arrays(**arrays)
        return float((eica_forward(inputs["img"], inputs["evt"], p, use_attention) * weight).sum())

    per_group = {}
    for name, a in list(inputs.items()) + list(arrays.items()):
        numeric = numerical_gradient(loss, a, step)
        per_group[name] = relative_error(analytic[name], numeric)
    worst = max(per_group.values())
    passed = bool(worst <= tol)
    logger.info("grad check max relative error %.3e (tol %.1e)", worst, tol)
    return GradCheckReport(worst, passed, tol, per_group)
