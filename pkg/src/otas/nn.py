"""Differentiable layers: linear, 1-D convolution, GRU, attention, normalization.

Layers hold their weights as `Parameter` tensors and are composed into models
via `Module`. Weight matrices are initialized uniform in +/- 1/sqrt(fan_in);
biases start at zero.
"""

from __future__ import annotations

import math
from typing import Iterable, Iterator

import numpy as np

from .tensor import (Tensor, as_tensor, assert_finite, concat, gather,
                     index_rows, node)

NEG_INF = -1e9


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(data, requires_grad=True)


class Module:
    """Minimal parameter/submodule registry with state-dict support."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_mods", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._mods[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for n, p in self._params.items():
            yield prefix + n, p
        for n, m in self._mods.items():
            yield from m.named_parameters(prefix + n + ".")

    def parameters(self) -> Iterator[Parameter]:
        for _, p in self.named_parameters():
            yield p

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state dict mismatch: missing={missing} unexpected={extra}")
        for n, p in own.items():
            arr = np.asarray(state[n], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {n}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules: Iterable[Module] = ()):
        super().__init__()
        self._order: list[str] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        name = str(len(self._order))
        self._mods[name] = module
        object.__setattr__(self, name, module)
        self._order.append(name)

    def __iter__(self):
        return (self._mods[n] for n in self._order)

    def __len__(self):
        return len(self._order)

    def __getitem__(self, i):
        return self._mods[self._order[i]]


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        self.weight = Parameter(_uniform(rng, (in_dim, out_dim), in_dim))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


class FeedForward(Module):
    """Two-layer fully connected block with a ReLU in between."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.lin1 = Linear(dim, hidden, rng)
        self.lin2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.lin2(self.lin1(x).relu())


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    X = x.data
    mu = X.mean(-1, keepdims=True)
    xc = X - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = X.shape[-1]

    def vjp(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(-1, keepdims=True))
        dgain = (g * xhat).reshape(-1, n).sum(0)
        dbias = g.reshape(-1, n).sum(0)
        return (dx, dgain, dbias)

    return node(xhat * gain.data + bias.data, (x, gain, bias), vjp)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


def conv1d_time(x: Tensor, weight: Tensor, bias: Tensor | None,
                dilation: int = 1, causal: bool = True) -> Tensor:
    """Temporal convolution on [T x Cin] -> [T x Cout], length-preserving.

    Causal mode pads with zeros on the left only, so output t is a function
    of inputs at indices <= t; the last kernel tap multiplies the present
    frame. Standard mode pads symmetrically and requires an odd kernel.
    """
    X, W = x.data, weight.data
    T, cin = X.shape
    cout, cin_w, K = W.shape
    if cin_w != cin:
        raise ValueError(f"channel mismatch: input {cin}, weight {cin_w}")
    span = (K - 1) * dilation
    if causal:
        pl, pr = span, 0
    else:
        if K % 2 == 0:
            raise ValueError("standard convolution requires an odd kernel size")
        pl = pr = span // 2
    Xp = np.pad(X, ((pl, pr), (0, 0)))
    idx = np.arange(T)[:, None] + dilation * np.arange(K)[None, :]
    cols = Xp[idx].reshape(T, K * cin)
    Wm = W.transpose(2, 1, 0).reshape(K * cin, cout)
    out = cols @ Wm
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) + (() if bias is None else (bias,))

    def vjp(g):
        dW = (cols.T @ g).reshape(K, cin, cout).transpose(2, 1, 0)
        dcols = (g @ Wm.T).reshape(T, K, cin)
        dXp = np.zeros_like(Xp)
        np.add.at(dXp, idx, dcols)
        dx = dXp[pl:pl + T]
        return (dx, dW) if bias is None else (dx, dW, g.sum(0))

    return node(out, parents, vjp)


class Conv1dTime(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, dilation: int = 1,
                 causal: bool = True, bias: bool = True):
        super().__init__()
        self.weight = Parameter(_uniform(rng, (out_channels, in_channels, kernel_size),
                                         in_channels * kernel_size))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.dilation = dilation
        self.causal = causal

    def forward(self, x: Tensor) -> Tensor:
        out = conv1d_time(x, self.weight, self.bias, self.dilation, self.causal)
        assert_finite(out, "convolution output")
        return out


def gru_sequence(x: Tensor, h0: Tensor,
                 wz: Tensor, uz: Tensor, bz: Tensor,
                 wr: Tensor, ur: Tensor, br: Tensor,
                 wc: Tensor, uc: Tensor, bc: Tensor) -> Tensor:
    """Run a GRU over [T x D] from initial hidden [H]; returns all hiddens [T x H].

    Gating: z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    c = tanh(x Wc + (r*h) Uc + bc), h' = z*h + (1-z)*c. An update gate of one
    leaves the hidden state unchanged. The final hidden is the last row.
    """
    X, H0 = x.data, h0.data
    T = X.shape[0]
    Hd = H0.shape[0]
    az_x = X @ wz.data + bz.data
    ar_x = X @ wr.data + br.data
    ac_x = X @ wc.data + bc.data
    hs = np.empty((T, Hd), dtype=X.dtype)
    zs = np.empty_like(hs)
    rs = np.empty_like(hs)
    cs = np.empty_like(hs)
    hp = np.empty_like(hs)
    h = H0
    Uz, Ur, Uc = uz.data, ur.data, uc.data
    for t in range(T):
        hp[t] = h
        z = 1.0 / (1.0 + np.exp(-(az_x[t] + h @ Uz)))
        r = 1.0 / (1.0 + np.exp(-(ar_x[t] + h @ Ur)))
        c = np.tanh(ac_x[t] + (r * h) @ Uc)
        h = z * h + (1.0 - z) * c
        zs[t], rs[t], cs[t], hs[t] = z, r, c, h

    parents = (x, h0, wz, uz, bz, wr, ur, br, wc, uc, bc)

    def vjp(g):
        dh = np.zeros(Hd, dtype=X.dtype)
        dAz = np.empty_like(hs)
        dAr = np.empty_like(hs)
        dAc = np.empty_like(hs)
        UzT, UrT, UcT = Uz.T, Ur.T, Uc.T
        for t in range(T - 1, -1, -1):
            gt = g[t] + dh
            z, r, c, h_prev = zs[t], rs[t], cs[t], hp[t]
            dhp = gt * z
            da_c = gt * (1.0 - z) * (1.0 - c * c)
            dAc[t] = da_c
            drh = da_c @ UcT
            dhp = dhp + drh * r
            da_r = (drh * h_prev) * r * (1.0 - r)
            dAr[t] = da_r
            dhp = dhp + da_r @ UrT
            da_z = gt * (h_prev - c) * z * (1.0 - z)
            dAz[t] = da_z
            dhp = dhp + da_z @ UzT
            dh = dhp
        rh = rs * hp
        dx = dAz @ wz.data.T + dAr @ wr.data.T + dAc @ wc.data.T
        return (dx, dh,
                X.T @ dAz, hp.T @ dAz, dAz.sum(0),
                X.T @ dAr, hp.T @ dAr, dAr.sum(0),
                X.T @ dAc, rh.T @ dAc, dAc.sum(0))

    return node(hs, parents, vjp)


class GRU(Module):
    """Single-layer GRU mapping [T x D] feature sequences to [T x H]."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.wz = Parameter(_uniform(rng, (input_dim, hidden_dim), input_dim))
        self.uz = Parameter(_uniform(rng, (hidden_dim, hidden_dim), hidden_dim))
        self.bz = Parameter(np.zeros(hidden_dim))
        self.wr = Parameter(_uniform(rng, (input_dim, hidden_dim), input_dim))
        self.ur = Parameter(_uniform(rng, (hidden_dim, hidden_dim), hidden_dim))
        self.br = Parameter(np.zeros(hidden_dim))
        self.wc = Parameter(_uniform(rng, (input_dim, hidden_dim), input_dim))
        self.uc = Parameter(_uniform(rng, (hidden_dim, hidden_dim), hidden_dim))
        self.bc = Parameter(np.zeros(hidden_dim))

    def forward(self, x: Tensor, h0: Tensor) -> Tensor:
        out = gru_sequence(x, h0, self.wz, self.uz, self.bz,
                           self.wr, self.ur, self.br,
                           self.wc, self.uc, self.bc)
        assert_finite(out, "GRU output")
        return out

    def initial_hidden(self) -> Tensor:
        return Tensor(np.zeros(self.hidden_dim))


def attention(q: Tensor, k: Tensor, v: Tensor, bias: Tensor | None = None) -> Tensor:
    """Scaled dot-product attention softmax(q k^T / sqrt(d) + bias) v.

    Single-head, no projections; rows of the softmax are convex weights
    over the rows of v.
    """
    d = k.shape[-1]
    scores = (q @ k.T) * (1.0 / math.sqrt(d))
    if bias is not None:
        scores = scores + bias
    return scores.softmax(-1) @ v


class RelativeBias(Module):
    """Learned additive score bias indexed by temporal offset, shared by heads.

    The table covers offsets in [-(span-1), span-1].
    """

    def __init__(self, span: int):
        super().__init__()
        self.table = Parameter(np.zeros(2 * span - 1))
        self.span = span

    def matrix(self, tq: int, tk: int) -> Tensor:
        if tq > self.span or tk > self.span:
            raise ValueError(f"offset out of table range: ({tq},{tk}) vs span {self.span}")
        idx = np.arange(tq)[:, None] - np.arange(tk)[None, :] + self.span - 1
        return gather(self.table, idx)


class MultiHeadAttention(Module):
    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"heads {num_heads} must divide dim {dim}")
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)

    def _split(self, x: Tensor, t: int) -> Tensor:
        return x.reshape(t, self.num_heads, self.head_dim).transpose(1, 0, 2)

    def forward(self, query: Tensor, key: Tensor, value: Tensor,
                attn_bias: Tensor | None = None,
                key_valid: int | None = None) -> Tensor:
        tq, tk = query.shape[0], key.shape[0]
        q = self._split(self.wq(query), tq)
        k = self._split(self.wk(key), tk)
        v = self._split(self.wv(value), tk)
        scores = (q * self.scale) @ k.transpose(0, 2, 1)
        if attn_bias is not None:
            scores = scores + attn_bias
        if key_valid is not None and key_valid < tk:
            m = np.zeros(tk)
            m[key_valid:] = NEG_INF
            scores = scores + Tensor(m)
        p = scores.softmax(-1)
        out = (p @ v).transpose(1, 0, 2).reshape(tq, self.dim)
        out = self.wo(out)
        assert_finite(out, "attention output")
        return out


class WindowedSelfAttention(Module):
    """Self-attention restricted to local windows (default two per clip).

    Tokens attend only within their own window; a ragged tail is padded by
    repeating the last token, with the padded keys masked out of the softmax
    and the padded queries dropped from the output.
    """

    def __init__(self, dim: int, num_heads: int, window_len: int,
                 rng: np.random.Generator, window_count: int = 2):
        super().__init__()
        self.attn = MultiHeadAttention(dim, num_heads, rng)
        self.bias = RelativeBias(window_len)
        self.window_len = window_len
        self.window_count = window_count

    def forward(self, x: Tensor) -> Tensor:
        t = x.shape[0]
        wc = self.window_count
        if t < wc:
            raise ValueError(f"sequence of {t} tokens cannot form {wc} windows")
        wl = -(-t // wc)
        if wl > self.window_len:
            raise ValueError(f"window of {wl} exceeds bias span {self.window_len}")
        pad = wl * wc - t
        xp = index_rows(x, np.concatenate([np.arange(t), np.full(pad, t - 1)])) if pad else x
        bias = self.bias.matrix(wl, wl)
        outs = []
        for wi in range(wc):
            seg = xp[wi * wl:(wi + 1) * wl]
            nvalid = wl - pad if wi == wc - 1 else wl
            outs.append(self.attn(seg, seg, seg, attn_bias=bias, key_valid=nvalid))
        out = concat(outs, 0)
        return out[:t] if pad else out


class TransformerDecoderLayer(Module):
    """Self-attention over the query, cross-attention into the context, FFN.

    Residual connections wrap each stage; pre-normalization is applied to the
    query side when enabled. An empty query passes straight through.
    """

    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator,
                 ffn_mult: int = 4, pre_norm: bool = True):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, num_heads, rng)
        self.cross_attn = MultiHeadAttention(dim, num_heads, rng)
        self.ffn = FeedForward(dim, dim * ffn_mult, rng)
        self.pre_norm = pre_norm
        if pre_norm:
            self.ln1 = LayerNorm(dim)
            self.ln2 = LayerNorm(dim)
            self.ln3 = LayerNorm(dim)

    def forward(self, query: Tensor, context: Tensor) -> Tensor:
        if query.shape[0] == 0:
            return query
        x = query
        h = self.ln1(x) if self.pre_norm else x
        x = x + self.self_attn(h, h, h)
        h = self.ln2(x) if self.pre_norm else x
        x = x + self.cross_attn(h, context, context)
        h = self.ln3(x) if self.pre_norm else x
        x = x + self.ffn(h)
        return x
