"""Unsupervised training of the beamforming network.

The loss is the negative mean weighted sum rate over a batch of channel
draws, so minimizing it maximizes the rate objective directly; no labels
are involved.  Gradients are computed by a hand-rolled batched reverse
pass through the whole pipeline: feature embedding, the dense stack, the
neighbor max aggregation (gradient routed to the argmax element per
feature, ties to the lowest node index), the exact power normalization
(quotient rule, zero-power guard treated as constant), and the rate
expression differentiated through its real/imaginary parts.

By default one parameter set is shared by all satellites; every
satellite's backward pass accumulates into the same gradient buffers.
Setting tied=False trains one parameter set per satellite instead.

Channels can be fed to the network in rescaled units: SystemParams carries
an input_scale s, the network consumes h/s while rates are evaluated with
noise sigma2/s^2, which leaves every SINR and rate identical to the
physical system.  This keeps hidden activations near unity even though
physical channel gains are of order 1e-7.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import struct
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import channel
from .beamform import BeamformerSet
from .gnn import (FcLayer, GnnParams, ZERO_POWER, init_params, layer_plan,
                  read_params, scaled_dims, write_params)

logger = logging.getLogger(__name__)

_CKPT_MAGIC = b"LEOCKPT1"


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the last good parameters."""

    def __init__(self, message, params=None, step: int = 0):
        super().__init__(message)
        self.params = params
        self.step = step


@dataclass(frozen=True)
class SystemParams:
    """Static system description shared by loss, gradients and inference."""

    k_sats: int
    m_users: int
    n_antennas: int
    power: float = 1.0
    sigma2: float = 1e-12
    bandwidth: float = 50e6
    weights: tuple | None = None
    input_scale: float = 1.0

    def __post_init__(self):
        if min(self.k_sats, self.m_users, self.n_antennas) < 1:
            raise ValueError("k_sats, m_users, n_antennas must be >= 1")
        if self.power <= 0 or self.sigma2 <= 0 or self.bandwidth <= 0:
            raise ValueError("power, sigma2, bandwidth must be positive")
        if self.input_scale <= 0:
            raise ValueError("input_scale must be positive")
        if self.weights is not None:
            if len(self.weights) != self.m_users:
                raise ValueError("weights length must equal m_users")
            if any(w < 0 for w in self.weights):
                raise ValueError("weights must be nonnegative")

    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.m_users)
        return np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class TrainConfig:
    system: SystemParams
    chan: channel.ChannelParams
    scale_factor: int = 8
    epochs: int = 200
    batch_size: int = 200
    samples_per_epoch: int = 10000
    test_size: int = 2000
    lr0: float = 1e-3
    lr_decay: float = 0.995
    lr_decay_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    early_stop: bool = True
    patience: int = 10
    min_rel_improve: float = 1e-3
    tied: bool = True
    use_float32: bool = False
    auto_scale: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_epoch % self.batch_size != 0:
            raise ValueError("batch_size must divide samples_per_epoch")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.epochs < 1 or self.test_size < 1:
            raise ValueError("epochs and test_size must be >= 1")


def suggested_input_scale(chan: channel.ChannelParams, m_users: int) -> float:
    """Mean deterministic channel amplitude, the natural feature scale."""
    amps = channel.deterministic_amplitudes(chan, m_users)
    s = float(np.mean(amps))
    return s if s > 0 else 1.0


def lr_at(step: int, lr0: float = 1e-3, decay: float = 0.995,
          every: int = 100) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    return lr0 * decay ** (step // every)


# --- batched forward/backward engine ------------------------------------------
#
# Activations carry shape (batch, nodes, features); dense layers flatten the
# leading two axes into rows so every product is a single large matmul.

class _FcCache(NamedTuple):
    x: np.ndarray
    post: np.ndarray
    relu: bool


def _fc_forward(x, layer, relu: bool):
    b, m, fin = x.shape
    y = x.reshape(b * m, fin) @ layer.w + layer.b
    y = y.reshape(b, m, -1)
    if relu:
        y = np.maximum(y, 0.0)
    return _FcCache(x, y, relu), y


def _fc_backward(cache: _FcCache, layer, gy):
    if cache.relu:
        gy = gy * (cache.post > 0)
    b, m, fout = gy.shape
    g2 = gy.reshape(b * m, fout)
    x2 = cache.x.reshape(b * m, -1)
    dw = x2.T @ g2
    db = g2.sum(axis=0)
    gx = (g2 @ layer.w.T).reshape(cache.x.shape)
    return gx, dw, db


def _neighbor_max(hidden):
    """Per-node elementwise max over the other nodes.

    Returns the aggregate and, per node, the source-node index of each
    winning feature (first maximum, i.e. lowest node index on ties).
    A single node aggregates to zeros with no sources.
    """
    b, m, f = hidden.shape
    if m == 1:
        return np.zeros_like(hidden), None
    agg = np.empty_like(hidden)
    src = np.empty((m, b, f), dtype=np.intp)
    for i in range(m):
        js = np.array([j for j in range(m) if j != i])
        neigh = hidden[:, js, :]
        pick = neigh.argmax(axis=1)
        agg[:, i, :] = np.take_along_axis(neigh, pick[:, None, :], axis=1)[:, 0, :]
        src[i] = js[pick]
    return agg, src


def _neighbor_max_backward(g_agg, src, m_nodes: int):
    b, _, f = g_agg.shape
    gh = np.zeros((b, m_nodes, f), dtype=g_agg.dtype)
    if src is None:
        return gh
    node_ids = np.arange(m_nodes)[None, :, None]
    for i in range(m_nodes):
        gh += (src[i][:, None, :] == node_ids) * g_agg[:, i:i + 1, :]
    return gh


class _ConvCache(NamedTuple):
    x: np.ndarray
    mlp1: tuple
    src: np.ndarray | None
    mlp2: tuple


def _conv_forward(conv, x):
    c1, h1 = _fc_forward(x, conv.mlp1[0], True)
    c2, h2 = _fc_forward(h1, conv.mlp1[1], True)
    agg, src = _neighbor_max(h2)
    comb = np.concatenate([x, agg], axis=-1)
    c3, g1 = _fc_forward(comb, conv.mlp2[0], True)
    c4, out = _fc_forward(g1, conv.mlp2[1], True)
    return _ConvCache(x, (c1, c2), src, (c3, c4)), out


def _conv_backward(cache: _ConvCache, conv, gout):
    g_g1, dw4, db4 = _fc_backward(cache.mlp2[1], conv.mlp2[1], gout)
    g_comb, dw3, db3 = _fc_backward(cache.mlp2[0], conv.mlp2[0], g_g1)
    width_in = cache.x.shape[-1]
    g_skip = g_comb[..., :width_in]
    g_agg = g_comb[..., width_in:]
    g_h2 = _neighbor_max_backward(g_agg, cache.src, cache.x.shape[1])
    g_h1, dw2, db2 = _fc_backward(cache.mlp1[1], conv.mlp1[1], g_h2)
    g_x, dw1, db1 = _fc_backward(cache.mlp1[0], conv.mlp1[0], g_h1)
    gx = g_skip + g_x
    return gx, [(dw1, db1), (dw2, db2), (dw3, db3), (dw4, db4)]


class _SatCache(NamedTuple):
    fc_in: tuple
    convs: tuple
    out_fc: _FcCache
    y: np.ndarray
    praw: np.ndarray
    alpha: np.ndarray


def _forward_satellite_batch(params: GnnParams, feats, power: float):
    c1, a1 = _fc_forward(feats, params.layers[0], True)
    c2, a2 = _fc_forward(a1, params.layers[1], True)
    cc1, z1 = _conv_forward(params.conv(1), a2)
    cc2, z2 = _conv_forward(params.conv(2), z1)
    co, out = _fc_forward(z2, params.layers[10], False)
    n = params.dims.n_antennas
    y = out[..., :n] + 1j * out[..., n:2 * n]
    praw = np.sum(y.real ** 2 + y.imag ** 2, axis=(1, 2))
    safe = np.maximum(praw, ZERO_POWER)
    alpha = np.where(praw < ZERO_POWER, 0.0, np.sqrt(power / safe))
    w = y * alpha[:, None, None]
    return _SatCache((c1, c2), (cc1, cc2), co, y, praw, alpha), w


def _powernorm_backward(cache: _SatCache, gw):
    # w = alpha(y) * y with alpha = sqrt(P / sum |y|^2); quotient rule gives
    # gy = alpha*g - (alpha/p) * Re(sum conj(g) y) * y, zero rows stay zero
    y, praw, alpha = cache.y, cache.praw, cache.alpha
    s = np.sum(gw.real * y.real + gw.imag * y.imag, axis=(1, 2))
    coef = np.where(praw < ZERO_POWER, 0.0,
                    alpha / np.maximum(praw, ZERO_POWER))
    return alpha[:, None, None] * gw - (coef * s)[:, None, None] * y


def _backward_satellite_batch(params: GnnParams, cache: _SatCache, gw):
    gy = _powernorm_backward(cache, gw)
    n = params.dims.n_antennas
    b, m, _ = gy.shape
    gout = np.zeros((b, m, params.dims.out_width), dtype=gy.real.dtype)
    gout[..., :n] = gy.real
    gout[..., n:2 * n] = gy.imag
    gz2, dwo, dbo = _fc_backward(cache.out_fc, params.layers[10], gout)
    gz1, gconv2 = _conv_backward(cache.convs[1], params.conv(2), gz2)
    ga2, gconv1 = _conv_backward(cache.convs[0], params.conv(1), gz1)
    ga1, dw2, db2 = _fc_backward(cache.fc_in[1], params.layers[1], ga2)
    _, dw1, db1 = _fc_backward(cache.fc_in[0], params.layers[0], ga1)
    return [(dw1, db1), (dw2, db2)] + gconv1 + gconv2 + [(dwo, dbo)]


def _wsr_batch(h, w, sigma2: float, bandwidth: float, weights):
    c = np.einsum("bkmn,bkin->bmi", h.conj(), w)
    p = c.real ** 2 + c.imag ** 2
    sig = np.einsum("bmm->bm", p)
    intf = p.sum(axis=2) - sig + sigma2
    sinr = sig / intf
    rates = bandwidth * np.log2(1.0 + sinr)
    wsr = rates @ weights
    return c, sinr, intf, wsr


def _wsr_backward(h, c, sinr, intf, weights, bandwidth: float, batch: int):
    m = sinr.shape[1]
    # gs = d loss / d sinr for loss = -(1/batch) sum_b sum_m w_m R_m
    gs = -(weights[None, :] / batch) * bandwidth / (np.log(2.0) * (1.0 + sinr))
    q = np.repeat((-gs * sinr / intf)[:, :, None], m, axis=2)
    idx = np.arange(m)
    q[:, idx, idx] = gs / intf
    gc = 2.0 * q * c
    return np.einsum("bmi,bkmn->bkin", gc, h)


# --- public loss / gradient API ------------------------------------------------

@dataclass
class GradientSet:
    """Per-layer (d weight, d bias) pairs in layer_plan order."""

    layers: list


def _zero_grads(params: GnnParams) -> GradientSet:
    return GradientSet([(np.zeros_like(l.w), np.zeros_like(l.b))
                        for l in params.layers])


def _accumulate(gs: GradientSet, parts) -> None:
    for (dw, db), (pw, pb) in zip(gs.layers, parts):
        dw += pw
        db += pb


def _as_batch(batch) -> np.ndarray:
    """Accepts an ndarray (B,K,M,N), a ChannelRealization, or a list."""
    if isinstance(batch, np.ndarray):
        if batch.ndim == 3:
            return batch[None]
        if batch.ndim != 4:
            raise ValueError("channel batch must have shape (B, K, M, N)")
        return batch
    if isinstance(batch, channel.ChannelRealization):
        return batch.h[None]
    arrs = [b.h if isinstance(b, channel.ChannelRealization) else np.asarray(b)
            for b in batch]
    if not arrs:
        raise ValueError("empty channel batch")
    return np.stack(arrs, axis=0)


def _params_list(params) -> list:
    return list(params) if isinstance(params, (list, tuple)) else [params]


def _engine(params, batch, sys: SystemParams, want_grads: bool = True,
            only_satellite: int | None = None):
    params_list = _params_list(params)
    h = _as_batch(batch)
    b, k, m, n = h.shape
    if (k, m, n) != (sys.k_sats, sys.m_users, sys.n_antennas):
        raise ValueError(f"channel shape {(k, m, n)} does not match system "
                         f"{(sys.k_sats, sys.m_users, sys.n_antennas)}")
    f64 = params_list[0].layers[0].w.dtype == np.float64
    hs = h / sys.input_scale
    hs = hs.astype(np.complex128 if f64 else np.complex64)
    sigma2 = sys.sigma2 / sys.input_scale ** 2
    weights = sys.weight_vector()

    caches = []
    w = np.empty_like(hs)
    for ki in range(k):
        p = params_list[ki % len(params_list)]
        feats = np.concatenate([hs[:, ki].real, hs[:, ki].imag], axis=-1)
        cache, wk = _forward_satellite_batch(p, feats, sys.power)
        caches.append(cache)
        w[:, ki] = wk
    c, sinr, intf, wsr = _wsr_batch(hs, w, sigma2, sys.bandwidth, weights)
    mean_wsr = float(wsr.mean())
    if not want_grads:
        return -mean_wsr, mean_wsr, w, None

    gw = _wsr_backward(hs, c, sinr, intf, weights, sys.bandwidth, b)
    grads = [_zero_grads(p) for p in params_list]
    for ki in range(k):
        if only_satellite is not None and ki != only_satellite:
            continue
        parts = _backward_satellite_batch(
            params_list[ki % len(params_list)], caches[ki], gw[:, ki])
        _accumulate(grads[ki % len(params_list)], parts)
    if not isinstance(params, (list, tuple)):
        grads = grads[0]
    return -mean_wsr, mean_wsr, w, grads


def batch_loss(params, batch, sys: SystemParams) -> float:
    """Negative mean weighted sum rate over the batch."""
    loss, _, _, _ = _engine(params, batch, sys, want_grads=False)
    return loss


def gradients(params, batch, sys: SystemParams,
              only_satellite: int | None = None):
    """Exact reverse-mode gradient of batch_loss.

    With tied (single) params the gradients of all satellite passes
    accumulate into one GradientSet; only_satellite restricts the backward
    pass to one satellite's contribution (the forward still runs all).
    """
    _, _, _, grads = _engine(params, batch, sys,
                             only_satellite=only_satellite)
    return grads


def infer_beamformers(params, realization, sys: SystemParams) -> BeamformerSet:
    """Run the trained network on one channel realization."""
    h = (realization.h if isinstance(realization, channel.ChannelRealization)
         else np.asarray(realization))
    if h.ndim != 3:
        raise ValueError("expected a single (K, M, N) channel realization")
    _, _, w, _ = _engine(params, h[None], sys, want_grads=False)
    return BeamformerSet(w=np.asarray(w[0], dtype=complex),
                         power_budget=sys.power, scope="per_satellite")


def infer_batch(params, h, sys: SystemParams) -> np.ndarray:
    """Beamformers for a channel batch, shape (B, K, M, N)."""
    _, _, w, _ = _engine(params, h, sys, want_grads=False)
    return w


# --- optimizer -----------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0


def init_adam_state(params: GnnParams) -> AdamState:
    return AdamState(m=[(np.zeros_like(l.w), np.zeros_like(l.b))
                        for l in params.layers],
                     v=[(np.zeros_like(l.w), np.zeros_like(l.b))
                        for l in params.layers],
                     t=0)


def adam_step(params: GnnParams, grads: GradientSet, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """One bias-corrected Adam update; returns new params and state."""
    t = state.t + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new_layers, new_m, new_v = [], [], []
    for layer, (dw, db), (mw, mb), (vw, vb) in zip(
            params.layers, grads.layers, state.m, state.v):
        mw = beta1 * mw + (1 - beta1) * dw
        mb = beta1 * mb + (1 - beta1) * db
        vw = beta2 * vw + (1 - beta2) * dw ** 2
        vb = beta2 * vb + (1 - beta2) * db ** 2
        w = layer.w - lr * (mw / c1) / (np.sqrt(vw / c2) + eps)
        b = layer.b - lr * (mb / c1) / (np.sqrt(vb / c2) + eps)
        new_layers.append(FcLayer(w=w, b=b))
        new_m.append((mw, mb))
        new_v.append((vw, vb))
    return (GnnParams(dims=params.dims, layers=new_layers),
            AdamState(m=new_m, v=new_v, t=t))


# --- training loop -------------------------------------------------------------

class EpochStats(NamedTuple):
    epoch: int
    lr: float
    train_wsr: float
    test_wsr: float


@dataclass
class TrainResult:
    params: object
    history: list
    best_epoch: int
    best_test_wsr: float
    stopped_early: bool
    input_scale: float


def train(cfg: TrainConfig,
          progress: Callable[[EpochStats], None] | None = None) -> TrainResult:
    """Full training run; returns the best-on-test parameters.

    Draw discipline: the seed is split into three independent streams for
    initialization, training batches, and the held-out test set, so the
    test data does not depend on the number of epochs run.

    With auto_scale (the default) the feature normalization is derived from
    the channel's deterministic amplitudes, overriding system.input_scale.
    Physical gains sit around 1e-7, which would starve every ReLU without
    this rescale; the rate objective is exactly invariant under it.
    """
    sys = cfg.system
    if cfg.auto_scale:
        sys = dataclasses.replace(
            sys, input_scale=suggested_input_scale(cfg.chan, sys.m_users))
    ss = np.random.SeedSequence(cfg.seed)
    s_init, s_train, s_test = ss.spawn(3)
    rng_init = np.random.Generator(np.random.Philox(s_init))
    dims = scaled_dims(sys.n_antennas, cfg.scale_factor)
    n_models = 1 if cfg.tied else sys.k_sats
    dtype = np.float32 if cfg.use_float32 else np.float64
    params_list = [init_params(dims, rng_init, dtype=dtype)
                   for _ in range(n_models)]

    rng_test = np.random.Generator(np.random.Philox(s_test))
    h_test = channel.sample_channel_batch(
        cfg.chan, cfg.test_size, sys.k_sats, sys.m_users, sys.n_antennas,
        rng_test)
    rng_train = np.random.Generator(np.random.Philox(s_train))

    states = [init_adam_state(p) for p in params_list]
    steps_per_epoch = cfg.samples_per_epoch // cfg.batch_size
    history: list[EpochStats] = []
    best_test = -np.inf
    best_params = [copy.deepcopy(p) for p in params_list]
    best_epoch = 0
    stale = 0
    stopped_early = False
    step = 0

    for epoch in range(1, cfg.epochs + 1):
        wsr_sum = 0.0
        lr = cfg.lr0
        for _ in range(steps_per_epoch):
            h = channel.sample_channel_batch(
                cfg.chan, cfg.batch_size, sys.k_sats, sys.m_users,
                sys.n_antennas, rng_train)
            lr = lr_at(step, cfg.lr0, cfg.lr_decay, cfg.lr_decay_every)
            loss, mean_wsr, _, grads = _engine(params_list, h, sys)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became non-finite at step {step}",
                    params=best_params[0] if cfg.tied else best_params,
                    step=step)
            for i in range(n_models):
                params_list[i], states[i] = adam_step(
                    params_list[i], grads[i], states[i], lr,
                    cfg.beta1, cfg.beta2, cfg.eps)
            wsr_sum += mean_wsr
            step += 1
        train_wsr = wsr_sum / steps_per_epoch
        _, test_wsr, _, _ = _engine(params_list, h_test, sys,
                                    want_grads=False)
        if not np.isfinite(test_wsr):
            raise TrainingDivergedError(
                f"test evaluation non-finite after epoch {epoch}",
                params=best_params[0] if cfg.tied else best_params,
                step=step)
        stats = EpochStats(epoch, lr, train_wsr, test_wsr)
        history.append(stats)
        if progress is not None:
            progress(stats)
        logger.info("epoch %d lr %.3g train %.6g test %.6g",
                    epoch, lr, train_wsr, test_wsr)

        improved = (test_wsr > best_test + cfg.min_rel_improve * abs(best_test)
                    if np.isfinite(best_test) else True)
        if test_wsr > best_test:
            best_test = test_wsr
            best_params = [copy.deepcopy(p) for p in params_list]
            best_epoch = epoch
        stale = 0 if improved else stale + 1
        if cfg.early_stop and stale >= cfg.patience:
            stopped_early = True
            break

    return TrainResult(
        params=best_params[0] if cfg.tied else best_params,
        history=history, best_epoch=best_epoch, best_test_wsr=best_test,
        stopped_early=stopped_early, input_scale=sys.input_scale)


# --- persistence ----------------------------------------------------------------
#
# Checkpoint layout, little endian: magic | u32 model count | one parameter
# container per model | per model: u64 adam step then per layer m_w, v_w
# (fan_in*fan_out f8 each) and m_b, v_b (fan_out f8) | u64 global step |
# f8 input_scale | u32 length + JSON trailer (rng state and bookkeeping).

def _rng_state_jsonable(state):
    if isinstance(state, dict):
        return {k: _rng_state_jsonable(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return {"__nd__": state.tolist(), "dtype": str(state.dtype)}
    if isinstance(state, (np.integer,)):
        return int(state)
    return state


def _rng_state_restore(state):
    if isinstance(state, dict):
        if "__nd__" in state:
            return np.array(state["__nd__"], dtype=state["dtype"])
        return {k: _rng_state_restore(v) for k, v in state.items()}
    return state


def save_checkpoint(path, params, adam_states=None, step: int = 0,
                    input_scale: float = 1.0, rng_state=None,
                    extra: dict | None = None) -> None:
    params_list = _params_list(params)
    if adam_states is None:
        adam_states = [init_adam_state(p) for p in params_list]
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(params_list)))
        for p in params_list:
            write_params(fh, p)
        for p, st in zip(params_list, adam_states):
            fh.write(struct.pack("<Q", st.t))
            for (mw, mb), (vw, vb) in zip(st.m, st.v):
                for arr in (mw, vw):
                    fh.write(np.ascontiguousarray(arr, dtype=np.float64)
                             .tobytes())
                for arr in (mb, vb):
                    fh.write(np.ascontiguousarray(arr, dtype=np.float64)
                             .tobytes())
        fh.write(struct.pack("<Qd", step, input_scale))
        trailer = {"rng": _rng_state_jsonable(rng_state),
                   "extra": extra or {}}
        blob = json.dumps(trailer).encode()
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


@dataclass
class Checkpoint:
    params_list: list
    adam_states: list
    step: int
    input_scale: float
    rng_state: object
    extra: dict

    @property
    def params(self):
        return (self.params_list[0] if len(self.params_list) == 1
                else self.params_list)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if fh.read(8) != _CKPT_MAGIC:
            raise ValueError("not a training checkpoint")
        (count,) = struct.unpack("<I", fh.read(4))
        params_list = [read_params(fh) for _ in range(count)]
        states = []
        for p in params_list:
            (t,) = struct.unpack("<Q", fh.read(8))
            m, v = [], []
            for spec in layer_plan(p.dims):
                nw = spec.fan_in * spec.fan_out
                mw = np.frombuffer(fh.read(8 * nw), dtype=np.float64)
                vw = np.frombuffer(fh.read(8 * nw), dtype=np.float64)
                mb = np.frombuffer(fh.read(8 * spec.fan_out), dtype=np.float64)
                vb = np.frombuffer(fh.read(8 * spec.fan_out), dtype=np.float64)
                shape = (spec.fan_in, spec.fan_out)
                m.append((mw.reshape(shape).copy(), mb.copy()))
                v.append((vw.reshape(shape).copy(), vb.copy()))
            states.append(AdamState(m=m, v=v, t=t))
        step, input_scale = struct.unpack("<Qd", fh.read(16))
        (blob_len,) = struct.unpack("<I", fh.read(4))
        trailer = json.loads(fh.read(blob_len).decode())
    return Checkpoint(params_list=params_list, adam_states=states,
                      step=step, input_scale=input_scale,
                      rng_state=_rng_state_restore(trailer.get("rng")),
                      extra=trailer.get("extra", {}))


def write_history_csv(path, history, config_hash: str = "") -> None:
    lines = [f"# history v1 config_hash={config_hash} "
             "units: lr dimensionless, wsr bits/s",
             "epoch,lr,train_wsr,test_wsr"]
    for e in history:
        lines.append(f"{e.epoch},{repr(e.lr)},{repr(e.train_wsr)},"
                     f"{repr(e.test_wsr)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
