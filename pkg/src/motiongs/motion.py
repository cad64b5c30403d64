"""Motion trend module: LSTM over the windowed pose-feature sequence plus a
per-Gaussian decoder emitting deformation deltas and the dynamic appearance
feature.

The decoder's delta head is zero-initialized so training starts exactly at
the undeformed canonical cloud; position offsets are bounded by a 0.1 m tanh
clamp.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .gaussians import quat_multiply_t
from .nn import DenseLayer, LstmCell, MLP, ParamStore

FMT_DIM = 16
DELTA_DIM = 3 + 4 + 3  # dx, dq, ds


def positional_encoding(x: Tensor, bands=4) -> Tensor:
    """Raw coordinates plus sin/cos at `bands` octave frequencies, axis -1."""
    feats = [x]
    for k in range(bands):
        s = x * (2.0 ** k * np.pi)
        feats.append(s.sin())
        feats.append(s.cos())
    return ad.concat(feats, axis=-1)


def pe_dim(coord_dim: int, bands=4) -> int:
    return coord_dim * (1 + 2 * bands)


def window_indices(frame: int, t: int, s: int) -> list[int]:
    """Window frame indices {p-(t-1)s, ..., p-s, p}, clamped at 0."""
    if t < 1 or s < 1:
        raise ValueError("t and s must be >= 1")
    return [max(0, frame - (t - 1 - i) * s) for i in range(t)]


def build_feature_sequence(track: list, frame: int, t: int, s: int) -> list:
    """Slice the per-frame feature track into the LSTM input window."""
    if not track:
        raise ValueError("empty feature track")
    if frame < 0 or frame >= len(track):
        raise IndexError(f"frame {frame} outside track of length {len(track)}")
    return [track[i] for i in window_indices(frame, t, s)]


class MotionTrendNet:
    """Temporal deformation field over the canonical cloud."""

    def __init__(self, store: ParamStore, rng, feature_dim=64, hidden_dim=64,
                 decoder_hidden=128, pe_bands=4, dx_clamp=0.1,
                 no_lstm=False, name="motion_trend"):
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        self.pe_bands = pe_bands
        self.dx_clamp = dx_clamp
        self.no_lstm = no_lstm
        if no_lstm:
            # pose-only conditioning, parameter count matched to the LSTM
            self.temporal = MLP(store, f"{name}/pose_mlp",
                                [feature_dim, 4 * hidden_dim, hidden_dim],
                                acts=["relu", "tanh"], rng=rng)
        else:
            self.temporal = LstmCell(store, f"{name}/lstm", feature_dim, hidden_dim, rng=rng)
        in_dim = hidden_dim + pe_dim(3, pe_bands)
        self.trunk = MLP(store, f"{name}/decoder",
                         [in_dim, decoder_hidden, decoder_hidden],
                         acts=["relu", "relu"], rng=rng)
        self.delta_head = DenseLayer(store, f"{name}/delta_head", decoder_hidden,
                                     DELTA_DIM, rng=rng, zero_init=True)
        self.fmt_head = DenseLayer(store, f"{name}/fmt_head", decoder_hidden,
                                   FMT_DIM, rng=rng)

    def temporal_state(self, seq: list[Tensor]) -> Tensor:
        """Final hidden state over the feature window (reset at window start)."""
        if self.no_lstm:
            return self.temporal(seq[-1])
        self.temporal.reset_state()
        h = None
        for f in seq:
            h, _ = self.temporal.step(f)
        return h

    def predict_delta(self, seq: list[Tensor], positions: Tensor):
        """Per-Gaussian (dx, dq_residual, ds, f_mt) from the feature window.

        `positions` is the (N, 3) canonical-position tensor; the temporal
        state is shared across Gaussians.
        """
        for f in seq:
            if f.shape != (self.feature_dim,):
                raise ValueError(f"feature shape {f.shape} != ({self.feature_dim},)")
        h = self.temporal_state(seq)
        n = positions.shape[0]
        pe = positional_encoding(positions, self.pe_bands)
        h_rows = h.reshape(1, self.hidden_dim) + Tensor(np.zeros((n, self.hidden_dim)))
        feats = self.trunk(ad.concat([h_rows, pe], axis=1))
        raw = self.delta_head(feats)
        f_mt = self.fmt_head(feats)
        dx = raw[:, 0:3].tanh() * self.dx_clamp
        dq = raw[:, 3:7]
        ds = raw[:, 7:10]
        return dx, dq, ds, f_mt


def apply_delta(positions: Tensor, quats: Tensor, log_scales: Tensor,
                dx: Tensor, dq: Tensor, ds: Tensor):
    """Deform the canonical Gaussians: additive position and log-scale,
    rotation composed as normalize(unit + dq) ⊗ q_c.

    Zero deltas reproduce the canonical parameters bit-exactly.
    """
    for d in (dx.data, dq.data, ds.data):
        if not np.all(np.isfinite(d)):
            raise ValueError("non-finite deformation delta")
    n = dq.shape[0]
    unit = np.zeros((n, 4))
    unit[:, 0] = 1.0
    x_e = positions + dx
    # at dq == 0 this reduces to (1,0,0,0) ⊗ q_c, which is q_c bit-exactly
    delta_q = ad.normalize(Tensor(unit) + dq, axis=-1)
    q_e = quat_multiply_t(delta_q, quats)
    ln_s_e = log_scales + ds
    return x_e, q_e, ln_s_e
