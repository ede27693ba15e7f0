"""LSTM cell, sequence LSTM with backpropagation through time, and the
bidirectional wrapper."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .layers import ShapeError, xavier_uniform


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmCellParams:
    """Gate weight matrices (hidden x input / hidden x hidden) and biases.

    Gates: i (input), f (forget), o (output), c (cell candidate):
        i_t = sigmoid(W_xi x_t + W_hi h_{t-1} + b_i)        (f_t, o_t alike)
        c_t = f_t * c_{t-1} + i_t * tanh(W_xc x_t + W_hc h_{t-1} + b_c)
        h_t = o_t * tanh(c_t)
    """

    W_xi: np.ndarray
    W_hi: np.ndarray
    W_xf: np.ndarray
    W_hf: np.ndarray
    W_xo: np.ndarray
    W_ho: np.ndarray
    W_xc: np.ndarray
    W_hc: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        h, d = self.W_xi.shape
        for name in ("W_xi", "W_xf", "W_xo", "W_xc"):
            if getattr(self, name).shape != (h, d):
                raise ShapeError(f"{name} must be {(h, d)}")
        for name in ("W_hi", "W_hf", "W_ho", "W_hc"):
            if getattr(self, name).shape != (h, h):
                raise ShapeError(f"{name} must be {(h, h)}")
        for name in ("b_i", "b_f", "b_o", "b_c"):
            if getattr(self, name).shape != (h,):
                raise ShapeError(f"{name} must be {(h,)}")

    @property
    def hidden_size(self):
        return self.W_xi.shape[0]

    @property
    def input_size(self):
        return self.W_xi.shape[1]

    @classmethod
    def create(cls, d_in, hidden, rng, dtype=np.float64, forget_bias=1.0):
        """Xavier-initialized cell; forget-gate bias starts at +1."""

        def wx():
            return xavier_uniform(rng, (hidden, d_in), d_in, hidden, dtype)

        def wh():
            return xavier_uniform(rng, (hidden, hidden), hidden, hidden, dtype)

        b_f = np.full(hidden, forget_bias, dtype=dtype)
        return cls(
            W_xi=wx(), W_hi=wh(), W_xf=wx(), W_hf=wh(),
            W_xo=wx(), W_ho=wh(), W_xc=wx(), W_hc=wh(),
            b_i=np.zeros(hidden, dtype=dtype), b_f=b_f,
            b_o=np.zeros(hidden, dtype=dtype), b_c=np.zeros(hidden, dtype=dtype),
        )

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def lstm_step(params: LstmCellParams, x_t, h_prev, c_prev):
    """One LSTM cell update; returns (h_t, c_t)."""
    if x_t.shape != (params.input_size,):
        raise ShapeError(f"x_t must be ({params.input_size},), got {x_t.shape}")
    if h_prev.shape != (params.hidden_size,) or c_prev.shape != (params.hidden_size,):
        raise ShapeError(f"state vectors must be ({params.hidden_size},)")
    i = _sigmoid(params.W_xi @ x_t + params.W_hi @ h_prev + params.b_i)
    f = _sigmoid(params.W_xf @ x_t + params.W_hf @ h_prev + params.b_f)
    o = _sigmoid(params.W_xo @ x_t + params.W_ho @ h_prev + params.b_o)
    g = np.tanh(params.W_xc @ x_t + params.W_hc @ h_prev + params.b_c)
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


class LSTM:
    """Unidirectional LSTM over a (T, D) sequence, initial state zero."""

    def __init__(self, d_in, hidden, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.d_in, self.hidden = d_in, hidden
        self.cell = LstmCellParams.create(d_in, hidden, rng, dtype)
        self.grads = {}
        self._cache = None

    @property
    def params(self):
        return self.cell.as_dict()

    def forward(self, seq, train=False):
        if seq.ndim != 2 or seq.shape[1] != self.d_in:
            raise ShapeError(f"lstm expects (T, {self.d_in}), got {seq.shape}")
        if seq.shape[0] < 1:
            raise ShapeError("empty sequence")
        p = self.cell
        t_len = seq.shape[0]
        h = np.zeros(self.hidden, dtype=seq.dtype)
        c = np.zeros(self.hidden, dtype=seq.dtype)
        # input projections for every frame at once; only the recurrent
        # matmuls stay inside the time loop
        ai_x = seq @ p.W_xi.T + p.b_i
        af_x = seq @ p.W_xf.T + p.b_f
        ao_x = seq @ p.W_xo.T + p.b_o
        ag_x = seq @ p.W_xc.T + p.b_c

        shape = (t_len, self.hidden)
        i_s, f_s, o_s, g_s = (np.empty(shape, seq.dtype) for _ in range(4))
        c_s, tc_s, h_prev = (np.empty(shape, seq.dtype) for _ in range(3))
        hs = np.empty(shape, seq.dtype)
        for t in range(t_len):
            h_prev[t] = h
            i = _sigmoid(ai_x[t] + p.W_hi @ h)
            f = _sigmoid(af_x[t] + p.W_hf @ h)
            o = _sigmoid(ao_x[t] + p.W_ho @ h)
            g = np.tanh(ag_x[t] + p.W_hc @ h)
            c = f * c + i * g
            i_s[t], f_s[t], o_s[t], g_s[t] = i, f, o, g
            c_s[t] = c
            tc = np.tanh(c)
            tc_s[t] = tc
            h = o * tc
            hs[t] = h
        self._cache = (seq, i_s, f_s, o_s, g_s, c_s, tc_s, h_prev)
        return hs

    def backward(self, dout):
        seq, i_s, f_s, o_s, g_s, c_s, tc_s, h_prev = self._cache
        p = self.cell
        t_len = seq.shape[0]
        da_i = np.empty_like(i_s)
        da_f = np.empty_like(f_s)
        da_o = np.empty_like(o_s)
        da_g = np.empty_like(g_s)

        dh_next = np.zeros(self.hidden, dtype=seq.dtype)
        dc_next = np.zeros(self.hidden, dtype=seq.dtype)
        for t in range(t_len - 1, -1, -1):
            dh = dout[t] + dh_next
            i, f, o, g, tc = i_s[t], f_s[t], o_s[t], g_s[t], tc_s[t]
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            c_prev = c_s[t - 1] if t > 0 else np.zeros_like(dc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            da_i[t] = di * i * (1.0 - i)
            da_f[t] = df * f * (1.0 - f)
            da_o[t] = do * o * (1.0 - o)
            da_g[t] = dg * (1.0 - g * g)
            dh_next = (
                p.W_hi.T @ da_i[t] + p.W_hf.T @ da_f[t]
                + p.W_ho.T @ da_o[t] + p.W_hc.T @ da_g[t]
            )

        self.grads = {
            "W_xi": da_i.T @ seq, "W_hi": da_i.T @ h_prev, "b_i": da_i.sum(0),
            "W_xf": da_f.T @ seq, "W_hf": da_f.T @ h_prev, "b_f": da_f.sum(0),
            "W_xo": da_o.T @ seq, "W_ho": da_o.T @ h_prev, "b_o": da_o.sum(0),
            "W_xc": da_g.T @ seq, "W_hc": da_g.T @ h_prev, "b_c": da_g.sum(0),
        }
        return da_i @ p.W_xi + da_f @ p.W_xf + da_o @ p.W_xo + da_g @ p.W_xc


class BLSTM:
    """Bidirectional LSTM: concatenation of a forward pass and a pass over
    the time-reversed sequence, giving (T, 2H) output."""

    def __init__(self, d_in, hidden, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.d_in, self.hidden = d_in, hidden
        self.fwd = LSTM(d_in, hidden, rng, dtype)
        self.bwd = LSTM(d_in, hidden, rng, dtype)
        self.grads = {}

    @property
    def params(self):
        out = {f"fwd.{k}": v for k, v in self.fwd.params.items()}
        out.update({f"bwd.{k}": v for k, v in self.bwd.params.items()})
        return out

    def forward(self, seq, train=False):
        h_f = self.fwd.forward(seq, train)
        h_b = self.bwd.forward(seq[::-1], train)[::-1]
        return np.concatenate([h_f, h_b], axis=1)

    def backward(self, dout):
        dh_f = dout[:, : self.hidden]
        dh_b = dout[:, self.hidden :]
        dx_f = self.fwd.backward(dh_f)
        dx_b = self.bwd.backward(dh_b[::-1])[::-1]
        self.grads = {f"fwd.{k}": v for k, v in self.fwd.grads.items()}
        self.grads.update({f"bwd.{k}": v for k, v in self.bwd.grads.items()})
        return dx_f + dx_b


def blstm_forward(params_fwd: LstmCellParams, params_bwd: LstmCellParams, seq):
    """Functional BLSTM forward from explicit cell parameters."""
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ShapeError(f"expected non-empty (T, D) sequence, got {seq.shape}")
    h = np.zeros(params_fwd.hidden_size, dtype=seq.dtype)
    c = np.zeros_like(h)
    out_f = []
    for x_t in seq:
        h, c = lstm_step(params_fwd, x_t, h, c)
        out_f.append(h)
    h = np.zeros(params_bwd.hidden_size, dtype=seq.dtype)
    c = np.zeros_like(h)
    out_b = []
    for x_t in seq[::-1]:
        h, c = lstm_step(params_bwd, x_t, h, c)
        out_b.append(h)
    out_b.reverse()
    return np.concatenate([np.stack(out_f), np.stack(out_b)], axis=1)
