"""Integrate-and-fire time encoding machines with constant, variable and linear bias.

All three machines share the same firing rule (``kappa = 1``)::

    int_{t_n}^{t_{n+1}} f(t) + b_n(t) dt = delta

and differ only in how the bias ``b_n`` on interval ``n`` is chosen.  Every
bias here is affine in time, ``b_n(t) = slope * (t - t_n) + offset``, so its
integral over an interval has a closed form and the decoder can replay it.

The record emitted by :func:`encode` starts with a reset at ``t_start``
(``t_first``); the first interval therefore runs under an initial bias that
uses the amplitude bound ``c`` in place of any signal history.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import FormatError, InfeasibleBiasError, InvalidArgumentError
from .signal import BandlimitedSignal, antiderivative
from .validation import check_positive

SCHEMES = ("conv", "vb", "lb")


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstParams:
    """Conventional IF-TEM: constant bias ``b`` above the amplitude bound."""

    delta_c: float
    bias: float
    omega0: float
    amp_bound: float

    scheme = "conv"

    def __post_init__(self):
        check_positive(self.delta_c, "delta_c")
        check_positive(self.omega0, "omega0")
        check_positive(self.amp_bound, "amp_bound", allow_zero=True)
        check_positive(self.bias, "bias")
        if self.bias <= self.amp_bound:
            raise InvalidArgumentError(
                f"bias must exceed the amplitude bound: b={self.bias!r} <= c={self.amp_bound!r}"
            )

    @property
    def epsilon(self):
        return self.amp_bound * self.omega0

    @property
    def t_nyq(self):
        return math.pi / self.omega0

    @property
    def threshold(self):
        return self.delta_c

    def header_values(self):
        return (self.delta_c, self.bias)


@dataclass(frozen=True)
class VbParams:
    """Variable-bias IF-TEM, parametrised by its threshold ``delta_v``."""

    delta_v: float
    omega0: float
    amp_bound: float

    scheme = "vb"

    def __post_init__(self):
        check_positive(self.delta_v, "delta_v")
        check_positive(self.omega0, "omega0")
        check_positive(self.amp_bound, "amp_bound")

    @property
    def epsilon(self):
        return self.amp_bound * self.omega0

    @property
    def t_nyq(self):
        return math.pi / self.omega0

    @property
    def t_max(self):
        return math.sqrt(2.0 * self.delta_v / self.epsilon)

    @property
    def threshold(self):
        return self.delta_v

    def header_values(self):
        return (self.delta_v,)


@dataclass(frozen=True)
class LbParams:
    """Linear-bias IF-TEM: threshold ``delta`` and bias shift ``mu``.

    ``alpha`` and ``beta`` are the interval bounds expressed as fractions of
    the Nyquist period; they are derived from ``(delta, mu)`` so that
    hand-picked parameters and designed ones are handled identically.
    """

    delta: float
    mu: float
    omega0: float
    amp_bound: float

    scheme = "lb"

    def __post_init__(self):
        check_positive(self.delta, "delta")
        check_positive(self.mu, "mu")
        check_positive(self.omega0, "omega0")
        check_positive(self.amp_bound, "amp_bound")

    @property
    def epsilon(self):
        return self.amp_bound * self.omega0

    @property
    def t_nyq(self):
        return math.pi / self.omega0

    @property
    def beta(self):
        return self.delta / (self.mu * self.t_nyq)

    @property
    def alpha(self):
        return lb_interval_bounds(self)[0] / self.t_nyq

    @property
    def threshold(self):
        return self.delta

    def header_values(self):
        return (self.delta, self.mu)


def params_from_header(scheme, values, omega0, amp_bound):
    """Rebuild scheme parameters from the scalar list stored in a bitstream header."""
    if scheme == "conv":
        return ConstParams(values[0], values[1], omega0, amp_bound)
    if scheme == "vb":
        return VbParams(values[0], omega0, amp_bound)
    if scheme == "lb":
        return LbParams(values[0], values[1], omega0, amp_bound)
    raise InvalidArgumentError(f"unknown scheme {scheme!r}")


def default_params(scheme, omega0=100 * math.pi, amp_bound=1.0):
    """Parameters used throughout the experiments (``T_max = T_nyq`` for all three)."""
    t_nyq = math.pi / omega0
    eps = amp_bound * omega0
    if scheme == "lb":
        # delta = eps T^2 and mu = eps T: the design for alpha = sqrt(2) - 1, beta = 1
        return LbParams(eps * t_nyq**2, eps * t_nyq, omega0, amp_bound)
    if scheme == "vb":
        return VbParams(0.0157, omega0, amp_bound)
    if scheme == "conv":
        return ConstParams(0.005, 1.5, omega0, amp_bound)
    raise InvalidArgumentError(f"unknown scheme {scheme!r}")


# --------------------------------------------------------------------------
# Design and closed-form bounds
# --------------------------------------------------------------------------


def lb_design(alpha, beta, omega0, c):
    """Choose ``(delta, mu)`` so that every interval lies in ``[alpha, beta] * T_nyq``."""
    alpha = check_positive(alpha, "alpha")
    beta = check_positive(beta, "beta")
    if not alpha < beta:
        raise InvalidArgumentError(f"need alpha < beta, got alpha={alpha!r}, beta={beta!r}")
    if beta > 1:
        raise InvalidArgumentError(f"beta must not exceed 1, got {beta!r}")
    omega0 = check_positive(omega0, "omega0")
    c = check_positive(c, "c")
    eps = c * omega0
    t_nyq = math.pi / omega0
    ratio = (beta + alpha) / (beta - alpha)
    mu = eps * alpha * t_nyq * ratio
    delta = mu * beta * t_nyq
    return LbParams(delta, mu, omega0, c)


def lb_min_interval(params, t_prev):
    """Fastest possible next interval after an interval of length ``t_prev``.

    Positive root of ``eps T^2 + (eps t_prev + mu) T - delta = 0``, written in
    the cancellation-free form so the ``eps -> 0`` limit ``delta / mu`` is exact.
    """
    eps, mu, delta = params.epsilon, params.mu, params.delta
    p = eps * t_prev + mu
    return 2.0 * delta / (p + math.sqrt(p * p + 4.0 * eps * delta))


def lb_interval_bounds(params):
    """``(T_min, T_max)`` for the linear-bias machine.

    The slowest interval has the integrand pinned at ``mu``; the fastest has
    the signal rising at full slope right after the longest possible
    previous interval.
    """
    t_max = params.delta / params.mu
    return lb_min_interval(params, t_max), t_max


def vb_interval_bounds(params):
    t_max = params.t_max
    return (math.sqrt(5.0) - 2.0) * t_max, t_max


def conv_interval_bounds(params):
    d, b, c = params.delta_c, params.bias, params.amp_bound
    if b <= c:
        raise InvalidArgumentError("bias must exceed the amplitude bound")
    return d / (b + c), d / (b - c)


def interval_bounds(params):
    """Dispatch to the closed-form bounds of the parameters' scheme."""
    return {
        "conv": conv_interval_bounds,
        "vb": vb_interval_bounds,
        "lb": lb_interval_bounds,
    }[params.scheme](params)


# --------------------------------------------------------------------------
# Bias recursion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BiasState:
    """Decoder-visible history: previous running average and interval length."""

    fhat_prev: float
    t_prev: float


def running_average(delta, t_prev, bias_integral):
    """Mean of the signal over the last interval, recovered from the threshold."""
    t_prev = float(t_prev)
    if not t_prev > 0:
        raise InvalidArgumentError(f"t_prev must be > 0, got {t_prev!r}")
    return (delta - bias_integral) / t_prev


def affine_integral(slope, offset, length):
    """``int_0^length slope * s + offset ds``."""
    return 0.5 * slope * length * length + offset * length


def lb_bias(state, params, margin=0.0):
    """Affine bias ``(slope, offset)`` for the next linear-bias interval."""
    eps = params.epsilon
    return eps, params.mu + margin + 0.5 * eps * state.t_prev - state.fhat_prev


def vb_bias(state, params, margin=0.0):
    """Constant bias of the variable-bias rule, as ``(0, level)``.

    The level keeps a worst-case slow signal from stretching the interval
    past ``T_max = sqrt(2 delta_v / eps)``.
    """
    eps = params.epsilon
    return 0.0, eps * params.t_max + margin + 0.5 * eps * state.t_prev - state.fhat_prev


def initial_bias(params, margin=0.0):
    """Bias of the first interval, using ``f(t_start) >= -c`` instead of history."""
    c = params.amp_bound
    if params.scheme == "lb":
        return params.epsilon, c + params.mu + margin
    if params.scheme == "vb":
        return 0.0, params.epsilon * params.t_max + c + margin
    return 0.0, params.bias


def next_bias(params, state, margin=0.0):
    if state is None:
        return initial_bias(params, margin)
    if params.scheme == "lb":
        return lb_bias(state, params, margin)
    if params.scheme == "vb":
        return vb_bias(state, params, margin)
    return 0.0, params.bias


def matched_margin(params, codebook):
    """Bias inflation ``eps * q / 2`` for the matched quantization-state mode."""
    if params.scheme == "conv" or codebook is None:
        return 0.0
    return 0.5 * params.epsilon * codebook.max_cell_width


# --------------------------------------------------------------------------
# Encoding
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiringRecord:
    """Output of a time encoding machine.

    ``intervals[n]`` is ``t_{n+1} - t_n`` with ``t_0 = t_first``, and
    ``bias_trace[n]`` the ``(slope, offset)`` of the bias used on it.
    ``fhat`` holds the encoder's running averages (one per interval).
    """

    scheme: str
    t_first: float
    intervals: np.ndarray
    bias_trace: np.ndarray = field(repr=False)
    fhat: np.ndarray = field(default=None, repr=False)
    mode: str = "open-loop"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}")
        intervals = np.array(self.intervals, dtype=np.float64).ravel()
        trace = np.array(self.bias_trace, dtype=np.float64).reshape(-1, 2)
        if trace.shape[0] != intervals.size:
            raise InvalidArgumentError("bias_trace must have one row per interval")
        if np.any(intervals <= 0):
            raise InvalidArgumentError("intervals must be positive")
        fhat = None if self.fhat is None else np.array(self.fhat, dtype=np.float64).ravel()
        for arr in (intervals, trace, fhat):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "intervals", intervals)
        object.__setattr__(self, "bias_trace", trace)
        object.__setattr__(self, "fhat", fhat)
        object.__setattr__(self, "t_first", float(self.t_first))

    @property
    def times(self):
        """Firing times, starting with the reset at ``t_first``."""
        return self.t_first + np.concatenate(([0.0], np.cumsum(self.intervals)))

    @property
    def n_firings(self):
        return int(self.intervals.size)

    def to_json(self):
        doc = {
            "scheme": self.scheme,
            "t_first": float.hex(self.t_first),
            "intervals": [float.hex(float(x)) for x in self.intervals],
            "bias_trace": [[float.hex(float(s)), float.hex(float(o))] for s, o in self.bias_trace],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            return cls(
                scheme=doc["scheme"],
                t_first=float.fromhex(doc["t_first"]),
                intervals=[float.fromhex(x) for x in doc["intervals"]],
                bias_trace=[[float.fromhex(s), float.fromhex(o)] for s, o in doc["bias_trace"]],
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise FormatError(f"malformed firing record: {exc}") from None


def _search_step(params):
    # Smallest interval any valid input can produce, before the /8 refinement
    lo, _ = interval_bounds(params)
    if params.scheme == "vb":
        # The initial VB bias adds c on top of the steady-state level
        lo = min(lo, params.delta_v / (params.epsilon * params.t_max + 2 * params.amp_bound))
    elif params.scheme == "lb":
        lo = min(lo, params.delta / (2 * params.amp_bound + params.mu + params.epsilon * params.t_nyq))
    return lo / 8.0


def encode(signal, params, t_start, t_end, resolution=1e-15, codebook=None, max_stretch=20.0):
    """Run a time encoding machine over ``[t_start, t_end]``.

    Parameters
    ----------
    signal : BandlimitedSignal
    params : ConstParams, VbParams or LbParams
    t_start, t_end : float
        Encoding window; ``t_start`` acts as the first firing (integrator reset).
    resolution : float
        Absolute time tolerance of each located firing (s).
    codebook : Codebook, optional
        Switches to the matched quantization-state mode: the bias recursion
        runs on quantized intervals, with the bias raised by ``eps * q / 2``.
    max_stretch : float
        A firing not found within ``max_stretch * T_max`` is treated as an
        infeasible bias.

    Returns
    -------
    FiringRecord
    """
    if not isinstance(signal, BandlimitedSignal):
        raise InvalidArgumentError("signal must be a BandlimitedSignal")
    if params.scheme not in SCHEMES:
        raise InvalidArgumentError(f"unknown scheme {params.scheme!r}")
    t_start, t_end = float(t_start), float(t_end)
    if not t_start < t_end:
        raise InvalidArgumentError("t_start must precede t_end")
    if signal.omega0 > params.omega0 * (1 + 1e-12) or signal.amp_bound > params.amp_bound * (1 + 1e-12):
        raise InvalidArgumentError("signal lies outside the class the parameters were designed for")

    delta = params.threshold
    margin = matched_margin(params, codebook)
    h = _search_step(params)
    n_grid = int(math.ceil(1.25 * interval_bounds(params)[1] / h)) + 1
    steps = h * np.arange(1, n_grid + 1)
    limit = max_stretch * interval_bounds(params)[1]
    xtol, rtol = float(resolution), 4 * np.finfo(float).eps

    if codebook is not None:
        from .quantization import dequantize, quantize

    def remaining(t, t_n, a_n, slope, offset):
        s = t - t_n
        return antiderivative(signal, t) - a_n + 0.5 * slope * s * s + offset * s - delta

    intervals, trace, fhats = [], [], []
    state = None
    t_n = t_start
    while True:
        slope, offset = next_bias(params, state, margin)
        args = (t_n, antiderivative(signal, t_n), slope, offset)
        t_cap = min(t_end, t_n + limit)
        if remaining(t_cap, *args) < 0:
            if t_cap < t_end:
                raise InfeasibleBiasError("integrand never reached the threshold", t_n)
            break
        grid = t_n + steps
        grid = np.append(grid[grid < t_cap], t_cap)
        vals = remaining(grid, *args)
        j = int(np.flatnonzero(vals >= 0)[0])
        if vals[j] == 0:
            t_next = float(grid[j])
        else:
            lo = float(grid[j - 1]) if j > 0 else t_n
            t_next = brentq(remaining, lo, float(grid[j]), args=args, xtol=xtol, rtol=rtol)
        t_len = t_next - t_n
        intervals.append(t_len)
        trace.append((slope, offset))
        if codebook is not None:
            t_len = float(dequantize(quantize([t_len], codebook), codebook)[0])
        fhat = running_average(delta, t_len, affine_integral(slope, offset, t_len))
        if codebook is not None:
            fhat = min(max(fhat, -params.amp_bound), params.amp_bound)
        fhats.append(fhat)
        state = BiasState(fhat, t_len)
        t_n = t_next

    return FiringRecord(
        scheme=params.scheme,
        t_first=t_start,
        intervals=intervals,
        bias_trace=np.array(trace, dtype=np.float64).reshape(-1, 2),
        fhat=fhats,
        mode="open-loop" if codebook is None else "matched",
    )


# --------------------------------------------------------------------------
# Firing density
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DensitySummary:
    rates: np.ndarray
    min: float
    max: float
    spread: float


def firing_density(record, skip_first=False):
    """Instantaneous firing rates ``1 / T_n`` (Hz) and their spread."""
    intervals = record.intervals if isinstance(record, FiringRecord) else np.asarray(record, float)
    if skip_first:
        intervals = intervals[1:]
    if intervals.size == 0:
        raise InvalidArgumentError("firing record has no intervals")
    rates = 1.0 / intervals
    lo, hi = float(rates.min()), float(rates.max())
    return DensitySummary(rates=rates, min=lo, max=hi, spread=hi - lo)


# --------------------------------------------------------------------------
# Estimator front end
# --------------------------------------------------------------------------


class TimeEncoder(BaseEstimator, TransformerMixin):
    """Encode signals with one of the three machines, scikit-learn style.

    ``transform`` maps an iterable of :class:`BandlimitedSignal` to a list of
    :class:`FiringRecord`.  Fitting only validates and freezes parameters.

    Parameters
    ----------
    scheme : {'lb', 'vb', 'conv'}
    omega0, amp_bound : float
        Signal class the machine is designed for.
    delta, mu : float, optional
        Linear-bias threshold and shift; default to the ``alpha = sqrt(2)-1``,
        ``beta = 1`` design.
    delta_v : float, optional
        Variable-bias threshold.
    delta_c, bias : float, optional
        Conventional threshold and bias.
    t_start, t_end : float, optional
        Encoding window; defaults to each signal's coefficient span.
    """

    def __init__(self, scheme="lb", omega0=100 * math.pi, amp_bound=1.0, delta=None, mu=None,
                 delta_v=None, delta_c=None, bias=None, t_start=None, t_end=None,
                 resolution=1e-15):
        self.scheme = scheme
        self.omega0 = omega0
        self.amp_bound = amp_bound
        self.delta = delta
        self.mu = mu
        self.delta_v = delta_v
        self.delta_c = delta_c
        self.bias = bias
        self.t_start = t_start
        self.t_end = t_end
        self.resolution = resolution

    def _build_params(self):
        base = default_params(self.scheme, self.omega0, self.amp_bound)
        if self.scheme == "lb":
            return replace(base, delta=self.delta or base.delta, mu=self.mu or base.mu)
        if self.scheme == "vb":
            return replace(base, delta_v=self.delta_v or base.delta_v)
        return replace(base, delta_c=self.delta_c or base.delta_c, bias=self.bias or base.bias)

    def fit(self, X=None, y=None):
        self.params_ = self._build_params()
        self.interval_bounds_ = interval_bounds(self.params_)
        return self

    def transform(self, X):
        if not hasattr(self, "params_"):
            self.fit()
        signals = [X] if isinstance(X, BandlimitedSignal) else list(X)
        out = []
        for s in signals:
            lo, hi = s.span
            t0 = lo if self.t_start is None else self.t_start
            t1 = hi if self.t_end is None else self.t_end
            out.append(encode(s, self.params_, t0, t1, resolution=self.resolution))
        return out
