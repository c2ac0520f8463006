"""Bounded, bandlimited signals represented as finite sinc series.

A signal is ``f(t) = sum_k a_k sinc(omega0 (t - tau_k))`` with the centres
``tau_k = grid_origin + k * T_nyq`` on the Nyquist grid, where
``sinc(x) = sin(x) / x``.  Every member of the class is bounded by ``c`` and
therefore (Bernstein) has slope bounded by ``c * omega0``.

Integrals are exact per term through the sine integral ``Si``, which makes
the encoders' root finding smooth and precise.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import sici

from .exceptions import FormatError, InvalidArgumentError
from .validation import check_interval, check_positive

#: Guard coefficients placed on each side of the requested support.
GUARD_SAMPLES = 5
#: Oversampling of the dense grid used for peak and slope searches.
DENSE_FACTOR = 32


def nyquist_period(omega0):
    """Return the Nyquist period ``pi / omega0`` in seconds."""
    omega0 = check_positive(omega0, "omega0")
    return math.pi / omega0


def slope_bound(omega0, c):
    """Return the Bernstein slope bound ``epsilon = c * omega0``.

    ``c = 0`` is accepted and gives a zero bound (the trivial signal class).
    """
    omega0 = check_positive(omega0, "omega0")
    c = check_positive(c, "c", allow_zero=True)
    return c * omega0


def sine_integral(x):
    """Vectorised ``Si(x) = int_0^x sin(u)/u du``."""
    return sici(x)[0]


@dataclass(frozen=True)
class SignalSpec:
    """Recipe for drawing a random member of the bounded bandlimited class."""

    omega0: float
    amp_bound: float
    support: tuple
    seed: int = 0

    def __post_init__(self):
        check_positive(self.omega0, "omega0")
        check_positive(self.amp_bound, "amp_bound")
        lo, hi = check_interval(*self.support, name="support")
        object.__setattr__(self, "support", (lo, hi))

    @property
    def t_nyq(self):
        return nyquist_period(self.omega0)

    @property
    def epsilon(self):
        return slope_bound(self.omega0, self.amp_bound)


@dataclass(frozen=True, eq=False)
class BandlimitedSignal:
    """Finite sinc series on the Nyquist grid.

    Parameters
    ----------
    omega0 : float
        Angular bandwidth (rad/s).
    amp_bound : float
        Amplitude bound ``c`` of the class the signal belongs to.
    grid_origin : float
        Centre of coefficient 0 (s).
    coeffs : array_like
        Amplitudes ``a_k``; since the sinc basis is interpolating, these are
        also the signal samples at the grid centres.
    """

    omega0: float
    amp_bound: float
    grid_origin: float
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_positive(self.omega0, "omega0")
        check_positive(self.amp_bound, "amp_bound", allow_zero=True)
        coeffs = np.array(self.coeffs, dtype=np.float64).ravel()
        if not np.all(np.isfinite(coeffs)):
            raise InvalidArgumentError("coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "grid_origin", float(self.grid_origin))
        object.__setattr__(self, "omega0", float(self.omega0))
        object.__setattr__(self, "amp_bound", float(self.amp_bound))

    def __eq__(self, other):
        if not isinstance(other, BandlimitedSignal):
            return NotImplemented
        return (
            self.omega0 == other.omega0
            and self.amp_bound == other.amp_bound
            and self.grid_origin == other.grid_origin
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None

    @property
    def t_nyq(self):
        return math.pi / self.omega0

    @property
    def epsilon(self):
        return self.amp_bound * self.omega0

    @property
    def centers(self):
        return self.grid_origin + self.t_nyq * np.arange(self.coeffs.size)

    @property
    def span(self):
        """Time range covered by the coefficient centres."""
        c = self.centers
        if c.size == 0:
            return (self.grid_origin, self.grid_origin)
        return (float(c[0]), float(c[-1]))

    def __call__(self, t):
        return evaluate(self, t)

    def derivative(self, t):
        """First derivative ``f'(t)``, evaluated in closed form."""
        t = np.asarray(t, dtype=np.float64)
        x = self.omega0 * (t[..., None] - self.centers)
        small = np.abs(x) < 1e-4
        xs = np.where(small, 1.0, x)
        # d/dx sin(x)/x; Taylor branch near 0: -x/3 + x^3/30
        d = np.where(small, -x / 3.0 + x**3 / 30.0, (xs * np.cos(xs) - np.sin(xs)) / xs**2)
        return self.omega0 * (d @ self.coeffs)

    def to_json(self):
        """Serialize as JSON with hex-encoded floats for bit-exact round trips."""
        doc = {
            "omega0": float.hex(self.omega0),
            "c": float.hex(self.amp_bound),
            "grid_origin": float.hex(self.grid_origin),
            "coeffs": [float.hex(float(a)) for a in self.coeffs],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            return cls(
                omega0=_unhex(doc["omega0"]),
                amp_bound=_unhex(doc["c"]),
                grid_origin=_unhex(doc["grid_origin"]),
                coeffs=[_unhex(a) for a in doc["coeffs"]],
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise FormatError(f"malformed signal document: {exc}") from None


def _unhex(value):
    # Plain JSON numbers are accepted too, for hand-written documents.
    if isinstance(value, str):
        return float.fromhex(value)
    return float(value)


def generate(spec, coeffs=None):
    """Draw a random signal for ``spec`` and normalise its peak to exactly ``c``.

    Coefficients are i.i.d. uniform on [-1, 1] at the Nyquist cell centres
    tiling ``[t_a - 5 T_nyq, t_b + 5 T_nyq]``; for the [-0.45, 0.45] s support
    at 50 Hz bandwidth that is 90 + 10 coefficients.

    ``coeffs`` overrides the random draw (used by tests); an all-zero vector
    yields the zero signal, which is left unscaled.
    """
    if not isinstance(spec, SignalSpec):
        raise InvalidArgumentError("spec must be a SignalSpec")
    t_nyq = spec.t_nyq
    t_a, t_b = spec.support
    n_cells = int(round((t_b - t_a) / t_nyq))
    if (t_b - t_a) < t_nyq * (1 - 1e-12) or n_cells < 1:
        raise InvalidArgumentError("support must span at least one Nyquist period")
    n = n_cells + 2 * GUARD_SAMPLES
    origin = 0.5 * (t_a + t_b) - 0.5 * (n - 1) * t_nyq

    if coeffs is None:
        rng = np.random.default_rng(spec.seed)
        coeffs = rng.uniform(-1.0, 1.0, size=n)
    else:
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (n,):
            raise InvalidArgumentError(f"expected {n} coefficients, got shape {coeffs.shape}")

    raw = BandlimitedSignal(spec.omega0, spec.amp_bound, origin, coeffs)
    p = peak(raw)
    if p == 0.0:
        return raw
    return BandlimitedSignal(spec.omega0, spec.amp_bound, origin, coeffs * (spec.amp_bound / p))


def evaluate(signal, t):
    """Evaluate the sinc series at ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=np.float64)
    if signal.coeffs.size == 0:
        return np.zeros_like(t)[()]
    # np.sinc is the normalised sinc, and omega0 (t - tau) / pi = (t - tau) / T_nyq
    u = (t[..., None] - signal.centers) / signal.t_nyq
    return (np.sinc(u) @ signal.coeffs)[()]


def antiderivative(signal, t):
    """``F(t) = sum_k a_k Si(omega0 (t - tau_k)) / omega0``; ``F(t2) - F(t1)`` is the integral."""
    t = np.asarray(t, dtype=np.float64)
    x = signal.omega0 * (t[..., None] - signal.centers)
    return ((sine_integral(x) @ signal.coeffs) / signal.omega0)[()]


def integrate(signal, t1, t2):
    """Exact integral of the signal over ``[t1, t2]``."""
    t1, t2 = float(t1), float(t2)
    if t1 > t2:
        raise InvalidArgumentError(f"integration bounds reversed: t1={t1!r} > t2={t2!r}")
    if t1 == t2 or signal.coeffs.size == 0:
        return 0.0
    x = signal.omega0 * (np.array([t2, t1])[:, None] - signal.centers)
    si = sine_integral(x)
    return float(((si[0] - si[1]) @ signal.coeffs) / signal.omega0)


def peak(signal, density=DENSE_FACTOR, margin=GUARD_SAMPLES):
    """Maximum of ``|f|`` over the coefficient span extended by ``margin`` periods.

    A dense grid (``density`` points per Nyquist period) locates the
    candidate maxima, a parabola through the three neighbouring samples gives
    the first refinement, and the zero of ``f'`` bracketed around it gives
    the final location.
    """
    if signal.coeffs.size == 0 or not np.any(signal.coeffs):
        return 0.0
    t_nyq = signal.t_nyq
    lo, hi = signal.span
    h = t_nyq / density
    grid = np.arange(lo - margin * t_nyq, hi + margin * t_nyq + h / 2, h)
    vals = np.abs(evaluate(signal, grid))
    i = int(np.argmax(vals))
    best = float(vals[i])
    # Refine the few largest local maxima: neighbouring peaks can swap after refinement.
    interior = (vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])
    cands = np.flatnonzero(interior) + 1
    cands = cands[vals[cands] > best * (1 - 1e-3)]
    for j in cands:
        best = max(best, _refine_peak(signal, grid[j], h, vals[j - 1], vals[j], vals[j + 1]))
    return best


def _refine_peak(signal, t0, h, ym, y0, yp):
    denom = ym - 2 * y0 + yp
    shift = 0.5 * (ym - yp) / denom if denom != 0 else 0.0
    t_par = t0 + h * float(np.clip(shift, -1.0, 1.0))
    best = max(y0, abs(float(evaluate(signal, t_par))))
    a, b = t0 - h, t0 + h
    da, db = signal.derivative(a), signal.derivative(b)
    if da * db < 0:
        t_star = brentq(signal.derivative, a, b, xtol=1e-16, rtol=4 * np.finfo(float).eps)
        best = max(best, abs(float(evaluate(signal, t_star))))
    return best
