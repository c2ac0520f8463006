"""Scalar quantizers for firing intervals.

Three codebook families are provided: uniform, Lloyd-Max trained on
empirical interval samples, and power-law companders.  Each family has a
free design function returning an immutable :class:`Codebook` and a
scikit-learn style wrapper (``fit`` / ``transform`` / ``inverse_transform``).

Quantization is a binary search on the decision boundaries; a value lying
exactly on a boundary goes to the lower cell.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import FormatError, InvalidArgumentError
from .validation import check_1d, check_bits, check_interval

KINDS = ("uniform", "lloyd-max", "compander")
DEFAULT_EXPONENTS = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0)


@dataclass(frozen=True, eq=False)
class Codebook:
    """Reproduction levels and decision boundaries of a scalar quantizer."""

    kind: str
    bits: int
    levels: np.ndarray
    boundaries: np.ndarray
    range: tuple
    exponent: float = None
    history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown codebook kind {self.kind!r}")
        bits = check_bits(self.bits)
        levels = np.array(self.levels, dtype=np.float64).ravel()
        bounds = np.array(self.boundaries, dtype=np.float64).ravel()
        n = 1 << bits
        if levels.size != n or bounds.size != n - 1:
            raise InvalidArgumentError(f"{bits}-bit codebook needs {n} levels and {n - 1} boundaries")
        if np.any(np.diff(levels) <= 0):
            raise InvalidArgumentError("levels must be strictly increasing")
        if np.any(bounds <= levels[:-1]) or np.any(bounds >= levels[1:]):
            raise InvalidArgumentError("boundaries must interleave the levels")
        lo, hi = (float(v) for v in self.range)
        if levels[0] < lo or levels[-1] > hi:
            raise InvalidArgumentError("levels must lie inside the codebook range")
        if (self.exponent is not None) != (self.kind == "compander"):
            raise InvalidArgumentError("exponent is required for, and only for, compander codebooks")
        levels.setflags(write=False)
        bounds.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "boundaries", bounds)
        object.__setattr__(self, "range", (lo, hi))
        if self.exponent is not None:
            object.__setattr__(self, "exponent", float(self.exponent))

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.bits == other.bits
            and np.array_equal(self.levels, other.levels)
            and np.array_equal(self.boundaries, other.boundaries)
            and self.range == other.range
            and self.exponent == other.exponent
        )

    __hash__ = None

    @property
    def size(self):
        return self.levels.size

    @property
    def edges(self):
        """Cell edges including the two range ends."""
        return np.concatenate(([self.range[0]], self.boundaries, [self.range[1]]))

    @property
    def max_cell_width(self):
        return float(np.max(np.diff(self.edges)))

    def to_dict(self):
        doc = {
            "kind": self.kind,
            "R": self.bits,
            "range": [float.hex(self.range[0]), float.hex(self.range[1])],
            "levels": [float.hex(float(v)) for v in self.levels],
            "boundaries": [float.hex(float(v)) for v in self.boundaries],
        }
        if self.exponent is not None:
            doc["p"] = float.hex(self.exponent)
        return doc

    def to_json(self):
        """Canonical JSON: sorted keys, compact separators, hex floats."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc):
        try:
            p = doc.get("p")
            return cls(
                kind=doc["kind"],
                bits=doc["R"],
                levels=[float.fromhex(v) for v in doc["levels"]],
                boundaries=[float.fromhex(v) for v in doc["boundaries"]],
                range=tuple(float.fromhex(v) for v in doc["range"]),
                exponent=None if p is None else float.fromhex(p),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, InvalidArgumentError):
                raise FormatError(f"invalid codebook: {exc}") from None
            raise FormatError(f"malformed codebook document: {exc!r}") from None

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise FormatError(f"codebook is not valid JSON: {exc}") from None
        return cls.from_dict(doc)


@dataclass(frozen=True)
class IntervalSamples:
    """Firing intervals pooled over a training ensemble."""

    values: np.ndarray
    scheme: str = None
    ensemble_size: int = None

    def __post_init__(self):
        object.__setattr__(self, "values", check_1d(self.values, "interval samples", allow_empty=False))


def _sample_values(samples):
    if isinstance(samples, IntervalSamples):
        return samples.values
    return check_1d(samples, "samples", allow_empty=False)


# --------------------------------------------------------------------------
# Quantize / dequantize
# --------------------------------------------------------------------------


def quantize(intervals, codebook, return_clamped=False):
    """Map intervals to cell indices.

    Values outside the codebook range fall into the extreme cells; with
    ``return_clamped=True`` the number of such values is returned as well.
    """
    x = check_1d(intervals, "intervals")
    idx = np.searchsorted(codebook.boundaries, x, side="left")
    if return_clamped:
        lo, hi = codebook.range
        return idx, int(np.count_nonzero((x < lo) | (x > hi)))
    return idx


def dequantize(indices, codebook):
    idx = np.asarray(indices)
    if idx.size == 0:
        return np.zeros(0)
    if not np.issubdtype(idx.dtype, np.integer):
        if not np.all(np.equal(np.mod(idx, 1), 0)):
            raise InvalidArgumentError("indices must be integers")
        idx = idx.astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= codebook.size):
        raise InvalidArgumentError(f"index out of range for a {codebook.bits}-bit codebook")
    return codebook.levels[idx]


def distortion(samples, codebook):
    """Empirical mean-squared quantization error."""
    x = _sample_values(samples)
    return float(np.mean((x - dequantize(quantize(x, codebook), codebook)) ** 2))


# --------------------------------------------------------------------------
# Designs
# --------------------------------------------------------------------------


def uq_design(t_min, t_max, bits):
    """Uniform quantizer: equal cells, levels at the cell midpoints."""
    t_min, t_max = check_interval(t_min, t_max, name="quantizer range")
    bits = check_bits(bits)
    n = 1 << bits
    edges = np.linspace(t_min, t_max, n + 1)
    return Codebook("uniform", bits, 0.5 * (edges[:-1] + edges[1:]), edges[1:-1], (t_min, t_max))


def _strictly_increasing(levels):
    # Degenerate training data can leave coincident levels; two ulps apart
    # leaves room for a boundary strictly between neighbours
    levels = np.array(levels)
    for i in range(1, levels.size):
        floor = np.nextafter(np.nextafter(levels[i - 1], np.inf), np.inf)
        if levels[i] < floor:
            levels[i] = floor
    return levels


def _midpoints(levels):
    b = 0.5 * (levels[:-1] + levels[1:])
    # With levels one ulp apart the midpoint rounds onto a level; keep it strictly inside
    return np.where(b >= levels[1:], np.nextafter(levels[1:], -np.inf), b)


def lloyd_max_design(samples, bits, tol=1e-9, max_iter=500):
    """Train a Lloyd-Max quantizer on empirical interval samples.

    Starts from the ``(2i+1) / 2^(R+1)`` sample quantiles and alternates the
    nearest-level partition with centroid updates until the relative change
    in distortion drops below ``tol``.  A cell that loses all its samples is
    re-seeded inside the cell with the largest distortion.  The distortion
    after each iteration is kept in ``Codebook.history``.
    """
    x = np.sort(_sample_values(samples))
    bits = check_bits(bits)
    n = 1 << bits
    if x.size < n:
        raise InvalidArgumentError(f"need at least {n} samples for a {bits}-bit codebook, got {x.size}")
    lo, hi = float(x[0]), float(x[-1])
    levels = np.quantile(x, (2 * np.arange(n) + 1) / (2.0 * n))

    history = []
    prev = np.inf
    for _ in range(max_iter):
        bounds = 0.5 * (levels[:-1] + levels[1:])
        cells = np.searchsorted(bounds, x, side="left")
        counts = np.bincount(cells, minlength=n)
        sums = np.bincount(cells, weights=x, minlength=n)
        occupied = counts > 0
        levels = levels.copy()
        levels[occupied] = sums[occupied] / counts[occupied]
        err = (x - levels[cells]) ** 2
        cur = float(np.mean(err))
        if not np.all(occupied):
            cell_err = np.bincount(cells, weights=err, minlength=n)
            for empty in np.flatnonzero(~occupied):
                worst = int(np.argmax(cell_err))
                members = x[cells == worst]
                if members.size < 2 or members[0] == members[-1]:
                    break
                # split the worst cell at its centroid: new level halfway to its far edge
                far = members[-1] if members[-1] - levels[worst] > levels[worst] - members[0] else members[0]
                levels[empty] = 0.5 * (levels[worst] + far)
                cell_err[worst] = 0.0
            levels = np.sort(levels)
        history.append(cur)
        if prev != np.inf and (prev - cur) <= tol * max(prev, np.finfo(float).tiny):
            break
        if cur == 0.0:
            break
        prev = cur

    levels = _strictly_increasing(levels)
    lo, hi = min(lo, float(levels[0])), max(hi, float(levels[-1]))
    return Codebook("lloyd-max", bits, levels, _midpoints(levels), (lo, hi), history=tuple(history))


def compander_codebook(t_min, t_max, bits, exponent):
    """Power-law compander ``u = ((x - t_min) / (t_max - t_min)) ** p`` with a uniform grid in ``u``."""
    t_min, t_max = check_interval(t_min, t_max, name="compander range")
    bits = check_bits(bits)
    if not exponent > 0:
        raise InvalidArgumentError(f"compander exponent must be > 0, got {exponent!r}")
    n = 1 << bits
    u_edges = np.arange(n + 1) / n
    u_mid = (np.arange(n) + 0.5) / n
    width = t_max - t_min
    levels = t_min + width * u_mid ** (1.0 / exponent)
    bounds = t_min + width * u_edges[1:-1] ** (1.0 / exponent)
    return Codebook("compander", bits, levels, bounds, (t_min, t_max), exponent=exponent)


def compander_design(samples, bits, exponent_grid=DEFAULT_EXPONENTS):
    """Pick the power-law compander with the lowest distortion on the samples.

    The range is taken from the sample extrema.  Ties go to the exponent
    listed first.  Exponents whose levels collapse in double precision
    (extreme ``p`` at high ``R``) are skipped.
    """
    x = _sample_values(samples)
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        # every sample identical: open a tiny range around the common value
        half = 1e-9 * max(abs(lo), 1e-300)
        lo, hi = lo - half, hi + half
    best, best_d = None, np.inf
    for p in exponent_grid:
        try:
            cb = compander_codebook(lo, hi, bits, p)
        except InvalidArgumentError:
            continue
        d = distortion(x, cb)
        if d < best_d:
            best, best_d = cb, d
    if best is None:
        raise InvalidArgumentError(f"no exponent in {tuple(exponent_grid)} gives a valid {bits}-bit compander")
    return best


def select_best_nuq(training, evaluate_codebook, bits, exponent_grid=DEFAULT_EXPONENTS):
    """Train both non-uniform designs and keep the one with lower pipeline NMSE.

    Parameters
    ----------
    training : IntervalSamples or array_like
        Pooled intervals from the training ensemble.
    evaluate_codebook : callable
        Maps a codebook to the mean NMSE (dB) over the validation ensemble.
    bits : int

    Returns
    -------
    best : Codebook
    scores : dict
        Mean NMSE of each candidate, keyed by codebook kind.
    """
    candidates = [
        lloyd_max_design(training, bits),
        compander_design(training, bits, exponent_grid),
    ]
    scores = {cb.kind: float(evaluate_codebook(cb)) for cb in candidates}
    # strict comparison: ties stay with lloyd-max
    best = candidates[0] if scores["lloyd-max"] <= scores["compander"] else candidates[1]
    return best, scores


# --------------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------------


class _QuantizerBase(BaseEstimator, TransformerMixin):
    def _design(self, x):
        raise NotImplementedError

    def fit(self, X, y=None):
        x = check_1d(X, "X", allow_empty=False)
        self.codebook_ = self._design(x)
        self.levels_ = self.codebook_.levels
        self.boundaries_ = self.codebook_.boundaries
        return self

    def transform(self, X):
        check_is_fitted(self, "codebook_")
        shape = np.shape(X)
        return quantize(X, self.codebook_).reshape(shape)

    def inverse_transform(self, X):
        check_is_fitted(self, "codebook_")
        shape = np.shape(X)
        return dequantize(np.asarray(X).ravel(), self.codebook_).reshape(shape)

    def score(self, X, y=None):
        """Negative mean-squared quantization error (higher is better)."""
        check_is_fitted(self, "codebook_")
        return -distortion(X, self.codebook_)


class UniformQuantizer(_QuantizerBase):
    """Uniform quantizer over ``[t_min, t_max]`` (data range when omitted)."""

    def __init__(self, bits=1, t_min=None, t_max=None):
        self.bits = bits
        self.t_min = t_min
        self.t_max = t_max

    def _design(self, x):
        lo = x.min() if self.t_min is None else self.t_min
        hi = x.max() if self.t_max is None else self.t_max
        return uq_design(lo, hi, self.bits)


class LloydMaxQuantizer(_QuantizerBase):
    def __init__(self, bits=1, tol=1e-9, max_iter=500):
        self.bits = bits
        self.tol = tol
        self.max_iter = max_iter

    def _design(self, x):
        return lloyd_max_design(x, self.bits, tol=self.tol, max_iter=self.max_iter)


class CompanderQuantizer(_QuantizerBase):
    def __init__(self, bits=1, exponent_grid=DEFAULT_EXPONENTS):
        self.bits = bits
        self.exponent_grid = exponent_grid

    def _design(self, x):
        return compander_design(x, self.bits, self.exponent_grid)
