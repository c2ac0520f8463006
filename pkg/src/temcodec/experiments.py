"""End-to-end experiment harness: ensembles, pipelines and CSV/JSON artifacts.

Every command is deterministic given its :class:`ExperimentConfig`.  Signals
are seeded per index (evaluation ``seed + i``, training
``seed + TRAIN_OFFSET + i``), work is spread over a thread pool whose size
comes from ``TEMCODEC_THREADS``, and results are gathered in input order.
"""

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .codec import MODES, decode_stream, decoder_replay, pack
from .encoders import (
    SCHEMES,
    default_params,
    encode,
    firing_density,
    interval_bounds,
    matched_margin,
)
from .exceptions import InvalidArgumentError
from .quantization import (
    compander_design,
    dequantize,
    lloyd_max_design,
    quantize,
    select_best_nuq,
    uq_design,
)
from .reconstruction import SOLVERS, NmseEvaluator, ReconConfig, reconstruct
from .signal import BandlimitedSignal, SignalSpec, generate
from .validation import check_bits, check_positive

THREADS_ENV = "TEMCODEC_THREADS"
TRAIN_OFFSET = 1_000_000
QUANTIZERS = ("uniform", "lloyd-max", "compander")
PARAM_KEYS = {"lb": ("delta", "mu"), "vb": ("delta_v",), "conv": ("delta_c", "bias")}


def _default_scheme_params(omega0=100 * math.pi, amp_bound=1.0):
    out = {}
    for scheme, keys in PARAM_KEYS.items():
        p = default_params(scheme, omega0, amp_bound)
        out[scheme] = {k: getattr(p, k) for k in keys}
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's outputs.

    ``params`` maps a scheme name to its parameter overrides, e.g.
    ``{"lb": {"delta": 0.0314, "mu": 3.14}}``; after construction it holds
    the full effective parameter set.  ``out`` is the only field that does
    not enter :meth:`config_hash`.
    """

    seed: int = 0
    n_train: int = 100
    n_eval: int = 100
    omega0: float = 100 * math.pi
    amp_bound: float = 1.0
    support: tuple = (-0.45, 0.45)
    schemes: tuple = SCHEMES
    params: dict = field(default_factory=dict)
    bits: tuple = tuple(range(1, 9))
    mode: str = "open-loop"
    decoder_clamp: bool = False
    solver: str = "direct"
    guard: float = 0.05
    n_select: int = 20
    roundtrip_quantizer: str = "uniform"
    out: str = "results"

    def __post_init__(self):
        for name in ("seed", "n_train", "n_eval", "n_select"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
        if self.seed < 0:
            raise InvalidArgumentError("seed must be non-negative")
        if self.n_eval < 1 or self.n_train < 1:
            raise InvalidArgumentError("ensemble sizes must be at least 1")
        if not 1 <= self.n_select <= self.n_train:
            raise InvalidArgumentError("n_select must lie in [1, n_train]")
        if self.seed + max(self.n_eval, self.n_train) > TRAIN_OFFSET:
            raise InvalidArgumentError("training and evaluation seeds would overlap")
        check_positive(self.omega0, "omega0")
        check_positive(self.amp_bound, "amp_bound")
        check_positive(self.guard, "guard", allow_zero=True)
        support = tuple(float(x) for x in self.support)
        if len(support) != 2 or not support[0] < support[1]:
            raise InvalidArgumentError(f"support must be an increasing pair, got {self.support!r}")
        object.__setattr__(self, "support", support)
        schemes = tuple(self.schemes)
        if not schemes or any(s not in SCHEMES for s in schemes) or len(set(schemes)) != len(schemes):
            raise InvalidArgumentError(f"schemes must be distinct names from {SCHEMES}, got {self.schemes!r}")
        object.__setattr__(self, "schemes", schemes)
        bits = tuple(sorted({check_bits(b) for b in self.bits}))
        if not bits:
            raise InvalidArgumentError("at least one bit budget is required")
        object.__setattr__(self, "bits", bits)
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.solver not in SOLVERS:
            raise InvalidArgumentError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.roundtrip_quantizer not in QUANTIZERS:
            raise InvalidArgumentError(f"roundtrip_quantizer must be one of {QUANTIZERS}")
        merged = _default_scheme_params(float(self.omega0), float(self.amp_bound))
        for scheme, values in dict(self.params).items():
            if scheme not in PARAM_KEYS or not isinstance(values, dict):
                raise InvalidArgumentError(f"bad parameter block for {scheme!r}")
            unknown = set(values) - set(PARAM_KEYS[scheme])
            if unknown:
                raise InvalidArgumentError(f"unknown {scheme} parameters: {sorted(unknown)}")
            merged[scheme].update({k: float(v) for k, v in values.items()})
        object.__setattr__(self, "params", merged)
        for scheme in self.schemes:
            self.scheme_params(scheme)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise InvalidArgumentError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InvalidArgumentError(f"bad config: {exc}") from None

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self):
        doc = asdict(self)
        doc["support"] = list(self.support)
        doc["schemes"] = list(self.schemes)
        doc["bits"] = list(self.bits)
        return doc

    def config_hash(self):
        doc = self.to_dict()
        doc.pop("out")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def scheme_params(self, scheme):
        base = default_params(scheme, self.omega0, self.amp_bound)
        return replace(base, **self.params[scheme])

    def eval_seeds(self):
        return [self.seed + i for i in range(self.n_eval)]

    def train_seeds(self):
        return [self.seed + TRAIN_OFFSET + i for i in range(self.n_train)]

    @property
    def nyquist_count(self):
        return (self.support[1] - self.support[0]) * self.omega0 / math.pi


def worker_count(env=None):
    """Thread count from ``TEMCODEC_THREADS`` (default: CPU count)."""
    env = os.environ if env is None else env
    raw = env.get(THREADS_ENV)
    if raw is None or raw == "":
        return max(1, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgumentError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InvalidArgumentError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


@dataclass(frozen=True)
class SignalScore:
    nmse_db: float
    n_firings: int
    residual: float
    iterations: int


class Experiment:
    """Shared state of one configuration: ensembles, encodings and the NMSE evaluator."""

    def __init__(self, config, threads=None):
        self.config = config
        self.threads = worker_count() if threads is None else int(threads)
        self.evaluator = NmseEvaluator(config.omega0, config.support, config.guard)
        self._signals = {}
        self._records = {}

    def map(self, fn, items):
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def signals(self, which):
        if which not in self._signals:
            seeds = self.config.eval_seeds() if which == "eval" else self.config.train_seeds()
            cfg = self.config
            self._signals[which] = self.map(
                lambda s: generate(SignalSpec(cfg.omega0, cfg.amp_bound, cfg.support, seed=s)), seeds)
        return self._signals[which]

    def encode_all(self, signals, scheme, codebook=None):
        params = self.config.scheme_params(scheme)
        t0, t1 = self.config.support
        return self.map(lambda s: encode(s, params, t0, t1, codebook=codebook), signals)

    def records(self, which, scheme):
        key = (which, scheme)
        if key not in self._records:
            self._records[key] = self.encode_all(self.signals(which), scheme)
        return self._records[key]

    def score(self, signal, record, params, codebook=None):
        """Quantize (optionally), replay, reconstruct and score one record."""
        cfg = self.config
        matched = cfg.mode == "matched" and codebook is not None
        if codebook is None:
            intervals, margin = record.intervals, 0.0
        else:
            intervals = dequantize(quantize(record.intervals, codebook), codebook)
            margin = matched_margin(params, codebook) if matched else 0.0
        clamp = matched or (cfg.decoder_clamp and codebook is not None)
        meas = decoder_replay(record.t_first, intervals, params, margin=margin, clamp=clamp)
        recon = ReconConfig.covering(meas.times, cfg.omega0, solver=cfg.solver, amp_bound=cfg.amp_bound)
        res = reconstruct(meas.times, meas.y, recon, return_result=True)
        return SignalScore(self.evaluator(signal, res.signal), record.n_firings, res.residual, res.iterations)

    def score_ensemble(self, which, scheme, codebook=None, limit=None):
        params = self.config.scheme_params(scheme)
        signals = self.signals(which)[:limit]
        if codebook is not None and self.config.mode == "matched":
            records = self.encode_all(signals, scheme, codebook)
        else:
            records = self.records(which, scheme)[:limit]
        return self.map(lambda sr: self.score(sr[0], sr[1], params, codebook), list(zip(signals, records)))

    def training_intervals(self, scheme):
        """Pooled training intervals, without each record's reset interval."""
        return np.concatenate([r.intervals[1:] for r in self.records("train", scheme)])

    def codebooks(self, scheme, bits):
        """UQ over the closed-form bounds and both trained NUQ designs."""
        params = self.config.scheme_params(scheme)
        t_lo, t_hi = interval_bounds(params)
        pooled = self.training_intervals(scheme)
        return {
            "uniform": uq_design(t_lo, t_hi, bits),
            "lloyd-max": lloyd_max_design(pooled, bits),
            "compander": compander_design(pooled, bits),
        }

    def select_nuq(self, scheme, bits):
        """NUQ choice by mean NMSE on the first ``n_select`` training signals."""
        n = self.config.n_select

        def evaluate(cb):
            return float(np.mean([s.nmse_db for s in self.score_ensemble("train", scheme, cb, limit=n)]))

        return select_best_nuq(self.training_intervals(scheme), evaluate, bits)


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render_csv(config, header, rows):
    """CSV text with a leading ``#`` comment naming config hash and seed."""
    buf = io.StringIO()
    buf.write(f"# config_hash={config.config_hash()} seed={config.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    return path


def _write_csv(config, name, header, rows):
    return write_text(Path(config.out) / name, render_csv(config, header, rows))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

BOUNDS_HEADER = ["scheme", "t_min_ms", "t_max_ms", "t_range_ms", "emp_min_ms", "emp_max_ms", "contained"]
COUNTS_HEADER = ["scheme", "mean_firings", "std_firings", "min_firings", "max_firings",
                 "nyquist_count", "mean_oversampling"]
DENSITY_HEADER = ["scheme", "signal", "spread_hz", "min_rate_hz", "max_rate_hz", "std_rate_hz"]
RD_HEADER = ["scheme", "quantizer", "codebook", "R", "mean_nmse_db", "std_nmse_db", "worst_nmse_db",
             "mean_firings"]


def bounds_rows(exp):
    rows = []
    for scheme in exp.config.schemes:
        t_lo, t_hi = interval_bounds(exp.config.scheme_params(scheme))
        # the first interval follows the reset at t_start, not a firing
        inner = np.concatenate([r.intervals[1:] for r in exp.records("eval", scheme)])
        e_lo, e_hi = float(inner.min()), float(inner.max())
        ok = e_lo >= t_lo - 1e-9 and e_hi <= t_hi + 1e-9
        rows.append([scheme, 1e3 * t_lo, 1e3 * t_hi, 1e3 * (t_hi - t_lo), 1e3 * e_lo, 1e3 * e_hi,
                     "yes" if ok else "no"])
    return rows


def counts_rows(exp):
    rows = []
    nyq = exp.config.nyquist_count
    for scheme in exp.config.schemes:
        n = np.array([r.n_firings for r in exp.records("eval", scheme)], dtype=float)
        rows.append([scheme, float(n.mean()), float(n.std()), int(n.min()), int(n.max()),
                     round(nyq, 9), float(np.mean(n / nyq))])
    return rows


def density_rows(exp):
    rows = []
    for scheme in exp.config.schemes:
        per = []
        for seed, rec in zip(exp.config.eval_seeds(), exp.records("eval", scheme)):
            d = firing_density(rec, skip_first=True)
            per.append((d.spread, d.min, d.max, float(np.std(d.rates))))
            rows.append([scheme, seed, *per[-1]])
        rows.append([scheme, "mean", *[float(v) for v in np.mean(per, axis=0)]])
    return rows


def _summary(scheme, quantizer, kind, bits, scores):
    nmse = np.array([s.nmse_db for s in scores])
    firings = np.array([s.n_firings for s in scores], dtype=float)
    return [scheme, quantizer, kind, "" if bits is None else bits, float(nmse.mean()), float(nmse.std()),
            float(nmse.max()), float(firings.mean())]


def rd_rows(exp):
    rows = []
    for scheme in exp.config.schemes:
        rows.append(_summary(scheme, "none", "none", None, exp.score_ensemble("eval", scheme)))
        for bits in exp.config.bits:
            books = exp.codebooks(scheme, bits)
            best, _ = exp.select_nuq(scheme, bits)
            by_kind = {}
            for kind in QUANTIZERS:
                by_kind[kind] = _summary(scheme, kind, kind, bits,
                                         exp.score_ensemble("eval", scheme, books[kind]))
                rows.append(by_kind[kind])
            nuq = list(by_kind[best.kind])
            nuq[1] = "nuq"
            rows.append(nuq)
    return rows


def cmd_bounds(config, threads=None, experiment=None):
    exp = experiment or Experiment(config, threads)
    return _write_csv(config, "bounds.csv", BOUNDS_HEADER, bounds_rows(exp))


def cmd_counts(config, threads=None, experiment=None):
    exp = experiment or Experiment(config, threads)
    return _write_csv(config, "counts.csv", COUNTS_HEADER, counts_rows(exp))


def cmd_density(config, threads=None, experiment=None):
    exp = experiment or Experiment(config, threads)
    return _write_csv(config, "density.csv", DENSITY_HEADER, density_rows(exp))


def cmd_rate_distortion(config, threads=None, experiment=None):
    exp = experiment or Experiment(config, threads)
    return _write_csv(config, "rd.csv", RD_HEADER, rd_rows(exp))


def roundtrip_codebook(exp, scheme, bits):
    kind = exp.config.roundtrip_quantizer
    if kind == "uniform":
        t_lo, t_hi = interval_bounds(exp.config.scheme_params(scheme))
        return uq_design(t_lo, t_hi, bits)
    return exp.codebooks(scheme, bits)[kind]


def roundtrip(signal, config, scheme, bits=None, threads=None, experiment=None):
    """Encode, pack, unpack, replay and reconstruct one signal.

    Returns ``(stream_bytes, reconstruction, metrics)``.
    """
    if not isinstance(signal, BandlimitedSignal):
        raise InvalidArgumentError("signal must be a BandlimitedSignal")
    exp = experiment or Experiment(config, threads)
    bits = config.bits[-1] if bits is None else check_bits(bits)
    params = config.scheme_params(scheme)
    t0, t1 = config.support
    codebook = roundtrip_codebook(exp, scheme, bits)
    matched = config.mode == "matched"
    record = encode(signal, params, t0, t1, codebook=codebook if matched else None)
    data = pack(record, codebook, params)
    clamp = matched or config.decoder_clamp
    _, meas = decode_stream(data, mode=config.mode, clamp=clamp)
    recon_cfg = ReconConfig.covering(meas.times, config.omega0, solver=config.solver, amp_bound=config.amp_bound)
    res = reconstruct(meas.times, meas.y, recon_cfg, return_result=True)
    evaluator = NmseEvaluator(config.omega0, config.support, config.guard)
    clean = exp.score(signal, record, params) if not matched else None
    metrics = {
        "nmse_db": evaluator(signal, res.signal),
        "n_firings": record.n_firings,
        "residual": res.residual,
        "solver": config.solver,
        "iterations": res.iterations,
        "scheme": scheme,
        "bits": bits,
        "quantizer": codebook.kind,
        "mode": config.mode,
        "unquantized_nmse_db": None if clean is None else clean.nmse_db,
    }
    return data, res.signal, metrics


def cmd_roundtrip(config, signal=None, threads=None, experiment=None):
    """Write ``roundtrip_<scheme>.tem1``, its metrics and the reconstruction per scheme.

    Without ``signal`` the first evaluation signal is used.
    """
    exp = experiment or Experiment(config, threads)
    if signal is None:
        signal = exp.signals("eval")[0]
    out = Path(config.out)
    paths = []
    for scheme in config.schemes:
        data, recon, metrics = roundtrip(signal, config, scheme, experiment=exp)
        out.mkdir(parents=True, exist_ok=True)
        stream_path = out / f"roundtrip_{scheme}.tem1"
        stream_path.write_bytes(data)
        write_text(out / f"roundtrip_{scheme}_metrics.json", json.dumps(metrics, sort_keys=True, indent=2) + "\n")
        write_text(out / f"roundtrip_{scheme}_signal.json", recon.to_json() + "\n")
        paths.append(stream_path)
    return paths


COMMANDS = {
    "bounds": cmd_bounds,
    "counts": cmd_counts,
    "density": cmd_density,
    "rd": cmd_rate_distortion,
    "roundtrip": cmd_roundtrip,
}
