"""Bitstream serialization and decoder-side replay of the bias recursion.

Stream layout (big-endian)::

    magic      4 bytes   b"TEM1"
    scheme     u8        0 = conv, 1 = vb, 2 = lb
    params     f64 * k   (delta_c, b) | (delta_v,) | (delta, mu)
    omega0     f64
    c          f64
    t_first    f64
    R          u8
    count      u32       number of packed indices
    cb_len     u32       length of the embedded codebook JSON
    codebook   cb_len bytes, canonical JSON
    indices    ceil(count * R / 8) bytes, R bits each, MSB first, zero padded
"""

import struct
from dataclasses import dataclass

import numpy as np

from .encoders import (
    SCHEMES,
    BiasState,
    affine_integral,
    matched_margin,
    next_bias,
    params_from_header,
    running_average,
)
from .exceptions import FormatError, InvalidArgumentError
from .quantization import Codebook, dequantize, quantize
from .validation import check_1d

MAGIC = b"TEM1"
SCHEME_CODES = {"conv": 0, "vb": 1, "lb": 2}
N_PARAMS = {"conv": 2, "vb": 1, "lb": 2}
MODES = ("open-loop", "matched")


@dataclass(frozen=True)
class Bitstream:
    """Decoded contents of a ``.tem1`` stream."""

    indices: np.ndarray
    codebook: Codebook
    params: object
    t_first: float

    @property
    def scheme(self):
        return self.params.scheme


def pack_bits(indices, bits):
    """Pack unsigned integers into ``bits``-wide fields, MSB first."""
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= (1 << bits)):
        raise InvalidArgumentError(f"index does not fit in {bits} bits")
    shifts = np.arange(bits - 1, -1, -1)
    bit_matrix = ((idx[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bit_matrix.ravel()).tobytes()


def unpack_bits(data, bits, count):
    flat = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[: count * bits]
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    weights = (1 << np.arange(bits - 1, -1, -1)).astype(np.int64)
    return flat.reshape(count, bits).astype(np.int64) @ weights


def pack(record, codebook, params):
    """Quantize a firing record and serialize it.

    ``record`` may be a :class:`~temcodec.encoders.FiringRecord` or a pair
    ``(t_first, intervals)``.
    """
    if hasattr(record, "intervals"):
        t_first, intervals = record.t_first, record.intervals
    else:
        t_first, intervals = record
    intervals = check_1d(intervals, "intervals")
    idx = quantize(intervals, codebook)
    return pack_indices(idx, codebook, params, t_first)


def pack_indices(indices, codebook, params, t_first):
    scheme = params.scheme
    header = [MAGIC, struct.pack(">B", SCHEME_CODES[scheme])]
    header.append(struct.pack(f">{N_PARAMS[scheme]}d", *params.header_values()))
    header.append(struct.pack(">ddd", params.omega0, params.amp_bound, float(t_first)))
    idx = np.asarray(indices, dtype=np.int64).ravel()
    cb = codebook.to_json().encode("ascii")
    header.append(struct.pack(">BII", codebook.bits, idx.size, len(cb)))
    header.append(cb)
    header.append(pack_bits(idx, codebook.bits))
    return b"".join(header)


def _take(data, offset, n, what):
    if offset + n > len(data):
        raise FormatError(f"truncated stream while reading {what}: need {n} bytes, have {len(data) - offset}",
                          offset)
    return data[offset:offset + n], offset + n


def unpack(data):
    """Parse a stream produced by :func:`pack`.

    Returns
    -------
    Bitstream
        Indices, codebook, scheme parameters and ``t_first``.
    """
    data = bytes(data)
    raw, off = _take(data, 0, 4, "magic")
    if raw != MAGIC:
        raise FormatError(f"bad magic {raw!r}", 0)
    raw, off = _take(data, off, 1, "scheme tag")
    code = raw[0]
    names = {v: k for k, v in SCHEME_CODES.items()}
    if code not in names:
        raise FormatError(f"unknown scheme tag {code}", off - 1)
    scheme = names[code]
    k = N_PARAMS[scheme]
    raw, off = _take(data, off, 8 * k, "scheme parameters")
    values = struct.unpack(f">{k}d", raw)
    raw, off = _take(data, off, 24, "omega0, c, t_first")
    omega0, c, t_first = struct.unpack(">ddd", raw)
    params_at = off - 8 * k - 24
    try:
        params = params_from_header(scheme, values, omega0, c)
    except InvalidArgumentError as exc:
        raise FormatError(f"invalid header parameters: {exc}", params_at) from None
    raw, off = _take(data, off, 9, "R, count, codebook length")
    bits, count, cb_len = struct.unpack(">BII", raw)
    cb_at = off
    raw, off = _take(data, off, cb_len, "codebook")
    codebook = Codebook.from_json(raw)
    if codebook.bits != bits:
        raise FormatError(f"header R={bits} disagrees with codebook R={codebook.bits}", cb_at)
    n_bits = count * bits
    n_bytes = (n_bits + 7) // 8
    have = len(data) - off
    if have < n_bytes:
        raise FormatError(f"truncated index section: expected {n_bits} bits, found {8 * have}", off)
    if have > n_bytes:
        raise FormatError(f"count mismatch: {have - n_bytes} trailing bytes after {count} indices",
                          off + n_bytes)
    indices = unpack_bits(data[off:], bits, count)
    return Bitstream(indices=indices, codebook=codebook, params=params, t_first=t_first)


@dataclass(frozen=True)
class Measurements:
    """Firing times seen by the decoder and the signal integrals between them."""

    times: np.ndarray
    y: np.ndarray
    fhat: np.ndarray = None


def decoder_replay(t_first, intervals, params, margin=0.0, clamp=False):
    """Rebuild firing times and interval integrals from (quantized) intervals.

    The bias of every interval is replayed from decoder-visible quantities
    only, then ``y_n = delta - int b_n``.  ``margin`` is the bias inflation
    of the matched quantization-state mode (see
    :func:`~temcodec.encoders.matched_margin`).
    """
    if params.scheme not in SCHEMES:
        raise InvalidArgumentError(f"unknown scheme {params.scheme!r}")
    intervals = check_1d(intervals, "intervals")
    bad = np.flatnonzero(intervals <= 0)
    if bad.size:
        raise FormatError(f"non-positive replayed interval at index {int(bad[0])}")
    delta = params.threshold
    y = np.empty(intervals.size)
    fhat = np.empty(intervals.size)
    state = None
    for n, t_len in enumerate(intervals):
        slope, offset = next_bias(params, state, margin)
        bias_int = affine_integral(slope, offset, float(t_len))
        y[n] = delta - bias_int
        fhat[n] = running_average(delta, t_len, bias_int)
        if clamp:
            fhat[n] = min(max(fhat[n], -params.amp_bound), params.amp_bound)
        state = BiasState(fhat[n], float(t_len))
    times = float(t_first) + np.concatenate(([0.0], np.cumsum(intervals)))
    return Measurements(times=times, y=y, fhat=fhat)


def decode_stream(data, mode="open-loop", clamp=None):
    """Unpack a stream and replay it into measurements.

    ``mode`` must match the encoder's quantization-state mode.  ``clamp``
    limits replayed running averages to ``[-c, c]``; it defaults to on for
    the matched mode (where the encoder clamps too) and off otherwise.
    """
    if mode not in MODES:
        raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    stream = unpack(data)
    intervals = dequantize(stream.indices, stream.codebook)
    matched = mode == "matched"
    margin = matched_margin(stream.params, stream.codebook) if matched else 0.0
    clamp = matched if clamp is None else bool(clamp)
    return stream, decoder_replay(stream.t_first, intervals, stream.params, margin=margin, clamp=clamp)
