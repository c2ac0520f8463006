"""Integrate-and-fire time encoding of bandlimited signals, with quantized intervals."""

from .codec import Bitstream, decode_stream, decoder_replay, pack, unpack
from .encoders import (
    ConstParams,
    FiringRecord,
    LbParams,
    TimeEncoder,
    VbParams,
    default_params,
    encode,
    firing_density,
    interval_bounds,
    lb_design,
)
from .exceptions import (
    DegenerateSystemError,
    FormatError,
    InfeasibleBiasError,
    InvalidArgumentError,
    TemCodecError,
)
from .quantization import (
    Codebook,
    CompanderQuantizer,
    LloydMaxQuantizer,
    UniformQuantizer,
    compander_design,
    dequantize,
    lloyd_max_design,
    quantize,
    uq_design,
)
from .reconstruction import BandlimitedReconstructor, ReconConfig, nmse, reconstruct
from .signal import BandlimitedSignal, SignalSpec, evaluate, generate, integrate, peak

__version__ = "0.1.0"

__all__ = [
    "BandlimitedReconstructor", "BandlimitedSignal", "Bitstream", "Codebook", "CompanderQuantizer",
    "ConstParams", "DegenerateSystemError", "FiringRecord", "FormatError", "InfeasibleBiasError",
    "InvalidArgumentError", "LbParams", "LloydMaxQuantizer", "ReconConfig", "SignalSpec", "TemCodecError",
    "TimeEncoder", "UniformQuantizer", "VbParams", "compander_design", "decode_stream", "decoder_replay", "default_params",
    "dequantize", "encode", "evaluate", "firing_density", "generate", "integrate", "interval_bounds",
    "lb_design", "lloyd_max_design", "nmse", "pack", "peak", "quantize", "reconstruct", "unpack",
    "uq_design",
]
