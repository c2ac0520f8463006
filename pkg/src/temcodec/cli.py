"""Command-line entry point: ``temcodec {bounds,counts,density,rd,roundtrip}``.

Exit codes: 0 on success, 2 on a configuration error, 3 when the pipeline
fails.  ``TEMCODEC_THREADS`` caps the worker count.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace

from .exceptions import FormatError, InvalidArgumentError, TemCodecError
from .experiments import COMMANDS, ExperimentConfig, worker_count
from .signal import BandlimitedSignal

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3

log = logging.getLogger("temcodec")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser():
    # argparse exits with 2 on usage errors, which doubles as the config-error code
    parser = argparse.ArgumentParser(prog="temcodec", description="Time-encoding codec experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--scheme", type=_str_list, help="scheme or comma-separated schemes (lb, vb, conv)")
        p.add_argument("--bits", type=_int_list, help="bit budget(s), comma-separated")
        if name == "roundtrip":
            p.add_argument("signal", nargs="?", help="signal JSON; defaults to the first evaluation signal")
    return parser


def load_config(args):
    doc = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read config {args.config}: {exc}") from None
    config = ExperimentConfig.from_dict(doc)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.scheme:
        overrides["schemes"] = tuple(args.scheme)
    if args.bits:
        overrides["bits"] = tuple(args.bits)
    return replace(config, **overrides) if overrides else config


def load_signal(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return BandlimitedSignal.from_json(fh.read())
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read signal {path}: {exc}") from None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        config = load_config(args)
        threads = worker_count()
        signal = None
        if args.command == "roundtrip" and args.signal:
            signal = load_signal(args.signal)
    except (InvalidArgumentError, FormatError) as exc:
        print(f"temcodec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    log.info("%s: config %s, %d thread(s)", args.command, config.config_hash(), threads)
    try:
        if args.command == "roundtrip":
            paths = COMMANDS["roundtrip"](config, signal, threads=threads)
        else:
            paths = [COMMANDS[args.command](config, threads=threads)]
    except (TemCodecError, ArithmeticError, ValueError) as exc:
        print(f"temcodec: pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
