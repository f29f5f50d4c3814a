"""Command-line front end.

    link-enhancer run      [--config FILE] [--set key=value ...] [shortcuts]
    link-enhancer analyze  {cer_table,pe_curves} [--ber ...] [--t ...]
    link-enhancer filter   {encode,decode,channel} < in > out
    link-enhancer traffic  > cells.bin
    link-enhancer verify   < cells.bin

Exit status is 0 unless a run breaks one of its own bookkeeping invariants
(2) or the configuration is invalid (1).  A bad link is not an error.
"""
from __future__ import annotations

import argparse
import sys
from contextlib import contextmanager

import numpy as np

from . import analysis
from .channel import Channel
from .config import ConfigError, RunConfig, load_config
from .measurement import CELL_BYTES, CbrGenerator, LinkMetrics, StreamVerifier
from .pipeline import DuplexResult, LinkDecoder, LinkEncoder, LinkResult, idle_cells, run_duplex, run_link

READ_CHUNK = 1 << 16


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


@contextmanager
def _open_out(path: str, binary: bool = False):
    if path in ("-", ""):
        yield sys.stdout.buffer if binary else sys.stdout
    else:
        with open(path, "wb" if binary else "w") as fh:
            yield fh


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", help="channel seed")
    p.add_argument("--ber", help="BSC bit error probability")
    p.add_argument("--cells", help="number of test cells")
    p.add_argument("--duration", help="seconds of line time (ignored when --cells is given)")
    p.add_argument("--utilization", help="test-cell share of cell slots")
    p.add_argument("-o", "--output", help="metrics CSV path, '-' for stdout")


def _config_from_args(args, extra: dict[str, str] | None = None) -> RunConfig:
    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    shortcuts = {"seed": "channel.seed", "ber": "channel.p_e", "cells": "traffic.cells",
                 "duration": "traffic.duration", "utilization": "traffic.utilization",
                 "output": "io.output"}
    for attr, key in shortcuts.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    overrides.update(extra or {})
    return load_config(args.config, overrides)


def check_invariants(result: LinkResult, frame_bytes: int = 259) -> list[str]:
    m = result.metrics
    problems = []
    if m.good + m.errored + m.misinserted != m.total_rx:
        problems.append("good + errored + misinserted != total_rx")
    if m.good + m.lost > m.total_tx:
        problems.append("good + lost exceeds total_tx")
    for name in ("cer", "clr", "secbr"):
        if not 0.0 <= getattr(m, name) <= 1.0:
            problems.append(f"{name} outside [0, 1]")
    frame = 0 if result.encoder is None else -(-frame_bytes // CELL_BYTES) + 1
    if abs(result.cells_in - result.cells_out) > frame:
        problems.append(f"cell count drift {result.cells_in} in vs {result.cells_out} out")
    return problems


def _emit_metrics(rows: list[tuple[str, LinkMetrics]], cfg: RunConfig) -> None:
    with _open_out(cfg.io.output) as fh:
        header = ["direction"] + LinkMetrics.csv_header()
        fh.write(",".join(header) + "\n")
        for label, m in rows:
            fh.write(",".join([label] + [repr(v) if isinstance(v, float) else str(v) for v in m.csv_row()]) + "\n")
    if cfg.io.summary:
        out = sys.stderr if cfg.io.output in ("-", "") else sys.stdout
        for label, m in rows:
            print(f"[{label}]", file=out)
            print(m.summary(), file=out)


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    kwargs = cfg.run_kwargs()
    if cfg.mode == "duplex":
        res: DuplexResult = run_duplex(cfg.traffic, cfg.traffic, cfg.channel, cfg.reverse_channel,
                                       parallel=cfg.parallel, mode="enhanced", **kwargs)
        results = [("a_to_b", res.a_to_b), ("b_to_a", res.b_to_a)]
    else:
        results = [(cfg.mode, run_link(cfg.traffic, cfg.channel, mode=cfg.mode, **kwargs))]
    _emit_metrics([(label, r.metrics) for label, r in results], cfg)
    frame_bytes = 4 + cfg.rs.n
    problems = [f"{label}: {p}" for label, r in results for p in check_invariants(r, frame_bytes)]
    for p in problems:
        print(f"invariant violated: {p}", file=sys.stderr)
    return 2 if problems else 0


def cmd_analyze(args) -> int:
    if args.kind == "cer_table":
        bers = _floats(args.ber) if args.ber else [1e-3, 1e-8]
        text = analysis.cer_csv(analysis.cer_table(bers))
    else:
        bers = _floats(args.ber) if args.ber else list(analysis.DEFAULT_BER_GRID)
        ts = _ints(args.t) if args.t else list(analysis.DEFAULT_T_SWEEP)
        rows = analysis.redundancy_curves(bers, ts, args.m, args.conversion)
        text = analysis.curves_csv(rows)
    with _open_out(args.output or "-") as fh:
        fh.write(text)
    return 0


def _read_chunks(stream):
    while True:
        chunk = stream.read(READ_CHUNK)
        if not chunk:
            return
        yield chunk


def cmd_filter(args) -> int:
    cfg = _config_from_args(args)
    src = sys.stdin.buffer if args.input in (None, "-") else open(args.input, "rb")
    dst_path = args.out or "-"
    total_in = 0
    with _open_out(dst_path, binary=True) as dst:
        if args.stage == "channel":
            chan = Channel(cfg.channel)
            for chunk in _read_chunks(src):
                total_in += len(chunk)
                dst.write(chan.corrupt(chunk))
            print(f"channel: {total_in} bytes, {chan.flips} bit flips", file=sys.stderr)
        elif args.stage == "encode":
            enc = LinkEncoder(cfg.rs.params(), cfg.fifo_depth)
            for chunk in _read_chunks(src):
                total_in += len(chunk)
                dst.write(enc.push(chunk).tobytes())
            partial = enc.delineator.state.buf.size - enc.delineator.state.pos
            if not args.no_flush:
                dst.write(enc.flush().tobytes())
            c = enc.counters
            print(f"encode: {total_in} bytes in, {c.frames_emitted} frames, {c.assigned_accepted} cells, "
                  f"{c.assigned_dropped_overflow} overflow drops, {partial} trailing bytes unframed",
                  file=sys.stderr)
        else:
            s = cfg.sync
            dec = LinkDecoder(cfg.rs.params(), s.h_tol, s.m_confirm, s.l_loss)
            for chunk in _read_chunks(src):
                total_in += len(chunk)
                dst.write(dec.push(chunk).tobytes())
            c = dec.counters
            partial = dec.sync.state.buf.size
            print(f"decode: {total_in} bytes in, {c.blocks_ok} blocks ok, {c.blocks_failed} failed, "
                  f"{c.symbols_corrected} symbols corrected, {partial} trailing bytes unsynced",
                  file=sys.stderr)
    if src is not sys.stdin.buffer:
        src.close()
    return 0


def cmd_traffic(args) -> int:
    cfg = _config_from_args(args)
    gen = CbrGenerator(cfg.traffic)
    with _open_out(args.out or "-", binary=True) as dst:
        for block in gen.chunks():
            dst.write(block.tobytes())
        if cfg.drain_slots:
            dst.write(idle_cells(cfg.drain_slots).tobytes())
    print(f"traffic: {gen.total_slots} slots, {gen.test_cells} test cells", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    cfg = _config_from_args(args)
    v = StreamVerifier(cfg.traffic, block_size=cfg.metrics.block_size,
                       secb_threshold=cfg.metrics.secb_threshold)
    src = sys.stdin.buffer if args.input in (None, "-") else open(args.input, "rb")
    for chunk in _read_chunks(src):
        v.push_bytes(np.frombuffer(chunk, dtype=np.uint8))
    if src is not sys.stdin.buffer:
        src.close()
    _emit_metrics([("verify", v.finish())], cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="link-enhancer", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a link and report cell-level metrics")
    _add_config_args(p)
    p.add_argument("--mode", choices=("baseline", "enhanced", "duplex"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="closed-form tables as CSV")
    p.add_argument("kind", choices=("cer_table", "pe_curves"))
    p.add_argument("--ber", help="comma or space separated input BERs")
    p.add_argument("--t", help="comma or space separated correction capabilities")
    p.add_argument("--m", type=int, default=8, help="bits per symbol")
    p.add_argument("--conversion", choices=analysis.CONVERSIONS, default="inverse")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("filter", help="one pipeline stage from stdin to stdout")
    p.add_argument("stage", choices=("encode", "decode", "channel"))
    _add_config_args(p)
    p.add_argument("--input", help="input file instead of stdin")
    p.add_argument("--out", help="output file instead of stdout")
    p.add_argument("--no-flush", action="store_true", help="encode: do not frame queued cells at EOF")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("traffic", help="write the CBR test-cell stream")
    _add_config_args(p)
    p.add_argument("--out", help="output file instead of stdout")
    p.set_defaults(func=cmd_traffic)

    p = sub.add_parser("verify", help="measure a received cell stream")
    _add_config_args(p)
    p.add_argument("--input", help="input file instead of stdin")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
