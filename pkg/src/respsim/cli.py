"""Command-line harness: simulate, stream, decode, analyze, power.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error
(missing file, refused connection), 3 protocol corruption beyond recovery
(the input had bytes but not a single decodable frame).
"""

from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
import time

from . import pipeline
from .config import ConfigError, SessionConfig, apply_overrides, load_config
from .firmware import ConstantStimulus, FirmwareEmulator, InvalidConfigError
from .power import PRESETS, accumulate
from .protocol import FrameKind, split_stream
from .sensor import ParameterError
from .session import run_session, write_capture

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_CORRUPT = 3


class _Parser(argparse.ArgumentParser):
    """argparse's default error exit is 2; keep that for I/O and use 1 here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="session config file (YAML)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--duration", type=float, default=None, metavar="SECONDS",
                        help="override the session duration")

    parser = _Parser(
        prog="respsim",
        description="Software twin of a wearable respiratory motion sensor.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common],
                       help="run a session and write raw frames + truth sidecar")
    p.add_argument("--out", required=True, metavar="PATH", help="capture file to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stream", parents=[common],
                       help="replay a session over TCP, or capture one")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--connect", metavar="HOST:PORT",
                      help="simulate and send frames to a receiver")
    mode.add_argument("--listen", metavar="HOST:PORT",
                      help="accept one sender and capture its bytes")
    p.add_argument("--speed", type=float, default=1.0,
                   help="realtime multiplier for --connect (default 1.0)")
    p.add_argument("--out", metavar="PATH", help="capture file for --listen")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("decode", help="print frames from a capture as JSON lines")
    p.add_argument("input", metavar="CAPTURE", help="raw frame byte stream")
    p.add_argument("--out", metavar="PATH", help="write JSON lines here instead of stdout")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("analyze", parents=[common],
                       help="run the host pipeline over a capture")
    p.add_argument("input", metavar="CAPTURE", help="raw frame byte stream")
    p.add_argument("--out", metavar="PATH", help="export per-sample rows here")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv",
                   help="export format for --out (default csv)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("power", parents=[common],
                       help="energy audit and battery-life projection")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="headline the projection under this power preset")
    p.add_argument("--out", metavar="PATH", help="also write the audit as JSON")
    p.set_defaults(func=cmd_power)
    return parser


def _load_session_config(args) -> SessionConfig:
    cfg = load_config(args.config) if args.config else SessionConfig()
    return apply_overrides(cfg, seed=args.seed, duration_s=args.duration)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_session_config(args)
    result = run_session(cfg)
    sidecar = write_capture(args.out, result)
    print(f"wrote {args.out}: {len(result.frames)} frames, {len(result.data)} bytes")
    print(f"truth sidecar: {sidecar}")
    return EXIT_OK


def _frame_emit_ms(frame, cfg: SessionConfig) -> int:
    """Millisecond instant the firmware would have sent this frame."""
    if frame.kind == FrameKind.FSR_BATCH:
        period = 1000 // cfg.firmware.fsr_rate_hz
        return frame.payload.t0_ms + (len(frame.payload.codes) - 1) * period
    if frame.kind == FrameKind.ACCEL_BATCH:
        period = 1000 // cfg.firmware.accel_rate_hz
        return frame.payload.t0_ms + (len(frame.payload.samples) - 1) * period
    return frame.payload.t_ms


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def cmd_stream(args) -> int:
    if args.speed <= 0:
        raise ConfigError(f"--speed must be positive, got {args.speed}")
    if args.connect:
        return _stream_connect(args)
    return _stream_listen(args)


def _stream_connect(args) -> int:
    cfg = _load_session_config(args)
    result = run_session(cfg)
    host, port = _parse_endpoint(args.connect)
    from .protocol import encode
    start = time.monotonic()
    sent = 0
    with socket.create_connection((host, port)) as sock:
        for frame in result.frames:
            due_s = _frame_emit_ms(frame, cfg) / 1000.0 / args.speed
            delay = due_s - (time.monotonic() - start)
            if delay > 0:
                time.sleep(delay)
            sock.sendall(encode(frame))
            sent += 1
    print(f"streamed {sent} frames ({len(result.data)} bytes) to {host}:{port}")
    return EXIT_OK


def _stream_listen(args) -> int:
    host, port = _parse_endpoint(args.listen)
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(1)
        bound = server.getsockname()
        print(f"listening on {bound[0]}:{bound[1]}", file=sys.stderr, flush=True)
        conn, peer = server.accept()
        chunks = []
        with conn:
            while True:
                chunk = conn.recv(65536)
                if not chunk:
                    break
                chunks.append(chunk)
    data = b"".join(chunks)
    if args.out:
        with open(args.out, "wb") as fp:
            fp.write(data)
    frames, resyncs, pending = split_stream(data)
    print(f"received {len(data)} bytes from {peer[0]}:{peer[1]}: "
          f"{len(frames)} frames, {len(resyncs)} resyncs, {pending} pending bytes")
    if data and not frames:
        return EXIT_CORRUPT
    return EXIT_OK


def _frame_to_dict(frame) -> dict:
    d = {
        "kind": frame.kind.name.lower(),
        "seq": frame.seq,
        "flags": frame.flags,
        "final_flush": frame.final_flush,
        "charging": frame.charging,
    }
    if frame.kind == FrameKind.FSR_BATCH:
        d["t0_ms"] = frame.payload.t0_ms
        d["codes"] = list(frame.payload.codes)
    elif frame.kind == FrameKind.ACCEL_BATCH:
        d["t0_ms"] = frame.payload.t0_ms
        d["samples"] = [list(s) for s in frame.payload.samples]
    else:
        d["t_ms"] = frame.payload.t_ms
        d["adc_code"] = frame.payload.adc_code
        d["percent"] = frame.payload.percent
    return d


def cmd_decode(args) -> int:
    with open(args.input, "rb") as fp:
        data = fp.read()
    frames, resyncs, pending = split_stream(data)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for frame in frames:
            out.write(json.dumps(_frame_to_dict(frame), sort_keys=True) + "\n")
    finally:
        if args.out:
            out.close()
    skipped = sum(ev.skipped for ev in resyncs)
    print(f"{len(frames)} frames, {len(resyncs)} resyncs "
          f"({skipped} bytes skipped), {pending} pending bytes",
          file=sys.stderr)
    if data and not frames:
        print("no decodable frames in input", file=sys.stderr)
        return EXIT_CORRUPT
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load_session_config(args)
    with open(args.input, "rb") as fp:
        data = fp.read()
    frames, resyncs, pending = split_stream(data)
    if data and not frames:
        print("no decodable frames in input", file=sys.stderr)
        return EXIT_CORRUPT
    ocv_volts = [v for _, v in cfg.battery.ocv_points]
    result = pipeline.analyze_session(
        frames,
        analysis=cfg.analysis,
        adc=cfg.adc,
        divider=cfg.divider,
        fsr=cfg.fsr,
        sense_ratio=cfg.battery.sense_ratio,
        v_min=min(ocv_volts),
        v_max=max(ocv_volts),
    )
    summary = pipeline.summarize(result)
    summary["resyncs"] = len(resyncs)
    summary["skipped_bytes"] = sum(ev.skipped for ev in resyncs)
    summary["pending_bytes"] = pending
    if args.out:
        rows = pipeline.export(result, args.out, args.format)
        summary["export"] = {"path": args.out, "format": args.format, "rows": rows}
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_power(args) -> int:
    cfg = _load_session_config(args)
    selected_name = args.preset or cfg.power.preset
    if args.preset:
        profile = PRESETS[args.preset]
    else:
        profile = cfg.power_profile()

    emulator = FirmwareEmulator(
        config=cfg.firmware,
        model=cfg.device_model(),
        power_profile=profile,
        initial_soc=cfg.battery.initial_soc,
        charging=cfg.battery.charging,
    )
    emulator.run(ConstantStimulus(), cfg.duration_s)
    timeline = emulator.activity_timeline

    reports = {}
    for name, preset in PRESETS.items():
        reports[name] = accumulate(
            preset, timeline,
            capacity_mah=cfg.battery.capacity_mah, nominal_v=cfg.battery.nominal_v,
        )
    if selected_name not in reports:
        reports[selected_name] = accumulate(
            profile, timeline,
            capacity_mah=cfg.battery.capacity_mah, nominal_v=cfg.battery.nominal_v,
        )
    selected = reports[selected_name]

    ms_by_state = selected.ms_by_state
    print(f"power audit over {selected.duration_s:.1f} s "
          f"(battery {cfg.battery.capacity_mah} mAh @ {cfg.battery.nominal_v} V)")
    print("activity: " + ", ".join(f"{k}={v} ms" for k, v in ms_by_state.items()))
    print()
    print(f"{'profile':<16} {'avg uW':>10} {'energy mWh':>12} {'battery life h':>15}")
    for name in sorted(reports):
        r = reports[name]
        marker = " *" if name == selected_name else ""
        print(f"{name:<16} {r.average_power_uw:>10.1f} {r.energy_mwh:>12.6f} "
              f"{r.projected_battery_life_h:>15.1f}{marker}")
    print()
    lo = PRESETS["abstract-claim"].p_active_uw
    hi = PRESETS["intro-claim"].p_active_uw
    life_lo = reports["intro-claim"].projected_battery_life_h
    life_hi = reports["abstract-claim"].projected_battery_life_h
    print(f"note: the device's two published power figures disagree by {hi / lo:.1f}x: "
          f"{lo:.0f} uW (abstract-claim) vs {hi:.0f} uW (intro-claim).")
    print(f"      battery life spans {life_lo:.0f} h to {life_hi:.0f} h depending on "
          f"which figure you believe.")

    if args.out:
        payload = {
            "duration_s": selected.duration_s,
            "ms_by_state": ms_by_state,
            "selected": selected_name,
            "reports": {
                name: {
                    "average_power_uw": r.average_power_uw,
                    "energy_mwh": r.energy_mwh,
                    "projected_battery_life_h": r.projected_battery_life_h,
                }
                for name, r in reports.items()
            },
            "claims_disagreement": {
                "low_uw": lo, "high_uw": hi, "ratio": hi / lo,
                "battery_life_h_low": life_lo, "battery_life_h_high": life_hi,
            },
        }
        with open(args.out, "w", encoding="utf-8") as fp:
            json.dump(payload, fp, indent=2, sort_keys=True)
            fp.write("\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, ParameterError, InvalidConfigError) as e:
        print(f"respsim: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"respsim: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"respsim: i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
