"""Command-line front end: decode captures, analyze sessions, scan firmware,
synthesize test traces.

Exit codes form a stable contract: 0 success, 1 fatal error, 2 partial result
or empty input, 3 scan found no match.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from datetime import datetime, timezone
from typing import Sequence

from . import adv_analytics, capture_io, fw_sigscan, hci_codec
from .capture_io import CaptureFileInfo, CaptureFormat, CaptureRecord
from .errors import (
    BadMagic,
    BleadvError,
    CaptureError,
    UnsupportedDatalink,
    UnsupportedVersion,
)
from .hci_codec import AdvReport, DecodeMode

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2
EXIT_NO_MATCH = 3


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    with open(path, "rb") as handle:
        return handle.read()


def _load_records(
    data: bytes, input_format: str | None, strict: bool
) -> tuple[list[CaptureRecord], list[str], list[str]]:
    """Read all records as (records, error notes, informational notes).

    In non-strict mode a record-level framing error ends the file early and
    becomes an error note instead of an exception; informational notes
    (skipped pklg log records) never affect the exit code."""
    if input_format is None:
        detected = capture_io.detect_format(data[:16])
        if detected is None:
            raise CaptureError(
                "cannot detect capture format (use --input-format, H4 is never auto-detected)"
            )
        input_format = detected.value

    stream = io.BytesIO(data)
    info = None
    if input_format == "btsnoop":
        iterator = capture_io.iter_btsnoop(stream)
    elif input_format == "pklg":
        info = CaptureFileInfo(format=CaptureFormat.PKLG, datalink_or_version=0)
        iterator = capture_io.iter_pklg(stream, info)
    elif input_format == "h4":
        iterator = capture_io.stream_h4(stream)
    else:
        raise ValueError(f"unknown input format {input_format!r}")

    records: list[CaptureRecord] = []
    errors: list[str] = []
    infos: list[str] = []
    try:
        for record in iterator:
            records.append(record)
    except (BadMagic, UnsupportedVersion, UnsupportedDatalink):
        # Header-level problems mean the whole file is unreadable, not just
        # one record; always fatal.
        raise
    except CaptureError as exc:
        if strict:
            raise
        errors.append(f"stopped early: {exc}")
    if info is not None:
        info.record_count = len(records)
        # Expected non-HCI content, counted but not an error.
        if info.skipped_log_records:
            infos.append(f"skipped {info.skipped_log_records} pklg log record(s)")
        if info.skipped_unknown_records:
            infos.append(
                f"skipped {info.skipped_unknown_records} pklg record(s) with unknown type"
            )
    return records, errors, infos


def _format_timestamp(timestamp_us: int) -> str:
    moment = datetime.fromtimestamp(timestamp_us // 1_000_000, tz=timezone.utc)
    return moment.strftime("%Y-%m-%d %H:%M:%S") + f".{timestamp_us % 1_000_000:06d}"


def _report_tx_power(report: AdvReport) -> int | None:
    try:
        return hci_codec.extract_tx_power(hci_codec.parse_adv_data(report.adv_data))
    except BleadvError:
        return None


def _render_report_pretty(timestamp_us: int, report: AdvReport) -> str:
    return (
        f"{_format_timestamp(timestamp_us)} LE Advertising Report - "
        f"{hci_codec.address_type_name(report.address_type)} - {report.address_str()} - "
        f"{report.event_type.describe()} - RSSI: {report.rssi_dbm} dBm"
    )


def _report_record(timestamp_us: int, report: AdvReport) -> dict:
    event_type = report.event_type
    return {
        "timestamp_us": timestamp_us,
        "address": report.address_str(),
        "address_type": report.address_type,
        "address_type_name": hci_codec.address_type_name(report.address_type),
        "event_type_raw": event_type.raw,
        "pdu_type": event_type.pdu_type,
        "pdu": event_type.pdu_name,
        "channel_index": event_type.channel_index,
        "channel": event_type.ble_channel(),
        "antenna": event_type.antenna,
        "scan_mode": event_type.scan_mode,
        "raw_nonstandard": event_type.raw_nonstandard,
        "rssi_dbm": report.rssi_dbm,
        "adv_data": report.adv_data.hex(),
        "tx_power_dbm": _report_tx_power(report),
    }


def _decode_mode(args) -> DecodeMode:
    return DecodeMode.ENHANCED if args.enhanced else DecodeMode.STANDARD


def cmd_decode(args) -> int:
    data = _read_input(args.input)
    records, errors, infos = _load_records(data, args.input_format, args.strict)
    reports, failures = adv_analytics.collect_adv_reports(records, _decode_mode(args))
    if args.strict and failures:
        print(f"error: {failures[0]}", file=sys.stderr)
        return EXIT_FATAL

    for timestamp_us, report in reports:
        if args.format == "structured":
            print(json.dumps(_report_record(timestamp_us, report)))
        else:
            print(_render_report_pretty(timestamp_us, report))

    skipped = errors + failures
    for note in skipped + infos:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_PARTIAL if skipped else EXIT_OK


def _render_analysis_pretty(
    stats: adv_analytics.SessionStats,
    decision: adv_analytics.BlacklistDecision,
    path_loss: adv_analytics.PathLossParams,
    blacklist_params: adv_analytics.BlacklistParams,
) -> list[str]:
    lines = [
        f"Session: {stats.total_reports} report(s) from {len(stats.devices)} device(s)"
    ]
    for cell in stats.cells():
        channel = "unmapped" if cell.channel is None else f"channel {cell.channel}"
        lines.append(
            f"  {cell.address} {channel}: count {cell.count} "
            f"mean {cell.mean:.1f} median {cell.median:.1f} stddev {cell.stddev:.1f} dBm"
        )

    if decision.channels:
        listed = ", ".join(str(ch) for ch in sorted(decision.channels))
    else:
        listed = "none"
    lines.append(
        f"Blacklisted channels: {listed} "
        f"(threshold {blacklist_params.deviation_threshold_db:g} dB, "
        f"min samples {blacklist_params.min_samples_per_channel})"
    )
    for ev in decision.evidence:
        median = "-" if ev.median is None else f"{ev.median:.1f}"
        margin = "-" if ev.margin_db is None else f"{ev.margin_db:.1f}"
        mark = "  [blacklisted]" if ev.blacklisted else ""
        lines.append(
            f"  channel {ev.channel}: count {ev.count} median {median} dBm "
            f"margin {margin} dB{mark}"
        )
    for channel in sorted(decision.channels):
        culprits = [
            str(w) for w in sorted(adv_analytics.WIFI_CENTER_MHZ)
            if channel in adv_analytics.wifi_overlap(w)
        ]
        if culprits:
            lines.append(
                f"  channel {channel} overlaps Wi-Fi channel(s): {', '.join(culprits)}"
            )

    lines.append(
        f"Distance estimates (reference {path_loss.reference_rssi_at_1m:g} dBm at 1 m, "
        f"exponent {path_loss.path_loss_exponent:g}):"
    )
    for address in sorted(stats.devices):
        try:
            aware = adv_analytics.channel_aware_estimate(
                stats, address, path_loss, decision.channels
            )
            naive = adv_analytics.channel_aware_estimate(stats, address, path_loss)
        except BleadvError:
            lines.append(f"  {address}: no usable samples")
            continue
        used = ",".join(str(ch) for ch in sorted(aware.used_channels))
        lines.append(
            f"  {address}: channel-aware {aware.distance_m:.2f} m "
            f"(channels {used}, {aware.sample_count} samples), "
            f"naive {naive.distance_m:.2f} m ({naive.sample_count} samples)"
        )
    return lines


def _analysis_records(
    stats: adv_analytics.SessionStats,
    decision: adv_analytics.BlacklistDecision,
    path_loss: adv_analytics.PathLossParams,
) -> list[dict]:
    out: list[dict] = []
    for cell in stats.cells():
        out.append({"type": "cell", **cell.as_dict()})
    out.append(
        {
            "type": "blacklist",
            "channels": sorted(decision.channels),
            "evidence": [ev.as_dict() for ev in decision.evidence],
        }
    )
    for address in sorted(stats.devices):
        try:
            aware = adv_analytics.channel_aware_estimate(
                stats, address, path_loss, decision.channels
            )
            naive = adv_analytics.channel_aware_estimate(stats, address, path_loss)
        except BleadvError:
            out.append({"type": "estimate", "address": address, "error": "no usable samples"})
            continue
        out.append(
            {
                "type": "estimate",
                "address": address,
                "distance_m": aware.distance_m,
                "used_channels": sorted(aware.used_channels),
                "sample_count": aware.sample_count,
                "naive_distance_m": naive.distance_m,
                "naive_sample_count": naive.sample_count,
            }
        )
    return out


def cmd_analyze(args) -> int:
    data = _read_input(args.input)
    records, errors, infos = _load_records(data, args.input_format, args.strict)
    reports, failures = adv_analytics.collect_adv_reports(records, _decode_mode(args))
    if args.strict and failures:
        print(f"error: {failures[0]}", file=sys.stderr)
        return EXIT_FATAL
    skipped = errors + failures
    for note in skipped + infos:
        print(f"note: {note}", file=sys.stderr)

    if not reports:
        print("note: no advertising reports in input", file=sys.stderr)
        return EXIT_PARTIAL

    stats = adv_analytics.SessionStats()
    for timestamp_us, report in reports:
        stats.ingest(report, timestamp_us)

    blacklist_params = adv_analytics.BlacklistParams(
        min_samples_per_channel=args.min_samples,
        deviation_threshold_db=args.threshold_db,
    )
    path_loss = adv_analytics.PathLossParams(
        reference_rssi_at_1m=args.ref_rssi, path_loss_exponent=args.exponent
    )
    decision = adv_analytics.detect_interference(stats, blacklist_params)

    if args.format == "structured":
        for record in _analysis_records(stats, decision, path_loss):
            print(json.dumps(record))
    else:
        for line in _render_analysis_pretty(stats, decision, path_loss, blacklist_params):
            print(line)
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_scan(args) -> int:
    image = _read_input(args.image)
    if args.signatures:
        with open(args.signatures, "r", encoding="utf-8") as handle:
            signatures = fw_sigscan.load_signatures(handle.read())
    else:
        signatures = fw_sigscan.builtin_signatures()

    matches = fw_sigscan.scan_signatures(image, signatures)
    for match in matches:
        if args.format == "structured":
            print(
                json.dumps(
                    {
                        "type": "match",
                        "name": match.signature_name,
                        "offset": f"0x{match.offset:08x}",
                        "context": match.surrounding.hex(),
                    }
                )
            )
        else:
            print(fw_sigscan.format_match(match))

    if args.patch_address is not None:
        patch = fw_sigscan.make_flag_patch(args.patch_address)
        if args.format == "structured":
            print(
                json.dumps(
                    {
                        "type": "patch",
                        "address": f"{patch.address:08x}",
                        "bytes": patch.patch_bytes.hex(),
                        "comment": patch.comment,
                    }
                )
            )
        else:
            print(fw_sigscan.format_patch(patch))
    return EXIT_OK if matches else EXIT_NO_MATCH


def _parse_channel_offsets(entries: list[str]) -> dict[int, float]:
    offsets: dict[int, float] = {}
    for entry in entries:
        channel_text, sep, db_text = entry.partition(":")
        if not sep:
            raise ValueError(f"offset {entry!r} must look like CHANNEL:DB, e.g. 38:-20")
        offsets[int(channel_text)] = float(db_text)
    return offsets


def cmd_synth(args) -> int:
    spec = adv_analytics.ScenarioSpec(
        seed=args.seed,
        advertiser_count=args.advertisers,
        true_distance_m=args.distance_m,
        tx_power_dbm=args.tx_power_dbm,
        path_loss=adv_analytics.PathLossParams(
            reference_rssi_at_1m=args.ref_rssi, path_loss_exponent=args.exponent
        ),
        per_channel_offset_db=_parse_channel_offsets(args.offset_db),
        noise_sigma_db=args.noise_sigma,
        reports_per_channel=args.reports_per_channel,
    )
    records = adv_analytics.trace_to_capture_records(adv_analytics.synth_trace(spec))
    if args.output == "-":
        written = capture_io.write_btsnoop(records, sys.stdout.buffer)
    else:
        with open(args.output, "wb") as sink:
            written = capture_io.write_btsnoop(records, sink)
    print(f"wrote {written} record(s) to {args.output}", file=sys.stderr)
    return EXIT_OK


def _hex_int(text: str) -> int:
    return int(text, 16)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bleadv",
        description=(
            "Decode BLE advertising reports (including the vendor channel/antenna/"
            "scan-mode bits), analyze per-channel RSSI, scan firmware images, and "
            "synthesize test captures."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_capture_flags(p):
        p.add_argument("input", help="capture file, or - for standard input")
        p.add_argument(
            "--enhanced",
            action="store_true",
            help="decode the vendor event-type bits (default: standard interpretation)",
        )
        p.add_argument(
            "--format", choices=("pretty", "structured"), default="pretty",
            help="output style (structured = one JSON object per line)",
        )
        p.add_argument(
            "--strict", action="store_true",
            help="abort on the first malformed record instead of skip-and-count",
        )
        p.add_argument(
            "--input-format", choices=("btsnoop", "pklg", "h4"),
            help="override container auto-detection (required for H4 streams)",
        )

    decode = sub.add_parser("decode", help="render advertising reports from a capture")
    add_capture_flags(decode)
    decode.set_defaults(func=cmd_decode)

    analyze = sub.add_parser(
        "analyze", help="per-channel RSSI statistics, blacklist, distance estimates"
    )
    add_capture_flags(analyze)
    analyze.add_argument("--threshold-db", type=float, default=10.0,
                         help="median deviation that blacklists a channel (default 10)")
    analyze.add_argument("--min-samples", type=int, default=5,
                         help="samples a channel needs before it is judged (default 5)")
    analyze.add_argument("--ref-rssi", type=float, default=-56.0,
                         help="reference RSSI at 1 m in dBm (default -56)")
    analyze.add_argument("--exponent", type=float, default=2.0,
                         help="path loss exponent (default 2.0, free space)")
    analyze.set_defaults(func=cmd_analyze)

    scan = sub.add_parser("scan", help="search a firmware image for instruction signatures")
    scan.add_argument("image", help="firmware image file, or - for standard input")
    scan.add_argument("--signatures", metavar="FILE",
                      help="tab-separated signature list (default: built-ins)")
    scan.add_argument("--patch-address", type=_hex_int, metavar="HEX",
                      help="also emit the one-byte enable patch for this address")
    scan.add_argument("--format", choices=("pretty", "structured"), default="pretty")
    scan.set_defaults(func=cmd_scan)

    synth = sub.add_parser("synth", help="write a deterministic synthetic btsnoop capture")
    synth.add_argument("output", help="output file, or - for standard output")
    synth.add_argument("--seed", type=int, default=1)
    synth.add_argument("--advertisers", type=int, default=1)
    synth.add_argument("--distance-m", type=float, default=2.0)
    synth.add_argument("--tx-power-dbm", type=int, default=4)
    synth.add_argument("--ref-rssi", type=float, default=-56.0)
    synth.add_argument("--exponent", type=float, default=2.0)
    synth.add_argument("--noise-sigma", type=float, default=0.0)
    synth.add_argument("--reports-per-channel", type=int, default=100)
    synth.add_argument("--offset-db", action="append", default=[], metavar="CH:DB",
                       help="per-channel interference offset, repeatable (e.g. 38:-20)")
    synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; usage errors
        # are fatal under this tool's exit-code contract.
        return EXIT_OK if exc.code in (0, None) else EXIT_FATAL
    try:
        return args.func(args)
    except BrokenPipeError:
        # Downstream consumer (head, a pager) closed the pipe; not an error.
        try:
            sys.stdout.close()
        except OSError:
            pass
        return EXIT_OK
    except (BleadvError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


def run() -> None:
    raise SystemExit(main())
