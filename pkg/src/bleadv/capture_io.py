"""Readers and writers for HCI capture containers: btsnoop, pklg, raw H4.

btsnoop layout (all header fields big-endian):

  file header    magic "btsnoop\\0", version u32 (=1), datalink u32 (=1002 H4)
  record header  original_len u32, included_len u32, flags u32, drops u32,
                 timestamp u64 (microseconds since year 0)
  record payload H4 indicator byte + HCI packet

pklg records carry no file header:

  length u32 (big-endian, counts everything after itself, minimum 9),
  ts_seconds u32, ts_microseconds u32, type u8, payload

H4 streams are back-to-back packets, each prefixed with a one-byte kind
indicator; packets are delimited by their own length fields.
"""

from __future__ import annotations

import enum
import struct
import time
from dataclasses import dataclass
from typing import BinaryIO, Callable, Iterable, Iterator

from .errors import (
    BadMagic,
    BadRecordLength,
    SinkFailure,
    TruncatedRecord,
    UnknownIndicator,
    UnsupportedDatalink,
    UnsupportedVersion,
)

BTSNOOP_MAGIC = b"btsnoop\x00"
BTSNOOP_VERSION = 1
BTSNOOP_DATALINK_H4 = 1002
# Offset between the btsnoop epoch (year 0) and the Unix epoch, microseconds.
BTSNOOP_EPOCH_OFFSET_US = 0x00DCDDB30F2F8000

H4_COMMAND = 0x01
H4_ACL_DATA = 0x02
H4_SCO_DATA = 0x03
H4_EVENT = 0x04

H4_KIND_NAMES = {
    H4_COMMAND: "Command",
    H4_ACL_DATA: "ACL Data",
    H4_SCO_DATA: "SCO Data",
    H4_EVENT: "Event",
}

# pklg record types per the public dissectors.
PKLG_COMMAND = 0x00
PKLG_EVENT = 0x01
PKLG_ACL_SENT = 0x02
PKLG_ACL_RECEIVED = 0x03
PKLG_SCO_RECEIVED = 0x08
PKLG_SCO_SENT = 0x09
PKLG_NOTE_TYPES = frozenset({0xFB, 0xFC})


class Direction(enum.Enum):
    HOST_TO_CONTROLLER = "host->controller"
    CONTROLLER_TO_HOST = "controller->host"
    UNKNOWN = "unknown"


class CaptureFormat(enum.Enum):
    BTSNOOP = "btsnoop"
    PKLG = "pklg"


@dataclass(frozen=True)
class CaptureRecord:
    """One captured HCI packet.

    ``packet_kind`` holds the H4 indicator code; values outside 0x01..0x04
    are preserved as-is. ``payload`` is the HCI packet without the indicator.
    """

    timestamp_us: int
    direction: Direction
    packet_kind: int
    payload: bytes

    @property
    def kind_name(self) -> str:
        return H4_KIND_NAMES.get(self.packet_kind, f"Unknown(0x{self.packet_kind:02X})")


@dataclass
class CaptureFileInfo:
    format: CaptureFormat
    datalink_or_version: int
    record_count: int = 0
    skipped_log_records: int = 0
    skipped_unknown_records: int = 0


def iter_btsnoop(stream: BinaryIO) -> Iterator[CaptureRecord]:
    """Yield records from a btsnoop stream; raises positioned errors."""
    header = stream.read(16)
    if len(header) < 16 or header[:8] != BTSNOOP_MAGIC:
        raise BadMagic("stream does not start with a btsnoop header", offset=0)
    version, datalink = struct.unpack(">II", header[8:16])
    if version != BTSNOOP_VERSION:
        raise UnsupportedVersion(f"btsnoop version {version}, only 1 supported", offset=8)
    if datalink != BTSNOOP_DATALINK_H4:
        raise UnsupportedDatalink(
            f"btsnoop datalink {datalink}, only 1002 (H4) supported", offset=12
        )

    offset = 16
    while True:
        record_header = stream.read(24)
        if not record_header:
            return
        if len(record_header) < 24:
            raise TruncatedRecord("record header cut short", offset=offset)
        _orig_len, incl_len, flags, _drops, timestamp = struct.unpack(
            ">IIIIQ", record_header
        )
        data = stream.read(incl_len)
        if len(data) < incl_len:
            raise TruncatedRecord("record payload cut short", offset=offset)
        if incl_len < 2:
            raise TruncatedRecord(
                "record too small for an H4 indicator plus packet", offset=offset
            )
        direction = (
            Direction.CONTROLLER_TO_HOST if flags & 0x01 else Direction.HOST_TO_CONTROLLER
        )
        yield CaptureRecord(
            timestamp_us=max(0, timestamp - BTSNOOP_EPOCH_OFFSET_US),
            direction=direction,
            packet_kind=data[0],
            payload=bytes(data[1:]),
        )
        offset += 24 + incl_len


def read_btsnoop(stream: BinaryIO) -> tuple[CaptureFileInfo, list[CaptureRecord]]:
    records = list(iter_btsnoop(stream))
    info = CaptureFileInfo(
        format=CaptureFormat.BTSNOOP,
        datalink_or_version=BTSNOOP_DATALINK_H4,
        record_count=len(records),
    )
    return info, records


def _btsnoop_flags(record: CaptureRecord) -> int:
    if record.direction is Direction.CONTROLLER_TO_HOST:
        direction_bit = 1
    elif record.direction is Direction.HOST_TO_CONTROLLER:
        direction_bit = 0
    else:
        # No unknown encoding on the wire; commands go out, events come in.
        direction_bit = 1 if record.packet_kind == H4_EVENT else 0
    command_bit = 2 if record.packet_kind in (H4_COMMAND, H4_EVENT) else 0
    return direction_bit | command_bit


def write_btsnoop(records: Iterable[CaptureRecord], sink: BinaryIO) -> int:
    """Write records as a btsnoop file; returns the record count."""
    written = 0
    try:
        sink.write(
            struct.pack(">8sII", BTSNOOP_MAGIC, BTSNOOP_VERSION, BTSNOOP_DATALINK_H4)
        )
        for record in records:
            data = bytes((record.packet_kind,)) + record.payload
            sink.write(
                struct.pack(
                    ">IIIIQ",
                    len(data),
                    len(data),
                    _btsnoop_flags(record),
                    0,
                    record.timestamp_us + BTSNOOP_EPOCH_OFFSET_US,
                )
            )
            sink.write(data)
            written += 1
    except OSError as exc:
        raise SinkFailure(f"writing btsnoop output failed: {exc}") from exc
    return written


_PKLG_KIND_DIRECTION = {
    PKLG_COMMAND: (H4_COMMAND, Direction.HOST_TO_CONTROLLER),
    PKLG_EVENT: (H4_EVENT, Direction.CONTROLLER_TO_HOST),
    PKLG_ACL_SENT: (H4_ACL_DATA, Direction.HOST_TO_CONTROLLER),
    PKLG_ACL_RECEIVED: (H4_ACL_DATA, Direction.CONTROLLER_TO_HOST),
    PKLG_SCO_RECEIVED: (H4_SCO_DATA, Direction.CONTROLLER_TO_HOST),
    PKLG_SCO_SENT: (H4_SCO_DATA, Direction.HOST_TO_CONTROLLER),
}


def iter_pklg(stream: BinaryIO, info: CaptureFileInfo | None = None) -> Iterator[CaptureRecord]:
    """Yield HCI records from a pklg stream.

    Textual note records are skipped; records with unknown type codes are
    skipped as well. Both are counted on ``info`` when one is passed, so no
    record disappears without a trace.
    """
    offset = 0
    while True:
        length_bytes = stream.read(4)
        if not length_bytes:
            return
        if len(length_bytes) < 4:
            raise TruncatedRecord("record length field cut short", offset=offset)
        (length,) = struct.unpack(">I", length_bytes)
        if length < 9:
            raise BadRecordLength(f"record length {length} below the 9-byte minimum", offset=offset)
        body = stream.read(length)
        if len(body) < length:
            raise TruncatedRecord("record body cut short", offset=offset)
        ts_sec, ts_usec, record_type = struct.unpack(">IIB", body[:9])
        payload = bytes(body[9:])
        record_offset = offset
        offset += 4 + length

        if record_type in PKLG_NOTE_TYPES:
            if info is not None:
                info.skipped_log_records += 1
            continue
        mapping = _PKLG_KIND_DIRECTION.get(record_type)
        if mapping is None:
            if info is not None:
                info.skipped_unknown_records += 1
            continue
        if not payload:
            raise TruncatedRecord("record carries no HCI payload", offset=record_offset)
        kind, direction = mapping
        yield CaptureRecord(
            timestamp_us=ts_sec * 1_000_000 + ts_usec,
            direction=direction,
            packet_kind=kind,
            payload=payload,
        )


def read_pklg(stream: BinaryIO) -> tuple[CaptureFileInfo, list[CaptureRecord]]:
    info = CaptureFileInfo(format=CaptureFormat.PKLG, datalink_or_version=0)
    records = list(iter_pklg(stream, info))
    info.record_count = len(records)
    return info, records


# Header bytes needed (after the indicator) before the packet's own length
# field can be read: commands opcode+len, ACL handle+len16, SCO handle+len,
# events code+len.
_H4_HEADER_LEN = {H4_COMMAND: 3, H4_ACL_DATA: 4, H4_SCO_DATA: 3, H4_EVENT: 2}


def _h4_body_len(kind: int, header: bytes) -> int:
    if kind == H4_ACL_DATA:
        return header[2] | (header[3] << 8)
    return header[-1]


def stream_h4(
    stream: BinaryIO, clock: Callable[[], int] | None = None
) -> Iterator[CaptureRecord]:
    """Yield records from a raw H4 byte stream.

    H4 carries no timestamps or direction; timestamps come from ``clock``
    (default: monotonic clock, microseconds) at read time. There is no way to
    resynchronize after a bad indicator byte, so parsing stops with a
    positioned error.
    """
    if clock is None:
        clock = lambda: time.monotonic_ns() // 1000
    offset = 0
    while True:
        indicator = stream.read(1)
        if not indicator:
            return
        kind = indicator[0]
        header_len = _H4_HEADER_LEN.get(kind)
        if header_len is None:
            raise UnknownIndicator(f"unknown H4 indicator 0x{kind:02X}", offset=offset)
        header = stream.read(header_len)
        if len(header) < header_len:
            raise TruncatedRecord("H4 packet header cut short", offset=offset)
        body_len = _h4_body_len(kind, header)
        body = stream.read(body_len)
        if len(body) < body_len:
            raise TruncatedRecord("H4 packet body cut short", offset=offset)
        yield CaptureRecord(
            timestamp_us=clock(),
            direction=Direction.UNKNOWN,
            packet_kind=kind,
            payload=header + body,
        )
        offset += 1 + header_len + body_len


def detect_format(prefix: bytes) -> CaptureFormat | None:
    """Guess the container from leading bytes.

    btsnoop is identified by its magic. pklg has no magic, so the heuristic
    checks that the first record has a plausible length and a known type
    code; H4 streams must be requested explicitly.
    """
    if prefix[:8] == BTSNOOP_MAGIC:
        return CaptureFormat.BTSNOOP
    if len(prefix) >= 13:
        (length,) = struct.unpack(">I", prefix[:4])
        record_type = prefix[12]
        known = record_type in _PKLG_KIND_DIRECTION or record_type in PKLG_NOTE_TYPES
        if 9 <= length <= 0x10000 and known:
            return CaptureFormat.PKLG
    return None
