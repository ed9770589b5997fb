"""Bit-exact codecs for HCI events, LE advertising reports, and AD structures.

Wire formats handled here:

  HCI event        event_code(1) param_len(1) params(param_len)
  LE adv report    subevent 0x02: num_reports(1), then per report
                   event_type(1) address_type(1) address(6, LSB first)
                   data_len(1) data(data_len) rssi(1, two's complement)
  AD structure     length(1) = 1 + len(value), type(1), value

The one-byte event type is only assigned values 0x00..0x04 by the Bluetooth
specification. Broadcom/Cypress firmware can additionally pack the receive
channel, antenna, and scan mode into the remaining bits; ``decode_event_type``
exposes both readings. The raw byte stays authoritative because the channel
and scan-mode bit ranges overlap on bit 4.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import (
    DataTooLong,
    LengthMismatch,
    MalformedTxPower,
    NumReportsZero,
    OutOfRange,
    ParamsOverflow,
    TooManyReports,
    TooShort,
    Truncated,
    WrongEventCode,
    WrongSubevent,
)

LE_META_EVENT = 0x3E
ADV_REPORT_SUBEVENT = 0x02
MAX_REPORTS = 25
MAX_ADV_DATA = 31
# event type + address type + address + data length + RSSI
REPORT_OVERHEAD = 10

ADV_IND = 0x00
ADV_DIRECT_IND = 0x01
ADV_SCAN_IND = 0x02
ADV_NONCONN_IND = 0x03
SCAN_RSP = 0x04

PDU_NAMES = {
    ADV_IND: "ADV_IND",
    ADV_DIRECT_IND: "ADV_DIRECT_IND",
    ADV_SCAN_IND: "ADV_SCAN_IND",
    ADV_NONCONN_IND: "ADV_NONCONN_IND",
    SCAN_RSP: "SCAN_RSP",
}

PDU_DESCRIPTIONS = {
    ADV_IND: "Connectable Undirected Advertising",
    ADV_DIRECT_IND: "Connectable Directed Advertising",
    ADV_SCAN_IND: "Scannable Undirected Advertising",
    ADV_NONCONN_IND: "Non-Connectable Undirected Advertising",
    SCAN_RSP: "Scan Response",
}

ADDRESS_TYPE_NAMES = {
    0x00: "Public",
    0x01: "Random",
    0x02: "Public Identity",
    0x03: "Random Identity",
}

AD_TYPE_FLAGS = 0x01
AD_TYPE_COMPLETE_NAME = 0x09
AD_TYPE_TX_POWER = 0x0A


class DecodeMode(enum.Enum):
    """How to read the per-report event-type byte.

    STANDARD keeps only the specification-defined PDU values and reports
    every advertisement on channel 37. ENHANCED additionally decodes the
    channel, antenna, and scan-mode bits from the upper half of the byte.
    """

    STANDARD = "standard"
    ENHANCED = "enhanced"


def pdu_name(pdu_type: int) -> str:
    return PDU_NAMES.get(pdu_type, f"UNKNOWN(0x{pdu_type:02X})")


def address_type_name(address_type: int) -> str:
    return ADDRESS_TYPE_NAMES.get(address_type, f"Reserved(0x{address_type:02X})")


def format_address(address: bytes) -> str:
    """Render a device address most-significant byte first, colon separated."""
    return ":".join(f"{b:02X}" for b in address)


@dataclass(frozen=True)
class EnhancedEventType:
    """Decoded view of one event-type byte. ``raw`` is authoritative."""

    raw: int
    pdu_type: int
    channel_index: int
    antenna: bool
    scan_mode: int
    enhanced: bool

    @property
    def channel_mapped(self) -> bool:
        """Only indices 0..2 map to advertising channels 37..39."""
        return self.channel_index <= 2

    def ble_channel(self) -> int | None:
        """Advertising channel number, or None for an unmapped index."""
        if self.channel_mapped:
            return 37 + self.channel_index
        return None

    @property
    def raw_nonstandard(self) -> bool:
        """Standard-mode byte outside the assigned 0x00..0x04 range."""
        return not self.enhanced and self.raw > SCAN_RSP

    @property
    def pdu_name(self) -> str:
        return pdu_name(self.pdu_type)

    def channel_label(self) -> str:
        channel = self.ble_channel()
        if channel is None:
            return f"Channel index {self.channel_index} (unmapped)"
        return f"Channel {channel}"

    def scan_mode_label(self) -> str:
        if self.scan_mode == 0:
            return "Normal Scan Mode"
        return f"Scan Mode {self.scan_mode}"

    def antenna_label(self) -> str:
        return "non-BT" if self.antenna else "BT"

    def describe(self) -> str:
        pdu = self.pdu_name
        if self.pdu_type in PDU_DESCRIPTIONS:
            pdu = f"{PDU_DESCRIPTIONS[self.pdu_type]} ({pdu})"
        return " - ".join(
            (
                f"Scan Mode: {self.scan_mode_label()}",
                self.channel_label(),
                f"Antenna: {self.antenna_label()}",
                pdu,
            )
        )


def decode_event_type(raw: int, mode: DecodeMode) -> EnhancedEventType:
    """Decode an event-type byte; total over 0x00..0xFF, never raises on content.

    ENHANCED applies the packed bit fields verbatim:
    channel = (raw >> 4) & 7, antenna = raw & 0x80, scan_mode = (raw >> 3) & 3,
    pdu = raw & 7. STANDARD keeps the byte as the PDU value (unknown above
    0x04) and pins channel index 0, antenna off, scan mode 0.
    """
    if not 0 <= raw <= 0xFF:
        raise OutOfRange(f"event type byte out of range: {raw}")
    if mode is DecodeMode.ENHANCED:
        return EnhancedEventType(
            raw=raw,
            pdu_type=raw & 0x07,
            channel_index=(raw >> 4) & 7,
            antenna=bool(raw & 0x80),
            scan_mode=(raw >> 3) & 3,
            enhanced=True,
        )
    return EnhancedEventType(
        raw=raw,
        pdu_type=raw,
        channel_index=0,
        antenna=False,
        scan_mode=0,
        enhanced=False,
    )


def compose_event_type(pdu: int, channel_index: int, scan_mode_low: int, antenna: bool) -> int:
    """Build an event-type byte from its packed fields.

    Bit 4 is shared between the channel and scan-mode ranges, so only the low
    scan-mode bit is free; decoding the result yields
    scan_mode == ((channel_index & 1) << 1) | scan_mode_low.
    """
    if not 0 <= pdu <= 7:
        raise OutOfRange(f"pdu must be 0..7, got {pdu}")
    if not 0 <= channel_index <= 7:
        raise OutOfRange(f"channel_index must be 0..7, got {channel_index}")
    if scan_mode_low not in (0, 1):
        raise OutOfRange(f"scan_mode_low must be 0 or 1, got {scan_mode_low}")
    return (0x80 if antenna else 0x00) | (channel_index << 4) | (scan_mode_low << 3) | pdu


@dataclass(frozen=True)
class HciEventPacket:
    event_code: int
    params: bytes

    @property
    def param_len(self) -> int:
        return len(self.params)

    def to_bytes(self) -> bytes:
        return bytes((self.event_code, len(self.params))) + self.params


def parse_hci_event(data: bytes) -> HciEventPacket:
    """Split an HCI event into code and parameters.

    The input must be exactly one event: bytes beyond the declared parameter
    length are rejected, not ignored.
    """
    if len(data) < 2:
        raise TooShort(f"HCI event needs at least 2 bytes, got {len(data)}")
    param_len = data[1]
    params = bytes(data[2:])
    if len(params) != param_len:
        raise LengthMismatch(
            f"declared {param_len} parameter bytes, found {len(params)}"
        )
    return HciEventPacket(event_code=data[0], params=params)


@dataclass(frozen=True)
class AdvReport:
    """One advertising report. ``address`` is stored most-significant first."""

    event_type: EnhancedEventType
    address_type: int
    address: bytes
    adv_data: bytes
    rssi_dbm: int

    def address_str(self) -> str:
        return format_address(self.address)

    @property
    def wire_size(self) -> int:
        return REPORT_OVERHEAD + len(self.adv_data)


@dataclass(frozen=True)
class AdvReportEvent:
    reports: list[AdvReport]


def parse_le_adv_report(pkt: HciEventPacket, mode: DecodeMode) -> AdvReportEvent:
    """Parse an LE Advertising Report event (subevent 0x02)."""
    if pkt.event_code != LE_META_EVENT:
        raise WrongEventCode(
            f"expected event code 0x{LE_META_EVENT:02X}, got 0x{pkt.event_code:02X}"
        )
    params = pkt.params
    if len(params) < 2:
        raise Truncated("missing subevent code / report count")
    if params[0] != ADV_REPORT_SUBEVENT:
        raise WrongSubevent(
            f"expected subevent 0x{ADV_REPORT_SUBEVENT:02X}, got 0x{params[0]:02X}"
        )
    num_reports = params[1]
    if num_reports == 0:
        raise NumReportsZero("advertising report event declares zero reports")

    reports = []
    pos = 2
    for index in range(num_reports):
        if pos + 9 > len(params):
            raise Truncated(f"report {index}: fixed fields run past the parameters")
        raw_event_type = params[pos]
        address_type = params[pos + 1]
        address = bytes(reversed(params[pos + 2:pos + 8]))
        data_len = params[pos + 8]
        pos += 9
        if data_len > MAX_ADV_DATA:
            raise DataTooLong(
                f"report {index}: declared {data_len} advertising data bytes exceed {MAX_ADV_DATA}"
            )
        if pos + data_len + 1 > len(params):
            raise Truncated(f"report {index}: data/RSSI run past the parameters")
        adv_data = params[pos:pos + data_len]
        pos += data_len
        rssi_raw = params[pos]
        pos += 1
        reports.append(
            AdvReport(
                event_type=decode_event_type(raw_event_type, mode),
                address_type=address_type,
                address=address,
                adv_data=adv_data,
                rssi_dbm=rssi_raw - 256 if rssi_raw >= 128 else rssi_raw,
            )
        )
    if pos != len(params):
        raise LengthMismatch(
            f"{len(params) - pos} unconsumed bytes after {num_reports} reports"
        )
    return AdvReportEvent(reports=reports)


def serialize_adv_report_event(evt: AdvReportEvent) -> bytes:
    """Serialize to a full HCI event; inverse of the two parse steps."""
    count = len(evt.reports)
    if count == 0:
        raise NumReportsZero("cannot serialize an event with zero reports")
    if count > MAX_REPORTS:
        raise TooManyReports(f"{count} reports exceed the limit of {MAX_REPORTS}")

    body = bytearray((ADV_REPORT_SUBEVENT, count))
    for index, report in enumerate(evt.reports):
        if len(report.adv_data) > MAX_ADV_DATA:
            raise DataTooLong(
                f"report {index}: {len(report.adv_data)} data bytes exceed {MAX_ADV_DATA}"
            )
        if len(report.address) != 6:
            raise OutOfRange(f"report {index}: address must be 6 bytes")
        if not 0 <= report.address_type <= 0xFF:
            raise OutOfRange(f"report {index}: address type out of range")
        if not -128 <= report.rssi_dbm <= 127:
            raise OutOfRange(f"report {index}: RSSI out of signed 8-bit range")
        body.append(report.event_type.raw)
        body.append(report.address_type)
        body.extend(reversed(report.address))
        body.append(len(report.adv_data))
        body.extend(report.adv_data)
        body.append(report.rssi_dbm & 0xFF)

    if len(body) > 0xFF:
        raise ParamsOverflow(
            f"{len(body)} parameter bytes do not fit the one-byte length field"
        )
    return bytes((LE_META_EVENT, len(body))) + bytes(body)


@dataclass(frozen=True)
class AdStructure:
    ad_type: int
    value: bytes


def parse_adv_data(data: bytes) -> list[AdStructure]:
    """Parse length-type-value AD structures; a zero length byte terminates."""
    structures = []
    pos = 0
    while pos < len(data):
        length = data[pos]
        if length == 0:
            break
        if pos + 1 + length > len(data):
            raise Truncated(
                f"AD structure at offset {pos} declares {length} bytes, "
                f"only {len(data) - pos - 1} available"
            )
        structures.append(
            AdStructure(ad_type=data[pos + 1], value=bytes(data[pos + 2:pos + 1 + length]))
        )
        pos += 1 + length
    return structures


def extract_tx_power(structures: list[AdStructure]) -> int | None:
    """Signed TX power (dBm) from the first type-0x0A structure, if any."""
    for structure in structures:
        if structure.ad_type != AD_TYPE_TX_POWER:
            continue
        if len(structure.value) != 1:
            raise MalformedTxPower(
                f"TX power value must be 1 byte, got {len(structure.value)}"
            )
        value = structure.value[0]
        return value - 256 if value >= 128 else value
    return None
