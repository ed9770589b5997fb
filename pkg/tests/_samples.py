"""Shared byte fixtures and randomized builders for the test suite."""

import random
import struct

from bleadv import hci_codec
from bleadv.capture_io import CaptureRecord, Direction

# 32-byte LE advertising report as a controller would deliver it:
# event 0x3E, 30 parameter bytes, one report from random address
# CA:FE:BA:BE:13:37 with event-type byte 0x00 and RSSI -56 dBm (0xC8).
SAMPLE_ADV_PREFIX = bytes.fromhex("3E1E020100013713BEBAFECA")
SAMPLE_ADV_AD = bytes.fromhex("020106") + bytes((0x0E, 0x09)) + b"Chan37 Beacon"
SAMPLE_ADV_PACKET = (
    SAMPLE_ADV_PREFIX + bytes((len(SAMPLE_ADV_AD),)) + SAMPLE_ADV_AD + bytes((0xC8,))
)
SAMPLE_ADDRESS = "CA:FE:BA:BE:13:37"


def random_adv_report(rng: random.Random) -> hci_codec.AdvReport:
    raw = rng.randrange(256)
    return hci_codec.AdvReport(
        event_type=hci_codec.decode_event_type(raw, hci_codec.DecodeMode.ENHANCED),
        address_type=rng.randrange(256),
        address=bytes(rng.randrange(256) for _ in range(6)),
        adv_data=bytes(rng.randrange(256) for _ in range(rng.randint(0, 31))),
        rssi_dbm=rng.randint(-128, 127),
    )


def random_adv_report_event(rng: random.Random) -> hci_codec.AdvReportEvent:
    # Up to 5 reports keeps the parameter block under the 255-byte limit
    # even with maximal advertising data.
    return hci_codec.AdvReportEvent(
        [random_adv_report(rng) for _ in range(rng.randint(1, 5))]
    )


def random_capture_records(rng: random.Random, count: int) -> list[CaptureRecord]:
    records = []
    for _ in range(count):
        records.append(
            CaptureRecord(
                timestamp_us=rng.randrange(0, 1 << 49),
                direction=rng.choice(
                    (Direction.HOST_TO_CONTROLLER, Direction.CONTROLLER_TO_HOST)
                ),
                packet_kind=rng.choice((0x01, 0x02, 0x03, 0x04)),
                payload=bytes(rng.randrange(256) for _ in range(rng.randint(1, 40))),
            )
        )
    return records


def pklg_record(record_type: int, payload: bytes, ts_sec: int = 0, ts_usec: int = 0) -> bytes:
    return struct.pack(">IIIB", 9 + len(payload), ts_sec, ts_usec, record_type) + payload
