"""Dirty-input robustness: parsers must fail only with their documented
error types, whatever bytes arrive."""

import io
import random
import struct

from bleadv import capture_io as cio
from bleadv import hci_codec as hc
from bleadv.errors import BleadvError

from _samples import SAMPLE_ADV_PACKET


def test_codec_rejects_garbage_with_documented_errors():
    rng = random.Random(0xFADE)
    for _ in range(3000):
        blob = bytes(rng.randrange(256) for _ in range(rng.randint(0, 64)))
        for mode in (hc.DecodeMode.ENHANCED, hc.DecodeMode.STANDARD):
            try:
                hc.parse_le_adv_report(hc.parse_hci_event(blob), mode)
            except BleadvError:
                pass
        try:
            hc.parse_adv_data(blob[:31])
        except BleadvError:
            pass


def test_capture_readers_survive_mutated_files():
    rng = random.Random(0xBEEF)
    header = struct.pack(">8sII", b"btsnoop\x00", 1, 1002)
    payload = b"\x04" + SAMPLE_ADV_PACKET
    record = (
        struct.pack(
            ">IIIIQ", len(payload), len(payload), 3, 0, cio.BTSNOOP_EPOCH_OFFSET_US
        )
        + payload
    )
    base = header + record + record

    readers = (
        lambda data: cio.read_btsnoop(io.BytesIO(data)),
        lambda data: cio.read_pklg(io.BytesIO(data)),
        lambda data: list(cio.stream_h4(io.BytesIO(data), clock=lambda: 0)),
    )
    for _ in range(1000):
        blob = bytearray(base)
        for _ in range(rng.randint(1, 8)):
            mutation = rng.randrange(3)
            if mutation == 0:
                blob[rng.randrange(len(blob))] = rng.randrange(256)
            elif mutation == 1 and len(blob) > 1:
                del blob[rng.randrange(len(blob))]
            else:
                blob.insert(rng.randrange(len(blob) + 1), rng.randrange(256))
        for reader in readers:
            try:
                reader(bytes(blob))
            except BleadvError:
                pass
