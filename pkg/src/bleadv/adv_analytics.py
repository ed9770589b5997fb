"""Channel-aware RSSI analytics over decoded advertising reports.

Per-device, per-channel RSSI aggregation feeds three consumers: interference
blacklisting (a channel whose pooled median sits far below the best channel
is dropped), TX-power normalization, and log-distance ranging. A seeded
scenario generator produces byte-identical synthetic traces for validation.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import hci_codec
from .capture_io import H4_EVENT, CaptureRecord, Direction
from .errors import NoSamples, OutOfRange, ParseError
from .hci_codec import ADV_IND, AdvReport, AdvReportEvent, DecodeMode

BLE_ADV_CHANNELS = (37, 38, 39)
BLE_ADV_CHANNEL_MHZ = {37: 2402, 38: 2426, 39: 2480}

# Legacy 20/22 MHz Wi-Fi occupancy approximated as center +/- 11 MHz.
WIFI_HALF_WIDTH_MHZ = 11
WIFI_CENTER_MHZ = {ch: 2412 + 5 * (ch - 1) for ch in range(1, 14)}
WIFI_CENTER_MHZ[14] = 2484


@dataclass
class BlacklistParams:
    min_samples_per_channel: int = 5
    deviation_threshold_db: float = 10.0

    def __post_init__(self):
        if self.deviation_threshold_db < 0:
            raise OutOfRange("deviation threshold must be non-negative")
        if self.min_samples_per_channel < 0:
            raise OutOfRange("minimum sample count must be non-negative")


@dataclass
class PathLossParams:
    reference_rssi_at_1m: float
    path_loss_exponent: float = 2.0

    def __post_init__(self):
        if self.path_loss_exponent <= 0:
            raise OutOfRange("path loss exponent must be positive")


@dataclass
class DeviceStats:
    """Raw RSSI samples for one device, bucketed by advertising channel."""

    address: str
    channels: dict[int, list[int]] = field(
        default_factory=lambda: {ch: [] for ch in BLE_ADV_CHANNELS}
    )
    unknown_channel: list[int] = field(default_factory=list)
    first_seen_us: int | None = None
    last_seen_us: int | None = None

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.channels.values()) + len(self.unknown_channel)


@dataclass(frozen=True)
class CellStats:
    """Derived statistics for one (device, channel) cell.

    ``channel`` is None for samples whose channel index had no mapping.
    """

    address: str
    channel: int | None
    count: int
    mean: float
    median: float
    stddev: float

    def as_dict(self) -> dict:
        return {
            "address": self.address,
            "channel": self.channel if self.channel is not None else "unknown",
            "count": self.count,
            "mean": self.mean,
            "median": self.median,
            "stddev": self.stddev,
        }


def _cell(address: str, channel: int | None, samples: Sequence[int]) -> CellStats:
    return CellStats(
        address=address,
        channel=channel,
        count=len(samples),
        mean=statistics.fmean(samples),
        median=statistics.median(samples),
        stddev=statistics.pstdev(samples),
    )


class SessionStats:
    """Per-device, per-channel RSSI aggregates.

    Raw samples are kept; derived statistics are recomputed on access, never
    cached, so they always agree with a from-scratch recomputation.
    """

    def __init__(self):
        self.devices: dict[str, DeviceStats] = {}

    @property
    def total_reports(self) -> int:
        return sum(dev.total for dev in self.devices.values())

    def ingest(self, report: AdvReport, timestamp_us: int = 0) -> "SessionStats":
        address = report.address_str()
        device = self.devices.setdefault(address, DeviceStats(address))
        channel = report.event_type.ble_channel()
        if channel is None:
            device.unknown_channel.append(report.rssi_dbm)
        else:
            device.channels[channel].append(report.rssi_dbm)
        if device.first_seen_us is None:
            device.first_seen_us = timestamp_us
        device.last_seen_us = timestamp_us
        return self

    def cells(self) -> list[CellStats]:
        out = []
        for address in sorted(self.devices):
            device = self.devices[address]
            for channel in BLE_ADV_CHANNELS:
                samples = device.channels[channel]
                if samples:
                    out.append(_cell(address, channel, samples))
            if device.unknown_channel:
                out.append(_cell(address, None, device.unknown_channel))
        return out

    def pooled_channel_samples(self) -> dict[int, list[int]]:
        """All devices' samples merged per advertising channel."""
        pooled: dict[int, list[int]] = {ch: [] for ch in BLE_ADV_CHANNELS}
        for device in self.devices.values():
            for channel in BLE_ADV_CHANNELS:
                pooled[channel].extend(device.channels[channel])
        return pooled


def ingest_report(stats: SessionStats, report: AdvReport, timestamp_us: int = 0) -> SessionStats:
    return stats.ingest(report, timestamp_us)


@dataclass(frozen=True)
class ChannelEvidence:
    channel: int
    count: int
    median: float | None
    margin_db: float | None
    eligible: bool
    blacklisted: bool

    def as_dict(self) -> dict:
        return {
            "channel": self.channel,
            "count": self.count,
            "median": self.median,
            "margin_db": self.margin_db,
            "eligible": self.eligible,
            "blacklisted": self.blacklisted,
        }


@dataclass(frozen=True)
class BlacklistDecision:
    channels: frozenset[int]
    evidence: tuple[ChannelEvidence, ...]


def detect_interference(
    stats: SessionStats, params: BlacklistParams | None = None
) -> BlacklistDecision:
    """Pick the (at most one) advertising channel to distrust.

    A channel qualifies when it has enough pooled samples and its median RSSI
    sits more than the threshold below the best other qualifying channel.
    Only the worst qualifying channel is blacklisted so that two channels
    always remain trusted; an exact tie for worst blacklists nothing.
    """
    if params is None:
        params = BlacklistParams()
    pooled = stats.pooled_channel_samples()
    medians = {ch: statistics.median(v) for ch, v in pooled.items() if v}
    eligible = {
        ch
        for ch in BLE_ADV_CHANNELS
        if pooled[ch] and len(pooled[ch]) >= params.min_samples_per_channel
    }

    margins: dict[int, float] = {}
    candidates = []
    if len(eligible) >= 2:
        for channel in eligible:
            best_other = max(medians[o] for o in eligible if o != channel)
            margins[channel] = best_other - medians[channel]
            if margins[channel] > params.deviation_threshold_db:
                candidates.append(channel)

    blacklisted: set[int] = set()
    if candidates:
        worst = min(candidates, key=lambda ch: medians[ch])
        tied = [ch for ch in candidates if medians[ch] == medians[worst]]
        if len(tied) == 1:
            blacklisted = {worst}

    evidence = tuple(
        ChannelEvidence(
            channel=ch,
            count=len(pooled[ch]),
            median=medians.get(ch),
            margin_db=margins.get(ch),
            eligible=ch in eligible,
            blacklisted=ch in blacklisted,
        )
        for ch in BLE_ADV_CHANNELS
    )
    return BlacklistDecision(channels=frozenset(blacklisted), evidence=evidence)


def adjusted_rssi(rssi_dbm: float, tx_power_dbm: float, reference_tx_dbm: float) -> float:
    """Normalize an RSSI reading to a common transmit power."""
    return rssi_dbm - (tx_power_dbm - reference_tx_dbm)


def estimate_distance(rssi_dbm: float, params: PathLossParams) -> float:
    """Log-distance path loss: distance in meters from one RSSI value."""
    return 10.0 ** (
        (params.reference_rssi_at_1m - rssi_dbm) / (10.0 * params.path_loss_exponent)
    )


def wifi_overlap(wifi_channel: int) -> frozenset[int]:
    """Advertising channels whose center falls inside a Wi-Fi channel's band."""
    center = WIFI_CENTER_MHZ.get(wifi_channel)
    if center is None:
        raise OutOfRange(f"Wi-Fi channel must be 1..14, got {wifi_channel}")
    return frozenset(
        ch
        for ch, mhz in BLE_ADV_CHANNEL_MHZ.items()
        if abs(mhz - center) <= WIFI_HALF_WIDTH_MHZ
    )


@dataclass(frozen=True)
class DistanceEstimate:
    distance_m: float
    used_channels: frozenset[int]
    sample_count: int


def channel_aware_estimate(
    stats: SessionStats,
    address: str,
    params: PathLossParams,
    blacklist: frozenset[int] | set[int] = frozenset(),
) -> DistanceEstimate:
    """Distance from the mean RSSI pooled over non-blacklisted channels.

    Passing an empty blacklist gives the naive estimate that pools every
    channel.
    """
    device = stats.devices.get(address)
    if device is None:
        raise NoSamples(f"no reports ingested for {address}")
    samples: list[int] = []
    used = []
    for channel in BLE_ADV_CHANNELS:
        if channel in blacklist:
            continue
        if device.channels[channel]:
            used.append(channel)
            samples.extend(device.channels[channel])
    if not samples:
        raise NoSamples(f"no usable samples for {address} outside the blacklist")
    return DistanceEstimate(
        distance_m=estimate_distance(statistics.fmean(samples), params),
        used_channels=frozenset(used),
        sample_count=len(samples),
    )


# --- Synthetic traces --------------------------------------------------------

SYNTH_BASE_TIMESTAMP_US = 1_000_000
SYNTH_STEP_US = 10_000


@dataclass
class ScenarioSpec:
    """Deterministic synthetic-session description; equal specs give
    byte-identical traces."""

    seed: int = 1
    advertiser_count: int = 1
    true_distance_m: float = 2.0
    tx_power_dbm: int = 4
    path_loss: PathLossParams = field(default_factory=lambda: PathLossParams(-56.0))
    per_channel_offset_db: Mapping[int, float] = field(default_factory=dict)
    noise_sigma_db: float = 0.0
    reports_per_channel: int = 100

    def __post_init__(self):
        if self.true_distance_m <= 0:
            raise OutOfRange("true distance must be positive")
        if self.noise_sigma_db < 0:
            raise OutOfRange("noise sigma must be non-negative")
        if not 1 <= self.advertiser_count <= 0xFFFF:
            raise OutOfRange("advertiser count must be 1..65535 (addresses carry a 16-bit index)")
        if self.reports_per_channel < 0:
            raise OutOfRange("reports per channel must be non-negative")
        if not -128 <= self.tx_power_dbm <= 127:
            raise OutOfRange("tx power must fit in a signed byte")
        for channel in self.per_channel_offset_db:
            if channel not in BLE_ADV_CHANNELS:
                raise OutOfRange(f"offset for non-advertising channel {channel}")


class _GaussianSource:
    """Polar Box-Muller over seeded MT19937 uniforms.

    The transform lives here (rather than using the stdlib's gauss) so that
    traces stay byte-identical across interpreter versions.
    """

    def __init__(self, seed: int):
        self._uniform = random.Random(seed).random
        self._spare: float | None = None

    def next(self, sigma: float) -> float:
        if sigma == 0.0:
            return 0.0
        if self._spare is not None:
            value = self._spare
            self._spare = None
            return sigma * value
        while True:
            u = 2.0 * self._uniform() - 1.0
            v = 2.0 * self._uniform() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        factor = math.sqrt(-2.0 * math.log(s) / s)
        self._spare = v * factor
        return sigma * u * factor


def _synth_address(index: int) -> bytes:
    # Static random address pattern: top two bits of the MSB set.
    return bytes((0xC0, 0xFF, 0xEE, 0x00, (index >> 8) & 0xFF, index & 0xFF))


def _synth_adv_data(tx_power_dbm: int) -> bytes:
    return bytes(
        (
            0x02, hci_codec.AD_TYPE_FLAGS, 0x06,
            0x02, hci_codec.AD_TYPE_TX_POWER, tx_power_dbm & 0xFF,
        )
    )


def synth_trace(spec: ScenarioSpec) -> list[tuple[int, AdvReport]]:
    """Generate (timestamp_us, report) pairs for a synthetic session.

    RSSI per report: reference at 1 m, minus the log-distance term, plus the
    channel's interference offset, plus Gaussian noise; rounded and clamped
    to the signed 8-bit wire range.
    """
    noise = _GaussianSource(spec.seed)
    path_rssi = spec.path_loss.reference_rssi_at_1m - 10.0 * spec.path_loss.path_loss_exponent * math.log10(spec.true_distance_m)
    adv_data = _synth_adv_data(spec.tx_power_dbm)

    trace = []
    timestamp = SYNTH_BASE_TIMESTAMP_US
    for advertiser in range(spec.advertiser_count):
        address = _synth_address(advertiser)
        for channel in BLE_ADV_CHANNELS:
            raw = hci_codec.compose_event_type(ADV_IND, channel - 37, 0, False)
            event_type = hci_codec.decode_event_type(raw, DecodeMode.ENHANCED)
            offset = spec.per_channel_offset_db.get(channel, 0.0)
            for _ in range(spec.reports_per_channel):
                rssi = path_rssi + offset + noise.next(spec.noise_sigma_db)
                trace.append(
                    (
                        timestamp,
                        AdvReport(
                            event_type=event_type,
                            address_type=0x01,
                            address=address,
                            adv_data=adv_data,
                            rssi_dbm=max(-128, min(127, round(rssi))),
                        ),
                    )
                )
                timestamp += SYNTH_STEP_US
    return trace


def trace_to_capture_records(trace: Iterable[tuple[int, AdvReport]]) -> list[CaptureRecord]:
    """Wrap each synthetic report as a controller-to-host Event record."""
    return [
        CaptureRecord(
            timestamp_us=timestamp,
            direction=Direction.CONTROLLER_TO_HOST,
            packet_kind=H4_EVENT,
            payload=hci_codec.serialize_adv_report_event(AdvReportEvent([report])),
        )
        for timestamp, report in trace
    ]


def collect_adv_reports(
    records: Iterable[CaptureRecord], mode: DecodeMode
) -> tuple[list[tuple[int, AdvReport]], list[str]]:
    """Pull advertising reports out of capture records.

    Event records that fail to decode are never dropped silently; each one
    contributes a note describing the failure. Non-event records and events
    of other types pass through untouched.
    """
    reports: list[tuple[int, AdvReport]] = []
    failures: list[str] = []
    for index, record in enumerate(records):
        if record.packet_kind != H4_EVENT:
            continue
        try:
            packet = hci_codec.parse_hci_event(record.payload)
        except ParseError as exc:
            failures.append(f"record {index}: {exc}")
            continue
        if packet.event_code != hci_codec.LE_META_EVENT:
            continue
        if not packet.params or packet.params[0] != hci_codec.ADV_REPORT_SUBEVENT:
            continue
        try:
            event = hci_codec.parse_le_adv_report(packet, mode)
        except ParseError as exc:
            failures.append(f"record {index}: {exc}")
            continue
        reports.extend((record.timestamp_us, report) for report in event.reports)
    return reports, failures
