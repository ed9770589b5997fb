import io
import math
import random
import statistics

import pytest

from bleadv import adv_analytics as aa
from bleadv import capture_io as cio
from bleadv import hci_codec as hc
from bleadv.errors import NoSamples, OutOfRange

from _samples import SAMPLE_ADDRESS, SAMPLE_ADV_PACKET

ENHANCED = hc.DecodeMode.ENHANCED


def report_on(channel: int, rssi: int, address: bytes = b"\xca\xfe\xba\xbe\x13\x37"):
    raw = hc.compose_event_type(hc.ADV_IND, channel - 37, 0, False)
    return hc.AdvReport(
        event_type=hc.decode_event_type(raw, ENHANCED),
        address_type=0x01,
        address=address,
        adv_data=b"",
        rssi_dbm=rssi,
    )


def stats_from(samples: dict[int, list[int]]) -> aa.SessionStats:
    stats = aa.SessionStats()
    for channel, values in samples.items():
        for rssi in values:
            stats.ingest(report_on(channel, rssi))
    return stats


# --- ingest -------------------------------------------------------------------

def test_ingest_sample_report():
    evt = hc.parse_le_adv_report(hc.parse_hci_event(SAMPLE_ADV_PACKET), ENHANCED)
    stats = aa.SessionStats()
    aa.ingest_report(stats, evt.reports[0], timestamp_us=42)
    device = stats.devices[SAMPLE_ADDRESS]
    assert len(device.channels[37]) == 1
    cell = stats.cells()[0]
    assert (cell.channel, cell.count, cell.mean) == (37, 1, -56.0)


def test_ingest_same_report_twice():
    evt = hc.parse_le_adv_report(hc.parse_hci_event(SAMPLE_ADV_PACKET), ENHANCED)
    stats = aa.SessionStats()
    stats.ingest(evt.reports[0]).ingest(evt.reports[0])
    cell = stats.cells()[0]
    assert cell.count == 2
    assert cell.stddev == 0.0


def test_ingest_unmapped_channel_bucketed():
    raw = hc.compose_event_type(hc.ADV_IND, 5, 0, False)
    report = hc.AdvReport(
        event_type=hc.decode_event_type(raw, ENHANCED),
        address_type=1,
        address=b"\x01\x02\x03\x04\x05\x06",
        adv_data=b"",
        rssi_dbm=-60,
    )
    stats = aa.SessionStats()
    stats.ingest(report)
    device = stats.devices["01:02:03:04:05:06"]
    assert device.unknown_channel == [-60]
    assert all(not device.channels[ch] for ch in aa.BLE_ADV_CHANNELS)
    assert stats.cells()[0].channel is None


def test_count_conservation_randomized():
    rng = random.Random(77)
    stats = aa.SessionStats()
    ingested = 0
    for _ in range(500):
        channel = rng.choice((37, 38, 39))
        address = bytes(rng.randrange(256) for _ in range(6))
        stats.ingest(report_on(channel, rng.randint(-100, -30), address))
        ingested += 1
    assert stats.total_reports == ingested
    assert sum(cell.count for cell in stats.cells()) == ingested


def test_cell_statistics_match_brute_force():
    values = [-50, -52, -57, -49, -61, -50]
    stats = stats_from({37: values})
    cell = stats.cells()[0]
    assert cell.mean == sum(values) / len(values)
    assert cell.median == statistics.median(values)
    mean = sum(values) / len(values)
    naive_stddev = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    assert cell.stddev == pytest.approx(naive_stddev, rel=1e-12)


# --- interference blacklisting ---------------------------------------------------

def test_blacklist_interfered_channel():
    stats = stats_from(
        {
            37: [-55, -55, -55, -55, -55],
            38: [-80, -80, -80, -80, -80],
            39: [-56, -56, -56, -56, -56],
        }
    )
    decision = aa.detect_interference(stats, aa.BlacklistParams(5, 10.0))
    assert decision.channels == {38}
    by_channel = {ev.channel: ev for ev in decision.evidence}
    assert by_channel[38].blacklisted
    assert by_channel[38].margin_db == 25.0
    assert by_channel[37].margin_db == pytest.approx(-1.0)


def test_blacklist_equal_medians_empty():
    stats = stats_from({ch: [-60] * 6 for ch in (37, 38, 39)})
    assert aa.detect_interference(stats).channels == frozenset()


def test_blacklist_single_channel_insufficient_basis():
    stats = stats_from({37: [-60] * 10})
    assert aa.detect_interference(stats).channels == frozenset()


def test_blacklist_respects_min_samples():
    stats = stats_from({37: [-55] * 5, 38: [-90] * 4, 39: [-56] * 5})
    decision = aa.detect_interference(stats, aa.BlacklistParams(5, 10.0))
    assert decision.channels == frozenset()
    by_channel = {ev.channel: ev for ev in decision.evidence}
    assert not by_channel[38].eligible


def test_blacklist_margin_must_exceed_threshold():
    stats = stats_from({37: [-55] * 5, 38: [-65] * 5, 39: [-55] * 5})
    assert aa.detect_interference(stats, aa.BlacklistParams(5, 10.0)).channels == frozenset()
    assert aa.detect_interference(stats, aa.BlacklistParams(5, 9.5)).channels == {38}


def test_blacklist_at_most_one_channel():
    stats = stats_from({37: [-55] * 5, 38: [-90] * 5, 39: [-80] * 5})
    decision = aa.detect_interference(stats, aa.BlacklistParams(5, 10.0))
    assert decision.channels == {38}


def test_blacklist_tie_for_worst_blacklists_nothing():
    stats = stats_from({37: [-55] * 5, 38: [-90] * 5, 39: [-90] * 5})
    assert aa.detect_interference(stats, aa.BlacklistParams(5, 10.0)).channels == frozenset()


def test_blacklist_pools_devices():
    stats = aa.SessionStats()
    for index in range(5):
        address = bytes((0, 0, 0, 0, 0, index))
        stats.ingest(report_on(37, -55, address))
        stats.ingest(report_on(38, -80, address))
        stats.ingest(report_on(39, -56, address))
    decision = aa.detect_interference(stats)
    assert decision.channels == {38}


def test_blacklist_params_validation():
    with pytest.raises(OutOfRange):
        aa.BlacklistParams(deviation_threshold_db=-1.0)


# --- RSSI adjustment and distance -------------------------------------------------

def test_adjusted_rssi_identity():
    assert aa.adjusted_rssi(-56, 4, 4) == -56


def test_adjusted_rssi_examples():
    assert aa.adjusted_rssi(-56, 4, 0) == -60
    assert aa.adjusted_rssi(-60, -8, 0) == -52


def test_adjusted_rssi_linear_in_tx_power():
    for tx in range(-20, 21, 5):
        assert aa.adjusted_rssi(-60, tx + 1, 0) == aa.adjusted_rssi(-60, tx, 0) - 1


def test_estimate_distance_reference_is_one_meter():
    for exponent in (0.5, 1.0, 2.0, 3.7):
        params = aa.PathLossParams(-56.0, exponent)
        assert aa.estimate_distance(-56.0, params) == 1.0


def test_estimate_distance_examples():
    params = aa.PathLossParams(-56.0, 2.0)
    assert aa.estimate_distance(-76.0, params) == pytest.approx(10.0, rel=1e-12)
    assert aa.estimate_distance(-66.0, params) == pytest.approx(math.sqrt(10.0), rel=1e-12)


def test_estimate_distance_strictly_decreasing():
    params = aa.PathLossParams(-56.0, 2.0)
    distances = [aa.estimate_distance(rssi, params) for rssi in range(-100, 0)]
    assert all(a > b for a, b in zip(distances, distances[1:]))


def test_path_loss_params_validation():
    with pytest.raises(OutOfRange):
        aa.PathLossParams(-56.0, 0.0)


# --- Wi-Fi overlap ------------------------------------------------------------------

def test_wifi_overlap_examples():
    assert aa.wifi_overlap(1) == {37}
    assert aa.wifi_overlap(6) == {38}
    assert aa.wifi_overlap(11) == frozenset()


def test_wifi_overlap_out_of_range():
    with pytest.raises(OutOfRange):
        aa.wifi_overlap(0)
    with pytest.raises(OutOfRange):
        aa.wifi_overlap(15)


def test_wifi_overlap_never_more_than_two():
    for channel in range(1, 15):
        assert len(aa.wifi_overlap(channel)) <= 2


def test_wifi_overlap_matches_frequency_arithmetic():
    for channel in range(1, 15):
        center = 2484 if channel == 14 else 2412 + 5 * (channel - 1)
        expected = {
            ble
            for ble, mhz in ((37, 2402), (38, 2426), (39, 2480))
            if abs(mhz - center) <= 11
        }
        assert aa.wifi_overlap(channel) == expected


# --- channel-aware estimation ---------------------------------------------------------

def test_estimate_single_channel():
    stats = stats_from({37: [-56] * 4})
    estimate = aa.channel_aware_estimate(
        stats, SAMPLE_ADDRESS, aa.PathLossParams(-56.0, 2.0)
    )
    assert estimate.distance_m == 1.0
    assert estimate.used_channels == {37}
    assert estimate.sample_count == 4


def test_estimate_blacklist_filters_channels():
    stats = stats_from({37: [-56] * 3, 38: [-90] * 3, 39: [-56] * 3})
    estimate = aa.channel_aware_estimate(
        stats, SAMPLE_ADDRESS, aa.PathLossParams(-56.0, 2.0), {38}
    )
    assert estimate.used_channels == {37, 39}
    assert estimate.sample_count == 6
    assert estimate.distance_m == 1.0


def test_estimate_no_samples():
    stats = aa.SessionStats()
    with pytest.raises(NoSamples):
        aa.channel_aware_estimate(stats, "AA:BB:CC:DD:EE:FF", aa.PathLossParams(-56.0))
    stats2 = stats_from({37: [-56] * 3})
    with pytest.raises(NoSamples):
        aa.channel_aware_estimate(
            stats2, SAMPLE_ADDRESS, aa.PathLossParams(-56.0), {37}
        )


# --- synthetic traces -------------------------------------------------------------------

def test_synth_trace_deterministic():
    spec = aa.ScenarioSpec(seed=99, noise_sigma_db=3.0, per_channel_offset_db={39: -5.0})
    again = aa.ScenarioSpec(seed=99, noise_sigma_db=3.0, per_channel_offset_db={39: -5.0})
    assert aa.synth_trace(spec) == aa.synth_trace(again)


def test_synth_trace_seed_changes_trace():
    base = aa.ScenarioSpec(seed=1, noise_sigma_db=3.0)
    other = aa.ScenarioSpec(seed=2, noise_sigma_db=3.0)
    assert aa.synth_trace(base) != aa.synth_trace(other)


def test_synth_trace_noiseless_at_reference_distance():
    spec = aa.ScenarioSpec(
        seed=5,
        true_distance_m=1.0,
        path_loss=aa.PathLossParams(-56.0, 2.0),
        noise_sigma_db=0.0,
        reports_per_channel=10,
    )
    trace = aa.synth_trace(spec)
    assert len(trace) == 30
    assert all(report.rssi_dbm == -56 for _ts, report in trace)


def test_synth_trace_channel_composition():
    spec = aa.ScenarioSpec(seed=5, reports_per_channel=2)
    trace = aa.synth_trace(spec)
    channels = [report.event_type.ble_channel() for _ts, report in trace]
    assert channels == [37, 37, 38, 38, 39, 39]
    raws = {report.event_type.raw for _ts, report in trace}
    assert raws == {0x00, 0x10, 0x20}


def test_synth_trace_carries_tx_power():
    spec = aa.ScenarioSpec(seed=5, tx_power_dbm=-8, reports_per_channel=1)
    _ts, report = aa.synth_trace(spec)[0]
    structures = hc.parse_adv_data(report.adv_data)
    assert hc.extract_tx_power(structures) == -8


def test_synth_trace_advertiser_count_and_timestamps():
    spec = aa.ScenarioSpec(seed=5, advertiser_count=3, reports_per_channel=4)
    trace = aa.synth_trace(spec)
    assert len(trace) == 3 * 3 * 4
    timestamps = [ts for ts, _report in trace]
    assert timestamps == sorted(timestamps)
    addresses = {report.address_str() for _ts, report in trace}
    assert len(addresses) == 3


def test_synth_trace_interference_detected():
    spec = aa.ScenarioSpec(
        seed=11,
        per_channel_offset_db={38: -20.0},
        noise_sigma_db=2.0,
        reports_per_channel=100,
    )
    stats = aa.SessionStats()
    for ts, report in aa.synth_trace(spec):
        stats.ingest(report, ts)
    assert aa.detect_interference(stats).channels == {38}


def test_scenario_spec_validation():
    with pytest.raises(OutOfRange):
        aa.ScenarioSpec(true_distance_m=0.0)
    with pytest.raises(OutOfRange):
        aa.ScenarioSpec(noise_sigma_db=-1.0)
    with pytest.raises(OutOfRange):
        aa.ScenarioSpec(per_channel_offset_db={40: -3.0})
    with pytest.raises(OutOfRange):
        aa.ScenarioSpec(advertiser_count=0)


# --- capture bridging ----------------------------------------------------------------------

def test_trace_to_capture_records_round_trip():
    spec = aa.ScenarioSpec(seed=8, reports_per_channel=3)
    trace = aa.synth_trace(spec)
    records = aa.trace_to_capture_records(trace)
    assert all(r.packet_kind == cio.H4_EVENT for r in records)
    sink = io.BytesIO()
    cio.write_btsnoop(records, sink)
    _info, back = cio.read_btsnoop(io.BytesIO(sink.getvalue()))
    reports, failures = aa.collect_adv_reports(back, ENHANCED)
    assert failures == []
    assert [(ts, r) for ts, r in reports] == trace


def test_collect_adv_reports_ignores_other_traffic():
    records = [
        cio.CaptureRecord(0, cio.Direction.HOST_TO_CONTROLLER, cio.H4_COMMAND, b"\x03\x0c\x00"),
        cio.CaptureRecord(1, cio.Direction.CONTROLLER_TO_HOST, cio.H4_EVENT, b"\x0e\x01\xaa"),
        cio.CaptureRecord(
            2, cio.Direction.CONTROLLER_TO_HOST, cio.H4_EVENT, SAMPLE_ADV_PACKET
        ),
    ]
    reports, failures = aa.collect_adv_reports(records, ENHANCED)
    assert failures == []
    assert len(reports) == 1
    assert reports[0][0] == 2


def test_collect_adv_reports_notes_decode_failures():
    records = [
        cio.CaptureRecord(0, cio.Direction.CONTROLLER_TO_HOST, cio.H4_EVENT, b"\x3e"),
        cio.CaptureRecord(
            1, cio.Direction.CONTROLLER_TO_HOST, cio.H4_EVENT, SAMPLE_ADV_PACKET[:-1]
        ),
    ]
    reports, failures = aa.collect_adv_reports(records, ENHANCED)
    assert reports == []
    assert len(failures) == 2
    assert "record 0" in failures[0]
