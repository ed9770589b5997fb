"""BLE advertising-report decoding, channel-aware RSSI analytics, and
firmware signature scanning."""

from .adv_analytics import (
    BlacklistParams,
    PathLossParams,
    ScenarioSpec,
    SessionStats,
    adjusted_rssi,
    channel_aware_estimate,
    collect_adv_reports,
    detect_interference,
    estimate_distance,
    ingest_report,
    synth_trace,
    trace_to_capture_records,
    wifi_overlap,
)
from .capture_io import (
    CaptureFileInfo,
    CaptureFormat,
    CaptureRecord,
    Direction,
    detect_format,
    iter_btsnoop,
    iter_pklg,
    read_btsnoop,
    read_pklg,
    stream_h4,
    write_btsnoop,
)
from .fw_sigscan import (
    PatchDescriptor,
    Signature,
    SignatureMatch,
    builtin_signatures,
    expected_random_matches,
    load_signatures,
    make_flag_patch,
    scan_signatures,
)
from .hci_codec import (
    AdStructure,
    AdvReport,
    AdvReportEvent,
    DecodeMode,
    EnhancedEventType,
    HciEventPacket,
    compose_event_type,
    decode_event_type,
    extract_tx_power,
    parse_adv_data,
    parse_hci_event,
    parse_le_adv_report,
    serialize_adv_report_event,
)

__version__ = "0.1.0"
