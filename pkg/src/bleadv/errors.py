"""Exception types raised across the package.

Parsers raise a specific subclass per failure mode so callers can react to
(or test for) exactly the condition they care about. Everything derives from
``BleadvError``; wire-format violations additionally derive from
``ParseError`` (a ``ValueError``).
"""

from __future__ import annotations


class BleadvError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(BleadvError, ValueError):
    """Input bytes violate a wire format."""


# --- HCI event / advertising report codec ---------------------------------

class TooShort(ParseError):
    """Fewer bytes than the fixed HCI event header."""


class LengthMismatch(ParseError):
    """Byte count disagrees with a declared length field."""


class WrongEventCode(ParseError):
    """Event is not an LE meta event."""


class WrongSubevent(ParseError):
    """LE meta event is not an advertising report."""


class NumReportsZero(ParseError):
    """Advertising report event with zero reports (valid range is 1..25)."""


class Truncated(ParseError):
    """A declared field runs past the end of the available bytes."""


class MalformedTxPower(ParseError):
    """TX Power Level AD structure whose value is not exactly one byte."""


class TooManyReports(BleadvError, ValueError):
    """More than 25 reports in one advertising report event."""


class DataTooLong(BleadvError, ValueError):
    """Advertising data longer than the 31-byte limit."""


class ParamsOverflow(BleadvError, ValueError):
    """Serialized event parameters would exceed the one-byte length field."""


class OutOfRange(BleadvError, ValueError):
    """Argument outside its documented range."""


# --- Capture containers ----------------------------------------------------

class CaptureError(ParseError):
    """Capture container violation, positioned at a byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BadMagic(CaptureError):
    """Stream does not start with the btsnoop magic."""


class UnsupportedVersion(CaptureError):
    """btsnoop header version other than 1."""


class UnsupportedDatalink(CaptureError):
    """btsnoop datalink other than 1002 (H4)."""


class TruncatedRecord(CaptureError):
    """Capture record header or payload cut short."""


class BadRecordLength(CaptureError):
    """pklg record length field below the 9-byte minimum."""


class UnknownIndicator(CaptureError):
    """H4 stream byte that is not a known packet-kind indicator."""


class SinkFailure(BleadvError):
    """Writing capture output failed."""


# --- Firmware signature scanning -------------------------------------------

class EmptyPattern(BleadvError, ValueError):
    """Signature with an empty byte pattern."""


class EmptyImage(BleadvError, ValueError):
    """Scan requested over an empty firmware image."""


# --- Analytics --------------------------------------------------------------

class NoSamples(BleadvError, LookupError):
    """No usable RSSI samples for the requested device/channels."""
