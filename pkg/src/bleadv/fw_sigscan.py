"""Byte-signature scanning over raw firmware images.

The scan is pure byte matching with an optional mask and an alignment
(default 2, the Thumb halfword). Short instruction snippets are near-unique
in megabyte-scale images, which is what makes them usable for locating a
known function across firmware builds without symbols;
``expected_random_matches`` quantifies that.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyImage, EmptyPattern, OutOfRange

DEFAULT_ALIGNMENT = 2
CONTEXT_BYTES = 16

# The scan task handler contains `mov.w r0, #0x650000`, Thumb-2 halfwords
# F44F 00CA, stored little-endian.
SCAN_TASK_SIGNATURE_NAME = "scanTaskRxHeaderDone-movw"
SCAN_TASK_PATTERN = bytes.fromhex("4ff4ca00")

FLAG_PATCH_BYTES = b"\x01"


@dataclass(frozen=True)
class Signature:
    name: str
    pattern: bytes
    mask: bytes | None = None
    alignment: int = DEFAULT_ALIGNMENT

    def __post_init__(self):
        if len(self.pattern) == 0:
            raise EmptyPattern(f"signature {self.name!r} has an empty pattern")
        if len(self.pattern) < 2:
            raise OutOfRange(f"signature {self.name!r}: pattern must be at least 2 bytes")
        if self.mask is not None and len(self.mask) != len(self.pattern):
            raise OutOfRange(
                f"signature {self.name!r}: mask length {len(self.mask)} "
                f"!= pattern length {len(self.pattern)}"
            )
        if self.alignment < 1:
            raise OutOfRange(f"signature {self.name!r}: alignment must be >= 1")


@dataclass(frozen=True)
class SignatureMatch:
    signature_name: str
    offset: int
    surrounding: bytes


@dataclass(frozen=True)
class PatchDescriptor:
    address: int
    patch_bytes: bytes
    comment: str


def _context(image: bytes, offset: int) -> bytes:
    start = min(max(offset - 4, 0), max(len(image) - CONTEXT_BYTES, 0))
    return bytes(image[start:start + CONTEXT_BYTES])


def _scan_one(image: bytes, sig: Signature) -> list[SignatureMatch]:
    if len(sig.pattern) == 0:
        raise EmptyPattern(f"signature {sig.name!r} has an empty pattern")
    matches = []
    if sig.mask is None:
        pos = image.find(sig.pattern)
        while pos != -1:
            if pos % sig.alignment == 0:
                matches.append(SignatureMatch(sig.name, pos, _context(image, pos)))
            pos = image.find(sig.pattern, pos + 1)
        return matches

    want = bytes(p & m for p, m in zip(sig.pattern, sig.mask))
    length = len(sig.pattern)
    for pos in range(0, len(image) - length + 1, sig.alignment):
        window = image[pos:pos + length]
        if all((b & m) == w for b, m, w in zip(window, sig.mask, want)):
            matches.append(SignatureMatch(sig.name, pos, _context(image, pos)))
    return matches


def scan_signatures(image: bytes, signatures: list[Signature]) -> list[SignatureMatch]:
    """All aligned, mask-satisfying offsets for every signature.

    Overlapping matches are all reported. Results are ordered by offset,
    then signature name.
    """
    if len(image) == 0:
        raise EmptyImage("cannot scan an empty image")
    matches: list[SignatureMatch] = []
    for sig in signatures:
        matches.extend(_scan_one(image, sig))
    matches.sort(key=lambda m: (m.offset, m.signature_name))
    return matches


def expected_random_matches(image_len: int, sig_len: int, alignment: int = DEFAULT_ALIGNMENT) -> float:
    """Expected chance hits of one signature in a uniform-random image."""
    if sig_len < 1:
        raise OutOfRange("signature length must be >= 1")
    if alignment < 1:
        raise OutOfRange("alignment must be >= 1")
    if image_len < sig_len:
        return 0.0
    positions = (image_len - sig_len) // alignment + 1
    return positions * 256.0 ** (-sig_len)


def make_flag_patch(address: int) -> PatchDescriptor:
    """One-byte patch that turns the per-advertisement channel reporting on."""
    if not 0 <= address <= 0xFFFFFFFF:
        raise OutOfRange(f"address must fit in 32 bits, got {address:#x}")
    comment = "bEnhancedAdvReport = 1"
    if address == 0:
        comment += " (zero address: fill in the real location)"
    return PatchDescriptor(address=address, patch_bytes=FLAG_PATCH_BYTES, comment=comment)


def builtin_signatures() -> list[Signature]:
    """Signatures shipped with the tool; see the README for the catalogue."""
    return [
        Signature(
            name=SCAN_TASK_SIGNATURE_NAME,
            pattern=SCAN_TASK_PATTERN,
            alignment=DEFAULT_ALIGNMENT,
        )
    ]


def load_signatures(text: str) -> list[Signature]:
    """Parse the tab-separated signature list format.

    Per line: ``name<TAB>hexpattern[<TAB>hexmask][<TAB>alignment]``.
    Blank lines and lines starting with ``#`` are skipped.
    """
    signatures = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if not 2 <= len(fields) <= 4:
            raise ValueError(f"line {lineno}: expected 2..4 tab-separated fields")
        name = fields[0].strip()
        try:
            pattern = bytes.fromhex(fields[1])
            mask = bytes.fromhex(fields[2]) if len(fields) >= 3 else None
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad hex field: {exc}") from exc
        if len(fields) >= 4:
            try:
                alignment = int(fields[3])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: bad alignment: {exc}") from exc
        else:
            alignment = DEFAULT_ALIGNMENT
        signatures.append(Signature(name=name, pattern=pattern, mask=mask, alignment=alignment))
    return signatures


def format_match(match: SignatureMatch) -> str:
    return f"{match.signature_name} 0x{match.offset:08x} {match.surrounding.hex()}"


def format_patch(patch: PatchDescriptor) -> str:
    return f"{patch.address:08x} {patch.patch_bytes.hex()} {patch.comment}"
