"""
TLS record layer: framing and the total, never-raising record parser.
"""

import struct
from typing import Iterable, List, Tuple

from echoscope.constants import (
    CONTENT_APPLICATION_DATA,
    CONTENT_CHANGE_CIPHER_SPEC,
    CONTENT_HANDSHAKE,
    MAX_RECORD_FRAGMENT,
    MAX_RECORD_PAYLOAD,
    RECORD_HEADER_LEN,
    VERSION_TLS1_0,
)
from echoscope.exception.exception import NotTls, TruncatedRecord
from echoscope.logging.logger import get_logger
from echoscope.tls.messages import ContentType, RecordParseResult, TlsRecord

logger = get_logger(__name__)


def is_plausible_header(header: bytes) -> bool:
    """Major version 3, minor at most 4, length within the ciphertext limit."""
    if len(header) < RECORD_HEADER_LEN:
        return False
    _, major, minor, length = struct.unpack("!BBBH", header[:RECORD_HEADER_LEN])
    return major == 3 and minor <= 4 and length <= MAX_RECORD_PAYLOAD


def find_handshake_start(stream: bytes, start: int = 0) -> int:
    """Offset of the first plausible handshake record header, or -1."""
    offset = start - 1
    while (offset := stream.find(b"\x16\x03", offset + 1)) != -1:
        if is_plausible_header(stream[offset:offset + RECORD_HEADER_LEN]):
            return offset
    return -1


def parse_records(stream: bytes, resync: bool = False) -> RecordParseResult:
    """
    Parse the maximal prefix of well-formed records.

    Never raises: a stream ending mid-record yields TruncatedRecord and a
    header that cannot be TLS yields NotTls, both as the result's `error`,
    together with the records parsed so far and the offset where parsing
    stopped. With `resync`, parsing starts at the first plausible handshake
    record header instead of byte 0.
    """
    stream = bytes(stream)
    offset = 0

    if resync:
        start = find_handshake_start(stream)
        if start == -1:
            return RecordParseResult((), 0, NotTls("no handshake record header found", offset=0))
        offset = start

    records: List[TlsRecord] = []
    while offset < len(stream):
        header = stream[offset:offset + RECORD_HEADER_LEN]
        if len(header) < RECORD_HEADER_LEN:
            if not records and not is_plausible_prefix(header):
                return RecordParseResult(tuple(records), offset, NotTls("not a TLS record header", offset=offset))
            return RecordParseResult(
                tuple(records), offset,
                TruncatedRecord(f"stream ends inside a record header ({len(header)} bytes)", offset=offset),
            )

        if not is_plausible_header(header):
            return RecordParseResult(tuple(records), offset, NotTls("not a TLS record header", offset=offset))

        type_code, version, length = struct.unpack("!BHH", header)
        payload = stream[offset + RECORD_HEADER_LEN:offset + RECORD_HEADER_LEN + length]
        if len(payload) < length:
            return RecordParseResult(
                tuple(records), offset,
                TruncatedRecord(f"record needs {length} payload bytes, {len(payload)} present", offset=offset),
            )

        records.append(TlsRecord(
            content_type=ContentType.from_code(type_code),
            legacy_record_version=version,
            payload=payload,
            offset=offset,
            type_code=type_code,
        ))
        offset += RECORD_HEADER_LEN + length

    logger.debug(f"Parsed {len(records)} records ({offset} bytes)")
    return RecordParseResult(tuple(records), offset, None)


def is_plausible_prefix(header: bytes) -> bool:
    """Could these (fewer than five) bytes start a record header?"""
    if header and not CONTENT_CHANGE_CIPHER_SPEC <= header[0] <= CONTENT_APPLICATION_DATA:
        return False
    if len(header) >= 2 and header[1] != 3:
        return False
    if len(header) >= 3 and header[2] > 4:
        return False
    return True


def serialize_record(record: TlsRecord) -> bytes:
    return struct.pack("!BHH", record.type_code, record.legacy_record_version, len(record.payload)) + record.payload


def frame_records(
    content_type: int,
    payload: bytes,
    version: int = VERSION_TLS1_0,
    max_fragment: int = MAX_RECORD_FRAGMENT
) -> bytes:
    """Wrap `payload` into as many records as the fragment limit requires."""
    if not payload:
        return struct.pack("!BHH", content_type, version, 0)
    chunks = [payload[i:i + max_fragment] for i in range(0, len(payload), max_fragment)]
    return b"".join(struct.pack("!BHH", content_type, version, len(c)) + c for c in chunks)


def collect_handshake_bytes(records: Iterable[TlsRecord]) -> Tuple[bytes, int]:
    """
    Concatenate the leading plain-text handshake records.

    Stops at the first ChangeCipherSpec or ApplicationData record: everything
    after it is encrypted. Returns the bytes and how many records were used.
    """
    chunks = []
    used = 0
    for record in records:
        if record.content_type is ContentType.HANDSHAKE:
            chunks.append(record.payload)
            used += 1
            continue
        if record.content_type is ContentType.ALERT:
            used += 1
            continue
        break
    return b"".join(chunks), used


def starts_with_handshake(stream: bytes) -> bool:
    return len(stream) >= 1 and stream[0] == CONTENT_HANDSHAKE and is_plausible_prefix(stream[:RECORD_HEADER_LEN])
