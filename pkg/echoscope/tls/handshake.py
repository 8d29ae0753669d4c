"""
ClientHello/ServerHello parsing and ClientHello serialization.

serialize_client_hello(parse_client_hello(b)) == b for every well-formed
ClientHello message: all fields, extension order and raw extension bodies
are kept.
"""

from typing import List, Sequence, Tuple

from echoscope.constants import (
    EXT_KEY_SHARE,
    EXT_SUPPORTED_VERSIONS,
    HANDSHAKE_CERTIFICATE,
    HANDSHAKE_CLIENT_HELLO,
    HANDSHAKE_SERVER_HELLO,
    VERSION_TLS1_3,
)
from echoscope.exception.exception import (
    MalformedExtension,
    MalformedHandshake,
    NoServerHello,
    NotClientHello,
)
from echoscope.logging.logger import get_logger
from echoscope.tls.codec import Reader, read_u16_list, u8, u16, u16_list, u24, vec8, vec16
from echoscope.tls.extensions import Extension, decode_selected_version, decode_server_key_share
from echoscope.tls.messages import TlsClientHello, TlsRecord, TlsServerHello
from echoscope.tls.records import collect_handshake_bytes

logger = get_logger(__name__)

HANDSHAKE_HEADER_LEN = 4


def split_handshake_messages(data: bytes) -> Tuple[List[Tuple[int, bytes]], bytes]:
    """
    Split concatenated handshake bytes into (msg_type, body) pairs.

    An incomplete trailing message is returned untouched as the remainder.
    """
    messages = []
    pos = 0
    while pos + HANDSHAKE_HEADER_LEN <= len(data):
        msg_type = data[pos]
        length = int.from_bytes(data[pos + 1:pos + 4], "big")
        end = pos + HANDSHAKE_HEADER_LEN + length
        if end > len(data):
            break
        messages.append((msg_type, data[pos + HANDSHAKE_HEADER_LEN:end]))
        pos = end
    return messages, data[pos:]


def _parse_extensions(reader: Reader) -> Tuple[Tuple[Extension, ...], bool]:
    if reader.at_end():
        return (), False

    block = Reader(reader.vec16("extensions"), MalformedExtension, reader.base_offset + reader.pos)
    if not reader.at_end():
        raise MalformedExtension(
            f"{reader.remaining} bytes after the extensions block",
            offset=reader.base_offset + reader.pos,
        )

    extensions = []
    while not block.at_end():
        ext_type = block.u16("extension type")
        ext_data = block.vec16("extension data")
        extensions.append(Extension(ext_type, ext_data))
    return tuple(extensions), True


def parse_client_hello(record_payload: bytes) -> TlsClientHello:
    """
    Parse the ClientHello at the start of `record_payload`.

    The payload may hold more handshake messages after the hello; they are
    ignored. A hello longer than the payload is malformed.
    """
    data = bytes(record_payload)
    if not data or data[0] != HANDSHAKE_CLIENT_HELLO:
        found = data[0] if data else None
        raise NotClientHello(f"handshake type {found} is not ClientHello", offset=0)

    header = Reader(data, MalformedHandshake)
    header.u8("msg_type")
    length = header.u24("length")
    body = Reader(header.raw(length, "client_hello body"), MalformedHandshake, HANDSHAKE_HEADER_LEN)

    legacy_version = body.u16("legacy_version")
    random = body.raw(32, "random")
    session_id = body.vec8("legacy_session_id")
    if len(session_id) > 32:
        raise MalformedHandshake(f"session id of {len(session_id)} bytes", offset=HANDSHAKE_HEADER_LEN + 34)
    cipher_suites = read_u16_list(body.vec16("cipher_suites"), MalformedHandshake, "cipher_suites")
    compression_methods = body.vec8("legacy_compression_methods")
    extensions, has_block = _parse_extensions(body)

    hello = TlsClientHello(
        legacy_version=legacy_version,
        random=random,
        session_id=session_id,
        cipher_suites=cipher_suites,
        compression_methods=compression_methods,
        extensions=extensions,
        has_extensions_block=has_block,
    )
    logger.debug(f"ClientHello sni={hello.sni} version={hello.effective_version.label} exts={len(extensions)}")
    return hello


def serialize_client_hello(hello: TlsClientHello) -> bytes:
    body = (
        u16(hello.legacy_version)
        + hello.random
        + vec8(hello.session_id)
        + vec16(u16_list(hello.cipher_suites))
        + vec8(hello.compression_methods)
    )
    if hello.has_extensions_block:
        body += vec16(b"".join(ext.encode() for ext in hello.extensions))
    return u8(HANDSHAKE_CLIENT_HELLO) + u24(len(body)) + body


def _parse_server_hello_body(body: bytes) -> TlsServerHello:
    reader = Reader(body, MalformedHandshake, HANDSHAKE_HEADER_LEN)
    legacy_version = reader.u16("legacy_version")
    reader.raw(32, "random")
    reader.vec8("legacy_session_id_echo")
    cipher = reader.u16("cipher_suite")
    reader.u8("legacy_compression_method")
    extensions, _ = _parse_extensions(reader)

    selected = None
    group = None
    for ext in extensions:
        if ext.type == EXT_SUPPORTED_VERSIONS:
            selected = decode_selected_version(ext.data)
        elif ext.type == EXT_KEY_SHARE:
            group = decode_server_key_share(ext.data)

    return TlsServerHello(
        legacy_version=legacy_version,
        selected_cipher=cipher,
        supported_versions_selected=selected,
        key_share_group=group,
    )


def parse_server_hello(flow_direction_records: Sequence[TlsRecord]) -> TlsServerHello:
    """
    Find the ServerHello in the server->client records and note whether a
    Certificate message follows in plain text before encryption starts.
    """
    handshake_bytes, _ = collect_handshake_bytes(flow_direction_records)
    messages, remainder = split_handshake_messages(handshake_bytes)

    server_hello = None
    types_in_clear = []
    certificate_seen = False
    for msg_type, body in messages:
        types_in_clear.append(msg_type)
        if msg_type == HANDSHAKE_SERVER_HELLO and server_hello is None:
            server_hello = _parse_server_hello_body(body)
        elif msg_type == HANDSHAKE_CERTIFICATE and server_hello is not None:
            certificate_seen = True

    # A certificate split past the capture cap still counts as in clear
    if remainder and remainder[0] == HANDSHAKE_CERTIFICATE and server_hello is not None:
        types_in_clear.append(HANDSHAKE_CERTIFICATE)
        certificate_seen = True

    if server_hello is None:
        raise NoServerHello("direction carries no ServerHello")

    in_clear = certificate_seen and server_hello.negotiated_version_code < VERSION_TLS1_3
    if certificate_seen and not in_clear:
        logger.debug("Certificate message next to a TLS 1.3 ServerHello ignored")

    return TlsServerHello(
        legacy_version=server_hello.legacy_version,
        selected_cipher=server_hello.selected_cipher,
        supported_versions_selected=server_hello.supported_versions_selected,
        key_share_group=server_hello.key_share_group,
        certificate_in_clear=in_clear,
        handshake_types_in_clear=tuple(types_in_clear),
    )


def client_hello_from_records(records: Sequence[TlsRecord]) -> TlsClientHello:
    """Parse a ClientHello that may span several handshake records."""
    handshake_bytes, _ = collect_handshake_bytes(records)
    return parse_client_hello(handshake_bytes)
