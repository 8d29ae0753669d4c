"""
Constructors for hellos and server flights.

Used by the ECH model, the synthetic capture writer and the tests. Output
is deterministic: randoms and keys are derived from the inputs by SHA-256.
"""

import hashlib
from typing import Iterable, Optional, Sequence

from echoscope.constants import (
    CONTENT_APPLICATION_DATA,
    CONTENT_CHANGE_CIPHER_SPEC,
    CONTENT_HANDSHAKE,
    EXT_ALPN,
    EXT_KEY_SHARE,
    EXT_PRE_SHARED_KEY,
    EXT_SERVER_NAME,
    EXT_SUPPORTED_VERSIONS,
    GROUP_X25519,
    HANDSHAKE_CERTIFICATE,
    HANDSHAKE_SERVER_HELLO,
    VERSION_TLS1_0,
    VERSION_TLS1_2,
    VERSION_TLS1_3,
)
from echoscope.tls.codec import u8, u16, u24, vec8, vec16
from echoscope.tls.extensions import (
    Extension,
    encode_alpn,
    encode_key_share,
    encode_server_name,
    encode_supported_versions,
)
from echoscope.tls.handshake import serialize_client_hello
from echoscope.tls.messages import TlsClientHello
from echoscope.tls.records import frame_records

TLS13_SUITES = (0x1301, 0x1302, 0x1303)
TLS12_SUITES = (0xC02B, 0xC02F, 0xC02C, 0xC030, 0xCCA9, 0xCCA8, 0x009C, 0x002F)
HANDSHAKE_SERVER_HELLO_DONE = 14


def _digest(label: str, size: int = 32) -> bytes:
    out = b""
    counter = 0
    while len(out) < size:
        out += hashlib.sha256(f"{label}:{counter}".encode()).digest()
        counter += 1
    return out[:size]


def psk_extension_data(identity: bytes = b"ticket") -> bytes:
    identities = vec16(vec16(identity) + (0).to_bytes(4, "big"))
    binders = vec16(vec8(bytes(32)))
    return identities + binders


def make_client_hello(
    sni: Optional[str] = None,
    alpn: Optional[Sequence[str]] = None,
    versions: Optional[Sequence[int]] = None,
    key_share_groups: Sequence[int] = (),
    psk: bool = False,
    ech_extension: Optional[Extension] = None,
    grease: Optional[int] = None,
    extra_extensions: Iterable[Extension] = (),
    legacy_version: int = VERSION_TLS1_2,
    cipher_suites: Optional[Sequence[int]] = None,
    session_id: Optional[bytes] = None,
    random: Optional[bytes] = None,
) -> TlsClientHello:
    """
    Build a ClientHello. Leaving `versions` out produces a TLS 1.2 style hello
    without supported_versions; any TLS 1.3 hello must pass it.
    """
    label = f"{sni}|{versions}|{alpn}"
    suites = list(cipher_suites) if cipher_suites is not None else (
        list(TLS13_SUITES + TLS12_SUITES) if versions else list(TLS12_SUITES)
    )
    extensions = []
    if grease is not None:
        suites.insert(0, grease)
        extensions.append(Extension(grease, b""))
    if sni is not None:
        extensions.append(Extension(EXT_SERVER_NAME, encode_server_name(sni)))
    if alpn:
        extensions.append(Extension(EXT_ALPN, encode_alpn(alpn)))
    if versions:
        offered = ([grease] if grease is not None else []) + list(versions)
        extensions.append(Extension(EXT_SUPPORTED_VERSIONS, encode_supported_versions(offered)))
    if key_share_groups:
        shares = [(group, _digest(f"key:{label}:{group}")) for group in key_share_groups]
        extensions.append(Extension(EXT_KEY_SHARE, encode_key_share(shares)))
    extensions.extend(extra_extensions)
    if ech_extension is not None:
        extensions.append(ech_extension)
    if psk:
        # pre_shared_key must come last
        extensions.append(Extension(EXT_PRE_SHARED_KEY, psk_extension_data()))

    return TlsClientHello(
        legacy_version=legacy_version,
        random=random if random is not None else _digest(f"random:{label}"),
        session_id=session_id if session_id is not None else _digest(f"session:{label}"),
        cipher_suites=tuple(suites),
        compression_methods=b"\x00",
        extensions=tuple(extensions),
        has_extensions_block=True,
    )


def make_tls12_hello(sni: Optional[str], alpn: Optional[Sequence[str]] = ("http/1.1",)) -> TlsClientHello:
    return make_client_hello(sni=sni, alpn=alpn)


def make_tls13_hello(sni: Optional[str], alpn: Optional[Sequence[str]] = ("h2", "http/1.1")) -> TlsClientHello:
    return make_client_hello(
        sni=sni,
        alpn=alpn,
        versions=(VERSION_TLS1_3, VERSION_TLS1_2),
        key_share_groups=(GROUP_X25519,),
    )


def client_flight(hello: TlsClientHello) -> bytes:
    """ClientHello framed in handshake records."""
    return frame_records(CONTENT_HANDSHAKE, serialize_client_hello(hello), VERSION_TLS1_0)


def server_hello_message(version: int, cipher: Optional[int] = None, key_share_group: int = GROUP_X25519) -> bytes:
    extensions = b""
    if version == VERSION_TLS1_3:
        cipher = cipher if cipher is not None else 0x1301
        extensions = (
            u16(EXT_SUPPORTED_VERSIONS) + vec16(u16(VERSION_TLS1_3))
            + u16(EXT_KEY_SHARE) + vec16(u16(key_share_group) + vec16(_digest(f"server-key:{key_share_group}")))
        )
        legacy = VERSION_TLS1_2
    else:
        cipher = cipher if cipher is not None else 0xC02F
        legacy = version
    body = (
        u16(legacy)
        + _digest(f"server-random:{version}")
        + vec8(_digest("server-session", 32))
        + u16(cipher)
        + u8(0)
        + vec16(extensions)
    )
    return u8(HANDSHAKE_SERVER_HELLO) + u24(len(body)) + body


def certificate_message(der: bytes = b"") -> bytes:
    der = der or _digest("certificate", 600)
    body = u24(len(der) + 3) + u24(len(der)) + der
    return u8(HANDSHAKE_CERTIFICATE) + u24(len(body)) + body


def server_flight(version: int, with_certificate: bool = True) -> bytes:
    """
    Server->client bytes up to encryption.

    TLS 1.2: ServerHello, Certificate, ServerHelloDone in clear, then
    ChangeCipherSpec. TLS 1.3: ServerHello, ChangeCipherSpec, then the rest
    of the flight as an encrypted application-data record.
    """
    if version == VERSION_TLS1_3:
        return (
            frame_records(CONTENT_HANDSHAKE, server_hello_message(version), VERSION_TLS1_2)
            + frame_records(CONTENT_CHANGE_CIPHER_SPEC, b"\x01", VERSION_TLS1_2)
            + frame_records(CONTENT_APPLICATION_DATA, _digest("encrypted-flight", 900), VERSION_TLS1_2)
        )
    messages = server_hello_message(version)
    if with_certificate:
        messages += certificate_message()
    messages += u8(HANDSHAKE_SERVER_HELLO_DONE) + u24(0)
    return (
        frame_records(CONTENT_HANDSHAKE, messages, version)
        + frame_records(CONTENT_CHANGE_CIPHER_SPEC, b"\x01", version)
    )


def application_data(payload_len: int, version: int = VERSION_TLS1_2) -> bytes:
    """Opaque application-data records carrying `payload_len` zero bytes in total."""
    if payload_len <= 0:
        return b""
    return frame_records(CONTENT_APPLICATION_DATA, bytes(payload_len), version)
