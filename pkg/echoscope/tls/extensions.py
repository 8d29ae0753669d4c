"""
Extension codepoints plus the encoders/decoders for every privacy-relevant
ClientHello and ServerHello extension.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple

from echoscope.constants import (
    ECH_INNER,
    ECH_OUTER,
    EXT_ALPN,
    EXT_ENCRYPTED_CLIENT_HELLO,
    EXT_KEY_SHARE,
    EXT_PRE_SHARED_KEY,
    EXT_SERVER_NAME,
    EXT_SUPPORTED_VERSIONS,
)
from echoscope.exception.exception import MalformedExtension
from echoscope.tls.codec import Reader, read_items, read_u16_list, u8, u16, u16_list, vec8, vec16

EXTENSION_NAMES = {
    EXT_SERVER_NAME: "server_name",
    EXT_ALPN: "application_layer_protocol_negotiation",
    EXT_PRE_SHARED_KEY: "pre_shared_key",
    EXT_SUPPORTED_VERSIONS: "supported_versions",
    EXT_KEY_SHARE: "key_share",
    EXT_ENCRYPTED_CLIENT_HELLO: "encrypted_client_hello",
}

SNI_HOST_NAME = 0


def is_grease(value: int) -> bool:
    """GREASE codepoints look like 0x0A0A, 0x1A1A, ... 0xFAFA."""
    return (value & 0x0F0F) == 0x0A0A and (value >> 8) == (value & 0xFF)


@dataclass(frozen=True)
class Extension:
    type: int
    data: bytes

    @property
    def name(self) -> str:
        if is_grease(self.type):
            return "grease"
        return EXTENSION_NAMES.get(self.type, f"unknown_{self.type:#06x}")

    def encode(self) -> bytes:
        return u16(self.type) + vec16(self.data)


class EchVariant(Enum):
    OUTER = ECH_OUTER
    INNER = ECH_INNER


@dataclass(frozen=True)
class EchExtension:
    variant: EchVariant
    config_id: Optional[int] = None
    enc: bytes = b""
    payload: bytes = b""
    kdf_id: Optional[int] = None
    aead_id: Optional[int] = None

    def __post_init__(self):
        if self.variant is EchVariant.OUTER:
            if not self.payload:
                raise ValueError("outer ECH extension needs a non-empty payload")
            if self.config_id is None or self.kdf_id is None or self.aead_id is None:
                raise ValueError("outer ECH extension needs config_id and cipher suite")
        elif self.payload or self.enc:
            raise ValueError("inner ECH extension carries no payload")


# ---------------------------------------------------------------- server_name

def encode_server_name(host: str) -> bytes:
    entry = u8(SNI_HOST_NAME) + vec16(host.encode("ascii"))
    return vec16(entry)


def decode_server_name(data: bytes) -> str:
    reader = Reader(data, MalformedExtension)
    entries = Reader(reader.vec16("server_name_list"), MalformedExtension)
    reader.expect_end("server_name")

    host = None
    while not entries.at_end():
        name_type = entries.u8("name_type")
        name = entries.vec16("host_name")
        if name_type != SNI_HOST_NAME:
            continue
        if host is not None:
            raise MalformedExtension("server_name: more than one host_name")
        host = name

    if not host:
        raise MalformedExtension("server_name: empty host name")
    try:
        text = host.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedExtension("server_name: host name is not ASCII")
    return text


# ----------------------------------------------------------------------- ALPN

def encode_alpn(protocols: Iterable[str]) -> bytes:
    return vec16(b"".join(vec8(p.encode("ascii")) for p in protocols))


def decode_alpn(data: bytes) -> Tuple[str, ...]:
    reader = Reader(data, MalformedExtension)
    body = reader.vec16("protocol_name_list")
    reader.expect_end("alpn")
    names = read_items(body, lambda r: r.vec8("protocol_name"), MalformedExtension)
    return tuple(n.decode("ascii", errors="replace") for n in names)


# ---------------------------------------------------------- supported_versions

def encode_supported_versions(versions: Sequence[int]) -> bytes:
    return vec8(u16_list(versions))


def decode_supported_versions(data: bytes) -> Tuple[int, ...]:
    reader = Reader(data, MalformedExtension)
    body = reader.vec8("versions")
    reader.expect_end("supported_versions")
    return read_u16_list(body, MalformedExtension, "supported_versions")


def decode_selected_version(data: bytes) -> int:
    reader = Reader(data, MalformedExtension)
    version = reader.u16("selected_version")
    reader.expect_end("supported_versions")
    return version


# ------------------------------------------------------------------ key_share

def encode_key_share(entries: Sequence[Tuple[int, bytes]]) -> bytes:
    return vec16(b"".join(u16(group) + vec16(key) for group, key in entries))


def decode_key_share(data: bytes) -> Tuple[Tuple[int, bytes], ...]:
    reader = Reader(data, MalformedExtension)
    body = reader.vec16("client_shares")
    reader.expect_end("key_share")
    return read_items(body, lambda r: (r.u16("group"), r.vec16("key_exchange")), MalformedExtension)


def decode_server_key_share(data: bytes) -> int:
    """Group of a ServerHello (or HelloRetryRequest) key_share."""
    reader = Reader(data, MalformedExtension)
    group = reader.u16("group")
    if not reader.at_end():
        reader.vec16("key_exchange")
    reader.expect_end("key_share")
    return group


# ----------------------------------------------------- encrypted_client_hello

def encode_ech(ext: EchExtension) -> bytes:
    if ext.variant is EchVariant.INNER:
        return u8(ECH_INNER)
    return (
        u8(ECH_OUTER)
        + u16(ext.kdf_id)
        + u16(ext.aead_id)
        + u8(ext.config_id)
        + vec16(ext.enc)
        + vec16(ext.payload)
    )


def decode_ech(data: bytes) -> EchExtension:
    reader = Reader(data, MalformedExtension)
    variant = reader.u8("ech type")
    if variant == ECH_INNER:
        reader.expect_end("ech inner")
        return EchExtension(variant=EchVariant.INNER)
    if variant != ECH_OUTER:
        raise MalformedExtension(f"ech: unknown type {variant}")

    kdf_id = reader.u16("kdf_id")
    aead_id = reader.u16("aead_id")
    config_id = reader.u8("config_id")
    enc = reader.vec16("enc")
    payload = reader.vec16("payload")
    reader.expect_end("ech outer")
    if not payload:
        raise MalformedExtension("ech: outer payload is empty")
    return EchExtension(
        variant=EchVariant.OUTER,
        config_id=config_id,
        enc=enc,
        payload=payload,
        kdf_id=kdf_id,
        aead_id=aead_id,
    )
