"""
Encrypted ClientHello model.

ECHConfigList codec, outer/inner ClientHello construction and ECH detection.
HPKE is not implemented: sealing is delegated to an injected function
`sealer(public_key, plaintext) -> bytes`, so what ends up on the wire can be
checked without real cryptography.
"""

import hashlib
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

from echoscope.constants import (
    ECH_CONFIG_VERSION,
    EXT_ALPN,
    EXT_ENCRYPTED_CLIENT_HELLO,
    EXT_PRE_SHARED_KEY,
    EXT_SERVER_NAME,
    EXT_SUPPORTED_VERSIONS,
    OUTER_ALPN,
    VERSION_TLS1_2,
    VERSION_TLS1_3,
)
from echoscope.exception.exception import (
    EmptyEchConfigList,
    MalformedEchConfig,
    NoInnerSni,
    SealerFailure,
)
from echoscope.logging.logger import get_logger
from echoscope.tls.codec import Reader, u8, u16, vec8, vec16
from echoscope.tls.extensions import (
    EchExtension,
    EchVariant,
    Extension,
    encode_alpn,
    encode_ech,
    encode_server_name,
    encode_supported_versions,
)
from echoscope.tls.handshake import serialize_client_hello
from echoscope.tls.messages import TlsClientHello

logger = get_logger(__name__)

Sealer = Callable[[bytes, bytes], bytes]


@dataclass(frozen=True)
class EchConfig:
    config_id: int
    kem_id: int
    public_key: bytes
    cipher_suites: Tuple[Tuple[int, int], ...]
    public_name: str
    max_name_length: int = 0
    extensions: bytes = b""
    version: int = ECH_CONFIG_VERSION

    def __post_init__(self):
        object.__setattr__(self, "cipher_suites", tuple(tuple(cs) for cs in self.cipher_suites))
        if not self.public_key:
            raise ValueError("ECHConfig public_key is empty")
        if not self.public_name or not self.public_name.isascii():
            raise ValueError(f"ECHConfig public_name must be non-empty ASCII: {self.public_name!r}")
        if not self.cipher_suites:
            raise ValueError("ECHConfig carries no cipher suite")
        if not 0 <= self.config_id <= 0xFF:
            raise ValueError(f"config_id out of range: {self.config_id}")


@dataclass(frozen=True)
class UnknownEchConfig:
    """A config whose version this codec does not understand, kept verbatim."""
    version: int
    contents: bytes


AnyEchConfig = Union[EchConfig, UnknownEchConfig]


class EchDetection(NamedTuple):
    present: bool
    extension: Optional[EchExtension]


# ------------------------------------------------------------ ECHConfigList

def _parse_config_contents(contents: bytes, offset: int) -> EchConfig:
    reader = Reader(contents, MalformedEchConfig, offset)
    config_id = reader.u8("config_id")
    kem_id = reader.u16("kem_id")
    public_key = reader.vec16("public_key")
    suites_raw = reader.vec16("cipher_suites")
    if len(suites_raw) % 4:
        raise MalformedEchConfig("cipher_suites length is not a multiple of 4", offset=offset)
    suites = Reader(suites_raw, MalformedEchConfig, offset)
    cipher_suites = []
    while not suites.at_end():
        cipher_suites.append((suites.u16("kdf_id"), suites.u16("aead_id")))
    max_name_length = reader.u8("maximum_name_length")
    public_name = reader.vec8("public_name")
    extensions = reader.vec16("extensions")
    reader.expect_end("ECHConfigContents")

    try:
        return EchConfig(
            config_id=config_id,
            kem_id=kem_id,
            public_key=public_key,
            cipher_suites=tuple(cipher_suites),
            public_name=public_name.decode("ascii"),
            max_name_length=max_name_length,
            extensions=extensions,
        )
    except (ValueError, UnicodeDecodeError) as e:
        raise MalformedEchConfig(str(e), offset=offset)


def parse_ech_config_list(data: bytes) -> List[AnyEchConfig]:
    """
    Parse an ECHConfigList (the value of an HTTPS/SVCB `ech` parameter after
    base64 decoding). Unknown config versions are kept as UnknownEchConfig.
    """
    reader = Reader(data, MalformedEchConfig)
    body = reader.vec16("ECHConfigList")
    reader.expect_end("ECHConfigList")
    if not body:
        raise EmptyEchConfigList("ECHConfigList is empty", offset=0)

    configs: List[AnyEchConfig] = []
    entries = Reader(body, MalformedEchConfig, 2)
    while not entries.at_end():
        start = entries.base_offset + entries.pos
        version = entries.u16("version")
        contents = entries.vec16("contents")
        if version == ECH_CONFIG_VERSION:
            configs.append(_parse_config_contents(contents, start + 4))
        else:
            logger.debug(f"Keeping ECHConfig of unknown version {version:#06x}")
            configs.append(UnknownEchConfig(version, contents))

    ids = [c.config_id for c in configs if isinstance(c, EchConfig)]
    if len(ids) != len(set(ids)):
        raise MalformedEchConfig("config_id is not unique within the list")
    return configs


def _serialize_config(config: AnyEchConfig) -> bytes:
    if isinstance(config, UnknownEchConfig):
        return u16(config.version) + vec16(config.contents)
    suites = b"".join(u16(kdf) + u16(aead) for kdf, aead in config.cipher_suites)
    contents = (
        u8(config.config_id)
        + u16(config.kem_id)
        + vec16(config.public_key)
        + vec16(suites)
        + u8(config.max_name_length)
        + vec8(config.public_name.encode("ascii"))
        + vec16(config.extensions)
    )
    return u16(config.version) + vec16(contents)


def serialize_ech_config_list(configs: Sequence[AnyEchConfig]) -> bytes:
    return vec16(b"".join(_serialize_config(c) for c in configs))


def select_config(configs: Sequence[AnyEchConfig], config_id: Optional[int] = None) -> EchConfig:
    """Pick a usable config: by id when given, else the first known version."""
    for config in configs:
        if isinstance(config, EchConfig) and (config_id is None or config.config_id == config_id):
            return config
    raise MalformedEchConfig(f"no usable ECHConfig (config_id={config_id})")


# ---------------------------------------------------------- outer / inner

def mark_inner(hello: TlsClientHello) -> TlsClientHello:
    """Return `hello` carrying the Inner ECH marker (replacing any ECH extension)."""
    marker = Extension(EXT_ENCRYPTED_CLIENT_HELLO, encode_ech(EchExtension(variant=EchVariant.INNER)))
    extensions = [ext for ext in hello.extensions if ext.type != EXT_ENCRYPTED_CLIENT_HELLO]
    extensions.append(marker)
    return TlsClientHello(
        legacy_version=hello.legacy_version,
        random=hello.random,
        session_id=hello.session_id,
        cipher_suites=hello.cipher_suites,
        compression_methods=hello.compression_methods,
        extensions=tuple(extensions),
        has_extensions_block=True,
    )


def _seal(sealer: Sealer, public_key: bytes, plaintext: bytes) -> bytes:
    try:
        sealed = sealer(public_key, plaintext)
    except Exception as e:
        raise SealerFailure(f"sealer raised {type(e).__name__}: {e}")
    if not isinstance(sealed, (bytes, bytearray)) or not sealed:
        raise SealerFailure("sealer returned no ciphertext")
    return bytes(sealed)


def build_outer_client_hello(inner: TlsClientHello, config: EchConfig, sealer: Sealer) -> TlsClientHello:
    """
    Wrap `inner` into an outer ClientHello addressed to `config.public_name`.

    The sealed payload is sealer(public_key, serialize(mark_inner(inner))).
    The outer hello drops pre_shared_key, swaps SNI for the public name,
    swaps ALPN for an innocuous list and always offers TLS 1.3.
    """
    if not inner.sni:
        raise NoInnerSni("inner ClientHello has no SNI to protect")

    payload = _seal(sealer, config.public_key, serialize_client_hello(mark_inner(inner)))
    kdf_id, aead_id = config.cipher_suites[0]
    ech = EchExtension(
        variant=EchVariant.OUTER,
        config_id=config.config_id,
        enc=hashlib.sha256(config.public_key + payload).digest(),
        payload=payload,
        kdf_id=kdf_id,
        aead_id=aead_id,
    )

    outer_extensions = []
    offered_tls13 = False
    for ext in inner.extensions:
        if ext.type == EXT_SERVER_NAME:
            outer_extensions.append(Extension(EXT_SERVER_NAME, encode_server_name(config.public_name)))
        elif ext.type == EXT_ALPN:
            outer_extensions.append(Extension(EXT_ALPN, encode_alpn(OUTER_ALPN)))
        elif ext.type == EXT_SUPPORTED_VERSIONS:
            versions = inner.supported_versions or ()
            if VERSION_TLS1_3 not in versions:
                versions = (VERSION_TLS1_3,) + tuple(versions)
            outer_extensions.append(Extension(EXT_SUPPORTED_VERSIONS, encode_supported_versions(versions)))
            offered_tls13 = True
        elif ext.type in (EXT_ENCRYPTED_CLIENT_HELLO, EXT_PRE_SHARED_KEY):
            continue
        else:
            outer_extensions.append(ext)

    if not offered_tls13:
        outer_extensions.append(Extension(
            EXT_SUPPORTED_VERSIONS,
            encode_supported_versions((VERSION_TLS1_3, VERSION_TLS1_2)),
        ))
    outer_extensions.append(Extension(EXT_ENCRYPTED_CLIENT_HELLO, encode_ech(ech)))

    outer = TlsClientHello(
        legacy_version=inner.legacy_version,
        random=hashlib.sha256(b"outer" + inner.random).digest(),
        session_id=inner.session_id,
        cipher_suites=inner.cipher_suites,
        compression_methods=inner.compression_methods,
        extensions=tuple(outer_extensions),
        has_extensions_block=True,
    )
    logger.debug(f"Built outer ClientHello for public name {config.public_name} (config {config.config_id})")
    return outer


def detect_ech(ch: TlsClientHello) -> EchDetection:
    """
    Report whether the ECH extension is present.

    GREASE ECH cannot be told apart from a real outer extension on the wire,
    so it is reported as present.
    """
    return EchDetection(ch.ech is not None, ch.ech)


def make_grease_ech(seed: bytes, payload_len: int = 144) -> Extension:
    """A GREASE-style outer ECH extension: random-looking id, enc and payload."""
    stream = b""
    counter = 0
    while len(stream) < 32 + payload_len + 1:
        stream += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
        counter += 1
    ech = EchExtension(
        variant=EchVariant.OUTER,
        config_id=stream[0],
        enc=stream[1:33],
        payload=stream[33:33 + payload_len],
        kdf_id=0x0001,
        aead_id=0x0001,
    )
    return Extension(EXT_ENCRYPTED_CLIENT_HELLO, encode_ech(ech))


def keystream_sealer(public_key: bytes, plaintext: bytes) -> bytes:
    """
    Deterministic stand-in for HPKE seal: XOR with a SHA-256 keystream plus
    a 16-byte tag. Provides no confidentiality against anyone holding the
    public key; it only makes the payload opaque on the wire.
    """
    stream = b""
    counter = 0
    while len(stream) < len(plaintext):
        stream += hashlib.sha256(public_key + counter.to_bytes(8, "big")).digest()
        counter += 1
    body = bytes(p ^ k for p, k in zip(plaintext, stream))
    tag = hashlib.sha256(public_key + body).digest()[:16]
    return body + tag
