"""
Parsed forms of TLS records and hello messages.

Every extension-derived attribute of a ClientHello is computed from the
ordered extension list at construction time, so a hello built in code and a
hello parsed off the wire expose the same view.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

from echoscope.constants import (
    CONTENT_ALERT,
    CONTENT_APPLICATION_DATA,
    CONTENT_CHANGE_CIPHER_SPEC,
    CONTENT_HANDSHAKE,
    EXT_ALPN,
    EXT_ENCRYPTED_CLIENT_HELLO,
    EXT_KEY_SHARE,
    EXT_PRE_SHARED_KEY,
    EXT_SERVER_NAME,
    EXT_SUPPORTED_VERSIONS,
    VERSION_TLS1_0,
    VERSION_TLS1_1,
    VERSION_TLS1_2,
    VERSION_TLS1_3,
)
from echoscope.exception.exception import DuplicateExtension, EchoscopeError, TruncatedRecord
from echoscope.tls.extensions import (
    EchExtension,
    EchVariant,
    Extension,
    decode_alpn,
    decode_ech,
    decode_key_share,
    decode_server_name,
    decode_supported_versions,
    is_grease,
)

__all__ = [
    "ContentType",
    "TlsVersion",
    "PrivacyLevel",
    "TlsRecord",
    "RecordParseResult",
    "Extension",
    "EchExtension",
    "EchVariant",
    "TlsClientHello",
    "TlsServerHello",
    "PrivacyAssessment",
]


class ContentType(Enum):
    CHANGE_CIPHER_SPEC = CONTENT_CHANGE_CIPHER_SPEC
    ALERT = CONTENT_ALERT
    HANDSHAKE = CONTENT_HANDSHAKE
    APPLICATION_DATA = CONTENT_APPLICATION_DATA
    OTHER = -1

    @classmethod
    def from_code(cls, code: int) -> "ContentType":
        for member in cls:
            if member.value == code:
                return member
        return cls.OTHER


class TlsVersion(Enum):
    TLS1_0 = VERSION_TLS1_0
    TLS1_1 = VERSION_TLS1_1
    TLS1_2 = VERSION_TLS1_2
    TLS1_3 = VERSION_TLS1_3
    UNKNOWN = 0

    @classmethod
    def from_code(cls, code: Optional[int]) -> "TlsVersion":
        for member in cls:
            if member.value == code and member is not cls.UNKNOWN:
                return member
        return cls.UNKNOWN

    @property
    def label(self) -> str:
        if self is TlsVersion.UNKNOWN:
            return "unknown"
        return f"1.{self.value - VERSION_TLS1_0}"


class PrivacyLevel(Enum):
    NONE = "None"
    PARTIAL_TLS13 = "PartialTls13"
    FULL_ECH = "FullEch"


@dataclass(frozen=True)
class TlsRecord:
    content_type: ContentType
    legacy_record_version: int
    payload: bytes
    offset: int
    type_code: int

    @property
    def end_offset(self) -> int:
        return self.offset + 5 + len(self.payload)


@dataclass(frozen=True)
class RecordParseResult:
    """Records parsed so far, where parsing stopped, and why (if not clean)."""
    records: Tuple[TlsRecord, ...]
    offset: int
    error: Optional[EchoscopeError] = None

    @property
    def truncated(self) -> bool:
        return isinstance(self.error, TruncatedRecord)


@dataclass(frozen=True)
class TlsClientHello:
    legacy_version: int
    random: bytes
    session_id: bytes
    cipher_suites: Tuple[int, ...]
    compression_methods: bytes = b"\x00"
    extensions: Tuple[Extension, ...] = ()
    has_extensions_block: bool = True

    sni: Optional[str] = field(init=False, default=None)
    alpn: Optional[Tuple[str, ...]] = field(init=False, default=None)
    supported_versions: Optional[Tuple[int, ...]] = field(init=False, default=None)
    key_share_groups: Tuple[int, ...] = field(init=False, default=())
    pre_shared_key_present: bool = field(init=False, default=False)
    ech: Optional[EchExtension] = field(init=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "cipher_suites", tuple(self.cipher_suites))
        object.__setattr__(self, "extensions", tuple(self.extensions))

        seen = set()
        for ext in self.extensions:
            if ext.type in seen:
                raise DuplicateExtension(f"extension {ext.name} appears twice")
            seen.add(ext.type)

        for ext in self.extensions:
            if ext.type == EXT_SERVER_NAME:
                object.__setattr__(self, "sni", decode_server_name(ext.data))
            elif ext.type == EXT_ALPN:
                object.__setattr__(self, "alpn", decode_alpn(ext.data))
            elif ext.type == EXT_SUPPORTED_VERSIONS:
                object.__setattr__(self, "supported_versions", decode_supported_versions(ext.data))
            elif ext.type == EXT_KEY_SHARE:
                groups = tuple(group for group, _ in decode_key_share(ext.data))
                object.__setattr__(self, "key_share_groups", groups)
            elif ext.type == EXT_PRE_SHARED_KEY:
                object.__setattr__(self, "pre_shared_key_present", True)
            elif ext.type == EXT_ENCRYPTED_CLIENT_HELLO:
                object.__setattr__(self, "ech", decode_ech(ext.data))

    @property
    def effective_version_code(self) -> int:
        """max(supported_versions) without GREASE when offered, else legacy_version."""
        if self.supported_versions is not None:
            offered = [v for v in self.supported_versions if not is_grease(v)]
            if offered:
                return max(offered)
        return self.legacy_version

    @property
    def effective_version(self) -> TlsVersion:
        return TlsVersion.from_code(self.effective_version_code)

    def extension(self, ext_type: int) -> Optional[Extension]:
        for ext in self.extensions:
            if ext.type == ext_type:
                return ext
        return None


@dataclass(frozen=True)
class TlsServerHello:
    legacy_version: int
    selected_cipher: int
    supported_versions_selected: Optional[int] = None
    key_share_group: Optional[int] = None
    certificate_in_clear: bool = False
    handshake_types_in_clear: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.certificate_in_clear and self.negotiated_version is TlsVersion.TLS1_3:
            raise ValueError("a TLS 1.3 server never sends its certificate in clear")

    @property
    def negotiated_version_code(self) -> int:
        if self.supported_versions_selected is not None:
            return self.supported_versions_selected
        return self.legacy_version

    @property
    def negotiated_version(self) -> TlsVersion:
        return TlsVersion.from_code(self.negotiated_version_code)


@dataclass(frozen=True)
class PrivacyAssessment:
    effective_version: TlsVersion
    sni_exposed: bool
    certificate_exposed: bool
    ech_present: bool
    privacy_level: PrivacyLevel
    certificate_inferred: bool = False
    notes: Tuple[str, ...] = ()
