import ipaddress
from dataclasses import dataclass
from enum import Enum
from typing import Dict, NamedTuple, Optional, Tuple

from echoscope.constants import (
    PRIVACY_LEVEL_UNKNOWN,
    TLS_VERSION_QUIC,
    TLS_VERSION_UNKNOWN,
)
from echoscope.tls.messages import PrivacyAssessment, TlsClientHello, TlsServerHello


class Transport(Enum):
    TCP = "tcp"
    UDP = "udp"


class Direction(Enum):
    """Packet direction relative to the FlowKey it was filed under."""
    FORWARD = "forward"
    REVERSE = "reverse"

    def flip(self) -> "Direction":
        return Direction.REVERSE if self is Direction.FORWARD else Direction.FORWARD


def _endpoint_order(ip: str, port: int) -> Tuple[int, int, int]:
    address = ipaddress.ip_address(ip)
    return address.version, int(address), port


@dataclass(frozen=True, order=False)
class FlowKey:
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    transport: Transport = Transport.TCP

    def reversed(self) -> "FlowKey":
        return FlowKey(self.dst_ip, self.dst_port, self.src_ip, self.src_port, self.transport)

    def canonical(self) -> Tuple["FlowKey", bool]:
        """
        Orientation-free form of the key: the lower address:port is the source.
        Returns the canonical key and whether this key had to be flipped.
        """
        if _endpoint_order(self.src_ip, self.src_port) <= _endpoint_order(self.dst_ip, self.dst_port):
            return self, False
        return self.reversed(), True

    def sort_key(self) -> Tuple:
        return (
            _endpoint_order(self.src_ip, self.src_port),
            _endpoint_order(self.dst_ip, self.dst_port),
            self.transport.value,
        )

    def __str__(self) -> str:
        return f"{self.transport.value}:{self.src_ip}:{self.src_port}->{self.dst_ip}:{self.dst_port}"


class PacketEvent(NamedTuple):
    timestamp: float
    key: FlowKey
    direction: Direction
    payload: bytes
    seq: int = 0
    flags: int = 0


@dataclass
class FlowRecord:
    key: FlowKey
    first_ts: float
    last_ts: float
    bytes_up: int = 0
    bytes_down: int = 0
    client_hello: Optional[TlsClientHello] = None
    server_hello: Optional[TlsServerHello] = None
    assessment: Optional[PrivacyAssessment] = None
    truncated: bool = False
    quic_suspected: bool = False

    def __post_init__(self):
        if self.last_ts < self.first_ts:
            raise ValueError(f"last_ts {self.last_ts} precedes first_ts {self.first_ts} for {self.key}")
        if self.bytes_up < 0 or self.bytes_down < 0:
            raise ValueError(f"negative byte count for {self.key}")

    @property
    def session_length(self) -> float:
        return self.last_ts - self.first_ts

    @property
    def total_bytes(self) -> int:
        return self.bytes_up + self.bytes_down

    @property
    def sni(self) -> Optional[str]:
        return self.client_hello.sni if self.client_hello is not None else None

    @property
    def tls_version(self) -> str:
        if self.assessment is not None:
            return self.assessment.effective_version.label
        if self.quic_suspected:
            return TLS_VERSION_QUIC
        return TLS_VERSION_UNKNOWN

    @property
    def privacy_level(self) -> str:
        if self.assessment is not None:
            return self.assessment.privacy_level.value
        return PRIVACY_LEVEL_UNKNOWN

    @property
    def ech(self) -> bool:
        return self.assessment is not None and self.assessment.ech_present

    def to_row(self) -> Dict:
        """One report row, column order as in REPORT_COLUMNS."""
        return {
            "src_ip": self.key.src_ip,
            "src_port": self.key.src_port,
            "dst_ip": self.key.dst_ip,
            "dst_port": self.key.dst_port,
            "tls_version": self.tls_version,
            "sni": self.sni or "",
            "alpn": ";".join(self.client_hello.alpn) if self.client_hello and self.client_hello.alpn else "",
            "ech": "true" if self.ech else "false",
            "bytes_up": self.bytes_up,
            "bytes_down": self.bytes_down,
            "session_length_s": round(self.session_length, 6),
            "privacy_level": self.privacy_level,
        }

    def to_mirror_row(self) -> Dict:
        row = self.to_row()
        row.update({
            "first_ts": self.first_ts,
            "last_ts": self.last_ts,
            "transport": self.key.transport.value,
            "truncated": self.truncated,
        })
        return row
