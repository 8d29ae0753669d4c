"""
Synthetic capture writer.

Builds pcap/pcapng files holding complete TCP sessions (three-way handshake,
data segments, FIN) whose payloads are TLS 1.2, TLS 1.3 or ECH flights. Used
by the tests and to rebuild the reference streaming capture without live services.
"""

import hashlib
import ipaddress
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import dpkt

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import IoFailure
from echoscope.constants import (
    KEM_X25519_HKDF_SHA256,
    KDF_HKDF_SHA256,
    AEAD_AES_128_GCM,
    VERSION_TLS1_2,
    VERSION_TLS1_3,
)
from echoscope.entity.flow_entity import FlowKey, Transport
from echoscope.tls.builder import (
    application_data,
    client_flight,
    make_tls12_hello,
    make_tls13_hello,
    server_flight,
)
from echoscope.tls.ech import EchConfig, build_outer_client_hello, keystream_sealer
from echoscope.tls.messages import TlsClientHello

logger = get_logger(__name__)

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
SNAPLEN = 262144
BASE_TS = 1_700_000_000.0
CLIENT_IP = "10.0.0.2"
SYNTHETIC_ECH_CONFIG = EchConfig(
    config_id=42,
    kem_id=KEM_X25519_HKDF_SHA256,
    public_key=bytes(range(1, 33)),
    cipher_suites=((KDF_HKDF_SHA256, AEAD_AES_128_GCM),),
    public_name="cdn.example",
)


def server_ip_for(host: str) -> str:
    """Stable documentation-range address for a host name."""
    digest = hashlib.sha256(host.encode()).digest()
    return f"198.51.{100 + digest[0] % 2}.{1 + digest[1] % 250}"


def segments_of(stream: bytes, mss: int) -> List[bytes]:
    return [stream[i:i + mss] for i in range(0, len(stream), mss)]


class SyntheticCapture:
    """Accumulates packets in memory; write() dumps them in timestamp order."""

    def __init__(self, linktype: int = LINKTYPE_ETHERNET, mss: int = 1448):
        self.linktype = linktype
        self.mss = mss
        self.packets: List[Tuple[float, int, bytes]] = []
        self.tcp_payload_bytes = 0
        self._next_port = 50000

    # ------------------------------------------------------------- packets

    def _frame(self, src: str, dst: str, segment) -> bytes:
        src_addr = ipaddress.ip_address(src)
        dst_addr = ipaddress.ip_address(dst)
        proto = dpkt.ip.IP_PROTO_TCP if isinstance(segment, dpkt.tcp.TCP) else dpkt.ip.IP_PROTO_UDP
        segment_bytes = bytes(segment)

        if src_addr.version == 6:
            ip = dpkt.ip6.IP6(src=src_addr.packed, dst=dst_addr.packed, nxt=proto, hlim=64, data=segment)
            ip.p = proto
            ip.plen = len(segment_bytes)
            eth_type = dpkt.ethernet.ETH_TYPE_IP6
        else:
            ip = dpkt.ip.IP(src=src_addr.packed, dst=dst_addr.packed, p=proto, ttl=64, data=segment)
            ip.len = 20 + len(segment_bytes)
            eth_type = dpkt.ethernet.ETH_TYPE_IP

        if self.linktype == LINKTYPE_RAW:
            return bytes(ip)
        eth = dpkt.ethernet.Ethernet(
            src=b"\x02\x00\x00\x00\x00\x01", dst=b"\x02\x00\x00\x00\x00\x02", type=eth_type, data=ip
        )
        return bytes(eth)

    def _add(self, ts: float, src: str, dst: str, segment) -> None:
        self.packets.append((ts, len(self.packets), self._frame(src, dst, segment)))

    def add_tcp_segment(
        self, ts: float, src: str, sport: int, dst: str, dport: int,
        seq: int, flags: int, payload: bytes = b"", ack: int = 0
    ) -> None:
        tcp = dpkt.tcp.TCP(sport=sport, dport=dport, seq=seq % (1 << 32), ack=ack, flags=flags, win=65535, data=payload)
        self.tcp_payload_bytes += len(payload)
        self._add(ts, src, dst, tcp)

    def allocate_port(self) -> int:
        port = self._next_port
        self._next_port += 1
        return port

    # ------------------------------------------------------------ sessions

    def add_tcp_session(
        self,
        server: str,
        up: bytes,
        down: bytes,
        start_ts: float,
        duration: float = 1.0,
        client: str = CLIENT_IP,
        client_port: Optional[int] = None,
        server_port: int = 443,
        handshake: bool = True,
        fin: bool = True,
        client_isn: int = 1000,
        server_isn: int = 5000,
        mss: Optional[int] = None,
    ) -> FlowKey:
        """
        One TCP connection: SYN/SYN-ACK/ACK at start_ts, the client stream,
        then the server stream, FIN from the client at start_ts + duration.
        """
        mss = mss or self.mss
        client_port = client_port or self.allocate_port()
        up_segments = segments_of(up, mss)
        down_segments = segments_of(down, mss)
        data_count = len(up_segments) + len(down_segments)
        step = duration / (data_count + 2)

        ts = start_ts
        if handshake:
            self.add_tcp_segment(ts, client, client_port, server, server_port, client_isn, dpkt.tcp.TH_SYN)
            self.add_tcp_segment(
                ts, server, server_port, client, client_port, server_isn,
                dpkt.tcp.TH_SYN | dpkt.tcp.TH_ACK, ack=client_isn + 1,
            )
        ts += step

        seq = client_isn + 1
        for payload in up_segments:
            self.add_tcp_segment(ts, client, client_port, server, server_port, seq, dpkt.tcp.TH_ACK | dpkt.tcp.TH_PUSH, payload)
            seq += len(payload)
            ts += step
        client_fin_seq = seq

        seq = server_isn + 1
        for payload in down_segments:
            self.add_tcp_segment(ts, server, server_port, client, client_port, seq, dpkt.tcp.TH_ACK | dpkt.tcp.TH_PUSH, payload)
            seq += len(payload)
            ts += step

        if fin:
            self.add_tcp_segment(
                start_ts + duration, client, client_port, server, server_port,
                client_fin_seq, dpkt.tcp.TH_FIN | dpkt.tcp.TH_ACK,
            )
        return FlowKey(client, client_port, server, server_port, Transport.TCP)

    def add_tls_session(
        self,
        hello: TlsClientHello,
        start_ts: float,
        duration: float = 2.0,
        server: Optional[str] = None,
        server_version: int = VERSION_TLS1_2,
        up_bytes: int = 2_000,
        down_bytes: int = 30_000,
        **kwargs,
    ) -> FlowKey:
        server = server or server_ip_for(hello.sni or "no-sni")
        record_version = min(server_version, VERSION_TLS1_2)
        up = client_flight(hello) + application_data(up_bytes, record_version)
        down = server_flight(server_version, with_certificate=server_version != VERSION_TLS1_3)
        down += application_data(down_bytes, record_version)
        return self.add_tcp_session(server, up, down, start_ts, duration, **kwargs)

    def add_udp_flow(
        self,
        server: str,
        datagrams: Sequence[Tuple[bool, bytes]],
        start_ts: float,
        duration: float = 1.0,
        client: str = CLIENT_IP,
        client_port: Optional[int] = None,
        server_port: int = 443,
    ) -> FlowKey:
        """datagrams: (from_client, payload) pairs spread evenly over `duration`."""
        client_port = client_port or self.allocate_port()
        step = duration / max(len(datagrams) - 1, 1)
        for i, (from_client, payload) in enumerate(datagrams):
            src, sport, dst, dport = (
                (client, client_port, server, server_port) if from_client
                else (server, server_port, client, client_port)
            )
            udp = dpkt.udp.UDP(sport=sport, dport=dport, data=payload)
            udp.ulen = 8 + len(payload)
            self._add(start_ts + i * step, src, dst, udp)
        return FlowKey(client, client_port, server, server_port, Transport.UDP)

    # --------------------------------------------------------------- output

    def ordered_packets(self) -> List[Tuple[float, bytes]]:
        return [(ts, frame) for ts, _, frame in sorted(self.packets, key=lambda p: (p[0], p[1]))]

    def write(self, path: Union[str, Path], fmt: str = "pcap") -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "wb") as f:
                if fmt == "pcapng":
                    writer = dpkt.pcapng.Writer(f, snaplen=SNAPLEN, linktype=self.linktype)
                elif fmt == "pcap":
                    writer = dpkt.pcap.Writer(f, snaplen=SNAPLEN, linktype=self.linktype)
                else:
                    raise ValueError(f"unknown capture format {fmt!r}")
                for ts, frame in self.ordered_packets():
                    writer.writepkt(frame, ts=ts)
        except ValueError:
            raise
        except OSError as e:
            raise IoFailure(f"cannot write capture: {e}", path=path)

        logger.debug(f"Wrote {len(self.packets)} packets to {path} ({fmt})")
        return path


def ech_hello(inner_sni: str, config: EchConfig = SYNTHETIC_ECH_CONFIG) -> TlsClientHello:
    """Outer ClientHello protecting a TLS 1.3 hello for `inner_sni`."""
    return build_outer_client_hello(make_tls13_hello(inner_sni), config, keystream_sealer)


def write_synthetic_capture(
    path: Union[str, Path],
    services: Dict[str, Sequence[str]],
    ech_flows: bool = True,
    fmt: str = "pcap",
    primary_bytes: int = 3 * 1024 * 1024,
    primary_duration: float = 600.0,
    window_gap: float = 1_000.0,
) -> Path:
    """
    A capture shaped like the reference measurements: for each service, one
    TLS 1.2 session per side-channel host and, when `ech_flows` is set, one
    large long-lived ECH session over the same time window. Service windows
    do not overlap.
    """
    capture = SyntheticCapture(mss=16_000)
    for index, (service, hosts) in enumerate(services.items()):
        window = BASE_TS + index * window_gap
        if ech_flows:
            capture.add_tls_session(
                ech_hello(f"video.{service}.internal"),
                start_ts=window,
                duration=primary_duration,
                server=server_ip_for(f"{service}-primary"),
                server_version=VERSION_TLS1_3,
                down_bytes=primary_bytes,
            )
        for offset, host in enumerate(hosts):
            capture.add_tls_session(
                make_tls12_hello(host),
                start_ts=window + 1.0 + offset * 5.0,
                duration=2.0,
            )

    logger.info(f"Synthetic capture with {len(capture.packets)} packets for {list(services)}")
    return capture.write(path, fmt)
