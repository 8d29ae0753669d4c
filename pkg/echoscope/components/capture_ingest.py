import sys
import struct
import ipaddress
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

import dpkt
import pandas as pd

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import (
    CorruptCapture,
    EchoscopeError,
    EchoscopeException,
    IoFailure,
    TlsParseError,
    UnsupportedLinkType,
)
from echoscope.constants import (
    DEFAULT_PER_FLOW_CAP,
    MIRROR_EXTRA_COLUMNS,
    REPORT_COLUMNS,
    TLS_VERSION_QUIC,
)
from echoscope.entity.artifact_entity import AnalysisArtifact
from echoscope.entity.config_entity import CaptureConfig
from echoscope.entity.flow_entity import Direction, FlowKey, FlowRecord, PacketEvent, Transport
from echoscope.tls.handshake import client_hello_from_records, parse_server_hello
from echoscope.tls.messages import PrivacyAssessment, TlsClientHello, TlsServerHello
from echoscope.tls.privacy import assess_privacy
from echoscope.tls.records import parse_records, starts_with_handshake
from echoscope.utils.common import (
    create_directories,
    get_file_size,
    get_timestamp,
    load_dataframe,
    save_dataframe,
    save_jsonl,
)
from echoscope.utils.data_validation import check_file_readable

logger = get_logger(__name__)

LINKTYPE_ETHERNET = 1
RAW_IP_LINKTYPES = {12, 14, 101}
LINKTYPE_IPV4 = 228
LINKTYPE_IPV6 = 229
SUPPORTED_LINKTYPES = {LINKTYPE_ETHERNET, LINKTYPE_IPV4, LINKTYPE_IPV6} | RAW_IP_LINKTYPES

SEQ_MOD = 1 << 32
SEQ_HALF = 1 << 31

TH_SYN = dpkt.tcp.TH_SYN
TH_ACK = dpkt.tcp.TH_ACK
TH_FIN = dpkt.tcp.TH_FIN
TH_RST = dpkt.tcp.TH_RST


def _seq_before(a: int, b: int) -> bool:
    return a != b and (a - b) % SEQ_MOD >= SEQ_HALF


# ================================
# PACKET DECODING
# ================================

def _open_reader(fileobj, path: Path):
    try:
        return dpkt.pcap.UniversalReader(fileobj)
    except (ValueError, dpkt.UnpackError, struct.error) as e:
        raise CorruptCapture(f"not a pcap or pcapng capture: {e}", path=path, offset=0)


def _decode_ip(buf: bytes, linktype: int):
    if linktype == LINKTYPE_ETHERNET:
        packet = dpkt.ethernet.Ethernet(buf).data
    elif linktype == LINKTYPE_IPV4:
        packet = dpkt.ip.IP(buf)
    elif linktype == LINKTYPE_IPV6:
        packet = dpkt.ip6.IP6(buf)
    else:
        if not buf:
            return None
        packet = dpkt.ip6.IP6(buf) if buf[0] >> 4 == 6 else dpkt.ip.IP(buf)

    if isinstance(packet, dpkt.ip.IP):
        if packet.mf or packet.offset:
            # fragments are not reassembled
            return None
        return packet
    if isinstance(packet, dpkt.ip6.IP6):
        return packet
    return None


def read_capture(path: Union[str, Path], include_control: bool = False) -> Iterator[PacketEvent]:
    """
    Yield TCP segments and UDP datagrams of a pcap/pcapng file in file order.

    Each event is filed under the canonical FlowKey of its connection, with
    its direction relative to that key. By default only TCP segments that
    carry payload are yielded; `include_control` adds bare SYN/FIN/RST
    segments, which reassemble_flows uses for orientation and timing.
    """
    path = Path(path)
    if not path.is_file() or not check_file_readable(path):
        raise IoFailure("capture file is missing or unreadable", path=path)

    with open(path, "rb") as f:
        reader = _open_reader(f, path)
        linktype = reader.datalink()
        if linktype not in SUPPORTED_LINKTYPES:
            raise UnsupportedLinkType(f"link type {linktype} is neither Ethernet nor raw IP", path=path)

        index = 0
        packets = iter(reader)
        while True:
            try:
                timestamp, buf = next(packets)
            except StopIteration:
                break
            except (ValueError, dpkt.UnpackError, struct.error) as e:
                raise CorruptCapture(f"unreadable packet record after packet {index}: {e}", path=path)
            index += 1

            try:
                ip = _decode_ip(buf, linktype)
            except (dpkt.UnpackError, struct.error):
                logger.debug(f"Skipping undecodable packet {index} in {path.name}")
                continue
            if ip is None:
                continue

            segment = ip.data
            if isinstance(segment, dpkt.tcp.TCP):
                transport = Transport.TCP
                payload = bytes(segment.data)
                flags = segment.flags
                seq = segment.seq
                if not payload and not (include_control and flags & (TH_SYN | TH_FIN | TH_RST)):
                    continue
            elif isinstance(segment, dpkt.udp.UDP):
                transport = Transport.UDP
                payload = bytes(segment.data)
                flags = 0
                seq = 0
            else:
                continue

            key = FlowKey(
                str(ipaddress.ip_address(ip.src)), segment.sport,
                str(ipaddress.ip_address(ip.dst)), segment.dport,
                transport,
            )
            canonical, flipped = key.canonical()
            direction = Direction.REVERSE if flipped else Direction.FORWARD
            yield PacketEvent(float(timestamp), canonical, direction, payload, seq, flags)

    logger.debug(f"Read {index} packets from {path}")


# ================================
# FLOW REASSEMBLY
# ================================

@dataclass
class _DirectionState:
    """Segments of one direction, kept until the stream can be rebuilt."""
    cap: int
    isn: Optional[int] = None
    anchor: Optional[int] = None
    byte_count: int = 0
    segments: List[Tuple[int, bytes]] = field(default_factory=list)

    def add(self, seq: int, payload: bytes, flags: int) -> None:
        if flags & TH_SYN:
            self.isn = seq
        if not payload:
            return
        self.byte_count += len(payload)
        if self.isn is not None:
            if (seq - self.isn - 1) % SEQ_MOD >= self.cap:
                # provably beyond the cap (or stale): count it, drop the bytes
                return
        elif self.anchor is None or _seq_before(seq, self.anchor):
            # no SYN: the lowest sequence number seen stands in for the start
            self.anchor = seq
            self.segments = [(s, p) for s, p in self.segments if (s - seq) % SEQ_MOD < self.cap]
        elif (seq - self.anchor) % SEQ_MOD >= self.cap:
            return
        self.segments.append((seq, payload))

    def start(self) -> Optional[int]:
        if self.isn is not None:
            return (self.isn + 1) % SEQ_MOD
        return self.anchor

    def rebuild(self) -> Tuple[bytes, bool]:
        """
        In-order stream up to the cap, and whether it is known to be cut.

        Without a SYN the stream start is only trusted when it opens with a
        handshake record; anything else means the capture began mid-stream.
        """
        start = self.start()
        if start is None:
            return b"", False

        pieces = sorted(((seq - start) % SEQ_MOD, payload) for seq, payload in self.segments)
        stream = bytearray()
        gap = False
        for offset, payload in pieces:
            if offset >= self.cap:
                break
            if offset > len(stream):
                gap = True
                break
            overlap = len(stream) - offset
            if overlap < len(payload):
                stream += payload[overlap:]
        stream = bytes(stream[:self.cap])
        if self.isn is None and stream and not starts_with_handshake(stream):
            gap = True
        return stream, gap


@dataclass
class _FlowState:
    key: FlowKey
    cap: int
    first_ts: float = float("inf")
    last_ts: float = float("-inf")
    syn_direction: Optional[Direction] = None
    synack_direction: Optional[Direction] = None
    first_datagram: Optional[Tuple[float, int, bytes]] = None
    directions: Dict[Direction, _DirectionState] = field(default_factory=dict)

    def state(self, direction: Direction) -> _DirectionState:
        if direction not in self.directions:
            self.directions[direction] = _DirectionState(self.cap)
        return self.directions[direction]

    def add(self, event: PacketEvent) -> None:
        self.first_ts = min(self.first_ts, event.timestamp)
        self.last_ts = max(self.last_ts, event.timestamp)

        if event.flags & TH_SYN:
            if event.flags & TH_ACK:
                self.synack_direction = event.direction
            else:
                self.syn_direction = event.direction

        if self.key.transport is Transport.UDP and event.payload:
            candidate = (event.timestamp, 0 if event.direction is Direction.FORWARD else 1, event.payload)
            if self.first_datagram is None or candidate < self.first_datagram:
                self.first_datagram = candidate

        self.state(event.direction).add(event.seq, event.payload, event.flags)

    def initiator(self) -> Direction:
        if self.syn_direction is not None:
            return self.syn_direction
        if self.synack_direction is not None:
            return self.synack_direction.flip()
        return Direction.FORWARD


def looks_like_quic(datagram: bytes) -> bool:
    """QUIC long header: form and fixed bits set, non-zero version."""
    return len(datagram) >= 7 and datagram[0] & 0xC0 == 0xC0 and datagram[1:5] != b"\x00\x00\x00\x00"


def parse_handshake(
    up_stream: bytes,
    down_stream: bytes,
    resync: bool = False
) -> Tuple[Optional[TlsClientHello], Optional[TlsServerHello], Optional[PrivacyAssessment]]:
    """Recover hello metadata from the two reassembled streams of a flow."""
    client = parse_records(up_stream, resync=resync)
    if not client.records:
        return None, None, None
    try:
        client_hello = client_hello_from_records(client.records)
    except TlsParseError as e:
        logger.debug(f"No ClientHello in initiator stream: {e}")
        return None, None, None

    server_hello = None
    server = parse_records(down_stream, resync=resync)
    if server.records:
        try:
            server_hello = parse_server_hello(server.records)
        except (TlsParseError, ValueError) as e:
            logger.debug(f"No ServerHello in responder stream: {e}")

    return client_hello, server_hello, assess_privacy(client_hello, server_hello)


def _finish_flow(flow: _FlowState, resync: bool) -> FlowRecord:
    initiator = flow.initiator()
    responder = initiator.flip()
    key = flow.key if initiator is Direction.FORWARD else flow.key.reversed()
    up = flow.state(initiator)
    down = flow.state(responder)

    record = FlowRecord(
        key=key,
        first_ts=flow.first_ts,
        last_ts=flow.last_ts,
        bytes_up=up.byte_count,
        bytes_down=down.byte_count,
    )

    if flow.key.transport is Transport.UDP:
        record.quic_suspected = flow.first_datagram is not None and looks_like_quic(flow.first_datagram[2])
        return record

    up_stream, up_gap = up.rebuild()
    down_stream, down_gap = down.rebuild()
    record.truncated = up_gap or down_gap
    if record.truncated:
        logger.debug(f"Sequence gap or unseen stream start in {key}; handshake parsing stops there")

    record.client_hello, record.server_hello, record.assessment = parse_handshake(up_stream, down_stream, resync)
    return record


def reassemble_flows(
    events: Iterable[PacketEvent],
    per_flow_cap: int = DEFAULT_PER_FLOW_CAP,
    workers: int = 1,
    resync: bool = False
) -> List[FlowRecord]:
    """
    Group events into flows, rebuild each direction's byte stream up to
    `per_flow_cap` bytes and parse the handshakes.

    The result does not depend on event order: segments are placed by
    sequence number, retransmissions are deduplicated, timestamps are
    reduced with min/max. Byte counters include every payload byte seen.
    Flows are returned ordered by first_ts, then FlowKey.
    """
    flows: Dict[FlowKey, _FlowState] = {}
    for event in events:
        flow = flows.get(event.key)
        if flow is None:
            flow = flows[event.key] = _FlowState(event.key, per_flow_cap)
        flow.add(event)

    ordered = sorted(flows.values(), key=lambda f: (f.first_ts, f.key.sort_key()))
    if workers > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            records = list(executor.map(lambda f: _finish_flow(f, resync), ordered))
    else:
        records = [_finish_flow(f, resync) for f in ordered]

    records.sort(key=lambda r: (r.first_ts, r.key.sort_key()))
    truncated = sum(1 for r in records if r.truncated)
    if truncated:
        logger.warning(f"{truncated} of {len(records)} flows have sequence gaps")
    return records


# ================================
# REPORTS
# ================================

def flows_report_frame(flows: Iterable[FlowRecord], mirror: bool = False) -> pd.DataFrame:
    ordered = sorted(flows, key=lambda r: (r.first_ts, r.key.sort_key()))
    columns = REPORT_COLUMNS + (MIRROR_EXTRA_COLUMNS if mirror else [])
    rows = [r.to_mirror_row() if mirror else r.to_row() for r in ordered]
    return pd.DataFrame(rows, columns=columns)


def mirror_path_for(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".jsonl")


def export_report(flows: List[FlowRecord], path: Union[str, Path], jsonl: bool = True) -> Optional[Path]:
    """
    Write the CSV report (one row per flow, ordered by first_ts) and,
    when `jsonl` is set, the JSON-lines mirror next to it. Returns the
    mirror path, if written.
    """
    path = Path(path)
    save_dataframe(flows_report_frame(flows), path, format="csv")
    if not jsonl:
        return None
    mirror = mirror_path_for(path)
    save_jsonl(mirror, flows_report_frame(flows, mirror=True).to_dict(orient="records"))
    return mirror


def _typed_flow_table(df: pd.DataFrame) -> pd.DataFrame:
    df = df.copy()
    for column in ("src_port", "dst_port", "bytes_up", "bytes_down"):
        df[column] = pd.to_numeric(df[column]).astype("int64")
    for column in ("session_length_s", "first_ts", "last_ts"):
        df[column] = pd.to_numeric(df[column]).astype("float64")
    for column in ("ech", "truncated"):
        df[column] = df[column].map(lambda v: v if isinstance(v, bool) else str(v).lower() == "true").astype(bool)
    for column in ("src_ip", "dst_ip", "tls_version", "sni", "alpn", "privacy_level", "transport"):
        df[column] = df[column].fillna("").astype(str)
    return df


def load_flow_table(path: Union[str, Path]) -> pd.DataFrame:
    """
    Read a CSV or JSON-lines report back into a typed flow table.

    The CSV carries no absolute timestamps: each flow is placed at
    first_ts = 0, last_ts = session_length_s.
    """
    path = Path(path)
    try:
        if path.suffix.lower() == ".jsonl":
            df = load_dataframe(path, format="jsonl")
            if df.empty:
                df = pd.DataFrame(columns=REPORT_COLUMNS + MIRROR_EXTRA_COLUMNS)
        else:
            df = load_dataframe(path, format="csv")
            missing = [c for c in REPORT_COLUMNS if c not in df.columns]
            if missing:
                raise CorruptCapture(f"report lacks columns {missing}", path=path)
            df["first_ts"] = "0"
            df["last_ts"] = df["session_length_s"]
            df["transport"] = ["udp" if v == TLS_VERSION_QUIC else "tcp" for v in df["tls_version"]]
            df["truncated"] = "false"
            if len(df):
                logger.warning(
                    f"{path.name} has no absolute timestamps; flows are placed at t=0 "
                    "and temporal overlap is approximate"
                )
        return _typed_flow_table(df[REPORT_COLUMNS + MIRROR_EXTRA_COLUMNS])
    except EchoscopeError:
        raise
    except Exception as e:
        logger.error(f"Error loading flow table from {path}")
        raise EchoscopeException(e, sys)


class CaptureIngestion:
    """
    Capture ingestion component.
    Reads a capture, rebuilds flows, writes the CSV report and its mirror.
    """

    def __init__(self, config: CaptureConfig):
        self.config = config
        self.flows: List[FlowRecord] = []
        logger.info("CaptureIngestion component initialized")

    def extract_flows(self, capture_path: Path) -> List[FlowRecord]:
        try:
            logger.info(f"Reading capture {capture_path} ({get_file_size(capture_path)})")
            events = read_capture(capture_path, include_control=True)
            flows = reassemble_flows(
                events,
                per_flow_cap=self.config.per_flow_cap_bytes,
                workers=self.config.workers,
                resync=self.config.resync_records,
            )
            logger.info(f"Rebuilt {len(flows)} flows")
            for flow in flows:
                logger.debug(f"{flow.key} sni={flow.sni} tls={flow.tls_version} level={flow.privacy_level}")
            return flows

        except EchoscopeError:
            logger.error(f"Capture {capture_path} could not be read")
            raise
        except Exception as e:
            logger.error(f"Error extracting flows from {capture_path}")
            raise EchoscopeException(e, sys)

    def initiate_capture_ingestion(
        self,
        capture_path: Union[str, Path],
        report_path: Optional[Union[str, Path]] = None
    ) -> AnalysisArtifact:
        """
        Main method: capture in, CSV report (and JSON-lines mirror) out.

        Returns:
            AnalysisArtifact: Artifact describing the extraction
        """
        try:
            logger.info("=" * 60)
            logger.info("STARTING CAPTURE ANALYSIS")
            logger.info("=" * 60)

            start_time = datetime.now()
            capture_path = Path(capture_path)
            if report_path is None:
                create_directories([self.config.artifact_dir])
                report_path = self.config.artifact_dir / f"{capture_path.stem}.csv"
            report_path = Path(report_path)

            self.flows = self.extract_flows(capture_path)
            mirror = export_report(self.flows, report_path, jsonl=self.config.write_jsonl_mirror)

            duration = (datetime.now() - start_time).total_seconds()
            artifact = AnalysisArtifact(
                success=True,
                report_path=report_path,
                mirror_path=mirror,
                flow_count=len(self.flows),
                tls_flow_count=sum(1 for f in self.flows if f.client_hello is not None),
                ech_flow_count=sum(1 for f in self.flows if f.ech),
                truncated_flow_count=sum(1 for f in self.flows if f.truncated),
                timestamp=get_timestamp("%Y-%m-%d %H:%M:%S"),
                duration_seconds=duration,
            )

            logger.info("=" * 60)
            logger.info(artifact.get_status_message())
            logger.info("=" * 60)
            return artifact

        except EchoscopeError:
            raise
        except Exception as e:
            logger.error("Capture analysis failed")
            raise EchoscopeException(e, sys)
