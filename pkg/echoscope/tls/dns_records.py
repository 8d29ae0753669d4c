"""
Pre-fetched DNS HTTPS/SVCB records carrying ECH configurations.

File grammar, one record per line:

    owner TTL [IN] HTTPS|SVCB priority target key=value ...

Blank lines and lines starting with ';' or '#' are ignored. The `ech`
parameter is base64 text armor around an ECHConfigList. Record data is
parsed with dnspython's SVCB/HTTPS presentation-format parser; no resolver
is ever contacted.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import dns.exception
import dns.name
import dns.rdata
import dns.rdataclass
import dns.rdatatype
from dns.rdtypes.svcbbase import ParamKey

from echoscope.exception.exception import DnsRecordError, EchError
from echoscope.logging.logger import get_logger
from echoscope.tls.ech import AnyEchConfig, parse_ech_config_list

logger = get_logger(__name__)

RECORD_TYPES = {"HTTPS": dns.rdatatype.HTTPS, "SVCB": dns.rdatatype.SVCB}


@dataclass(frozen=True)
class DnsEchRecord:
    owner: str
    ttl: int
    priority: int
    target_name: str
    alpn: Tuple[str, ...] = ()
    ip_hints: Tuple[str, ...] = ()
    port: Optional[int] = None
    ech_config_list: Tuple[AnyEchConfig, ...] = field(default=())

    @property
    def advertises_ech(self) -> bool:
        return len(self.ech_config_list) > 0


def _host(name: dns.name.Name) -> str:
    return name.to_text(omit_final_dot=True).lower()


def parse_dns_record(line: str, path: Optional[Union[str, Path]] = None, line_no: Optional[int] = None) -> DnsEchRecord:
    tokens = line.split()
    if len(tokens) < 5:
        raise DnsRecordError(f"line {line_no}: too few fields", path=path)

    owner, ttl_text = tokens[0], tokens[1]
    rest = tokens[2:]
    if rest[0].upper() == "IN":
        rest = rest[1:]
    if not rest or rest[0].upper() not in RECORD_TYPES:
        raise DnsRecordError(f"line {line_no}: expected HTTPS or SVCB record type", path=path)
    rdtype = RECORD_TYPES[rest[0].upper()]

    try:
        ttl = int(ttl_text)
    except ValueError:
        raise DnsRecordError(f"line {line_no}: TTL {ttl_text!r} is not an integer", path=path)

    try:
        rdata = dns.rdata.from_text(
            dns.rdataclass.IN, rdtype, " ".join(rest[1:]), origin=dns.name.root
        )
    except dns.exception.DNSException as e:
        raise DnsRecordError(f"line {line_no}: {e}", path=path)

    owner_name = owner.rstrip(".").lower()
    target = _host(rdata.target)
    if rdata.target == dns.name.root:
        # ServiceMode "." means the owner name itself
        target = owner_name

    params = rdata.params
    alpn = ()
    if ParamKey.ALPN in params:
        alpn = tuple(i.decode("ascii", errors="replace") for i in params[ParamKey.ALPN].ids)
    hints = []
    for key in (ParamKey.IPV4HINT, ParamKey.IPV6HINT):
        if key in params:
            hints.extend(str(a) for a in params[key].addresses)
    port = params[ParamKey.PORT].port if ParamKey.PORT in params else None

    configs: Tuple[AnyEchConfig, ...] = ()
    if ParamKey.ECH in params:
        try:
            configs = tuple(parse_ech_config_list(params[ParamKey.ECH].ech))
        except EchError as e:
            e.path = str(path) if path is not None else None
            raise

    return DnsEchRecord(
        owner=owner_name,
        ttl=ttl,
        priority=rdata.priority,
        target_name=target,
        alpn=alpn,
        ip_hints=tuple(hints),
        port=port,
        ech_config_list=configs,
    )


def load_dns_records(path: Union[str, Path]) -> List[DnsEchRecord]:
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith((";", "#")):
                continue
            records.append(parse_dns_record(stripped, path=path, line_no=line_no))

    logger.info(f"Loaded {len(records)} HTTPS/SVCB records from {path}")
    return records


def ech_configs_for(records: List[DnsEchRecord], name: str) -> List[AnyEchConfig]:
    """ECH configs published for `name` (AliasMode records are skipped)."""
    name = name.rstrip(".").lower()
    for record in sorted(records, key=lambda r: r.priority):
        if record.owner == name and record.priority > 0 and record.advertises_ech:
            return list(record.ech_config_list)
    return []
