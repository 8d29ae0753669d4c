import pytest

from echoscope.constants import (
    EXT_SERVER_NAME,
    GROUP_SECP256R1,
    GROUP_X25519,
    VERSION_TLS1_0,
    VERSION_TLS1_2,
    VERSION_TLS1_3,
)
from echoscope.exception.exception import (
    DuplicateExtension,
    MalformedExtension,
    MalformedHandshake,
    NotClientHello,
)
from echoscope.tls.builder import (
    client_flight,
    make_client_hello,
    make_tls12_hello,
    make_tls13_hello,
)
from echoscope.tls.codec import u8, u16, u24, vec8, vec16
from echoscope.tls.extensions import Extension, encode_server_name, is_grease
from echoscope.tls.handshake import (
    client_hello_from_records,
    parse_client_hello,
    serialize_client_hello,
)
from echoscope.tls.messages import TlsVersion
from echoscope.tls.records import frame_records, parse_records

GREASE_VALUES = [0x0A0A + 0x1010 * i for i in range(16)]
SNI_POOL = [
    "api.hotstar.com", "i.ytimg.com", "m.media-amazon.com", "fonts.gstatic.com",
    "a.example", "x" * 63 + ".example",
]


def test_tls12_hello_exposes_sni():
    hello = parse_client_hello(serialize_client_hello(make_tls12_hello("api.hotstar.com")))
    assert hello.sni == "api.hotstar.com"
    assert hello.alpn == ("http/1.1",)
    assert hello.supported_versions is None
    assert hello.effective_version is TlsVersion.TLS1_2
    assert hello.effective_version.label == "1.2"
    assert hello.ech is None


def test_tls13_hello_fields():
    hello = parse_client_hello(serialize_client_hello(make_tls13_hello("api.hotstar.com")))
    assert hello.legacy_version == VERSION_TLS1_2
    assert hello.supported_versions == (VERSION_TLS1_3, VERSION_TLS1_2)
    assert hello.effective_version is TlsVersion.TLS1_3
    assert hello.key_share_groups == (GROUP_X25519,)
    assert not hello.pre_shared_key_present


def test_supported_versions_win_over_legacy_version():
    hello = make_client_hello(sni="a.example", versions=(VERSION_TLS1_3,), legacy_version=VERSION_TLS1_0)
    assert hello.effective_version_code == VERSION_TLS1_3


def test_grease_versions_are_ignored():
    hello = make_client_hello(sni="a.example", versions=(VERSION_TLS1_2,), grease=0x3A3A)
    assert hello.supported_versions == (0x3A3A, VERSION_TLS1_2)
    assert hello.effective_version is TlsVersion.TLS1_2


def test_only_grease_falls_back_to_legacy_version():
    hello = make_client_hello(
        sni="a.example",
        extra_extensions=[Extension(0x002B, vec8(u16(0x5A5A)))],
    )
    assert hello.effective_version_code == VERSION_TLS1_2


@pytest.mark.parametrize("value", GREASE_VALUES)
def test_grease_codepoints(value):
    assert is_grease(value)


def test_non_grease_codepoints():
    assert not is_grease(VERSION_TLS1_3)
    assert not is_grease(0x0A1A)


def test_hello_without_extensions_block():
    body = u16(VERSION_TLS1_2) + bytes(32) + vec8(b"") + vec16(u16(0x002F)) + vec8(b"\x00")
    hello = parse_client_hello(u8(1) + u24(len(body)) + body)
    assert not hello.has_extensions_block
    assert hello.sni is None
    assert serialize_client_hello(hello) == u8(1) + u24(len(body)) + body


def test_duplicate_extension_is_rejected():
    sni = Extension(EXT_SERVER_NAME, encode_server_name("a.example"))
    body = (
        u16(VERSION_TLS1_2) + bytes(32) + vec8(b"") + vec16(u16(0x002F)) + vec8(b"\x00")
        + vec16(sni.encode() + sni.encode())
    )
    with pytest.raises(DuplicateExtension):
        parse_client_hello(u8(1) + u24(len(body)) + body)


def test_server_hello_type_is_not_client_hello():
    with pytest.raises(NotClientHello):
        parse_client_hello(b"\x02\x00\x00\x00")


def test_hello_longer_than_payload_is_malformed():
    data = serialize_client_hello(make_tls12_hello("a.example"))
    with pytest.raises(MalformedHandshake):
        parse_client_hello(data[:-10])


def test_empty_server_name_is_malformed():
    bad = Extension(EXT_SERVER_NAME, vec16(u8(0) + vec16(b"")))
    body = (
        u16(VERSION_TLS1_2) + bytes(32) + vec8(b"") + vec16(u16(0x002F)) + vec8(b"\x00")
        + vec16(bad.encode())
    )
    with pytest.raises(MalformedExtension):
        parse_client_hello(u8(1) + u24(len(body)) + body)


def test_hello_split_across_records():
    hello = make_tls13_hello("secure-media.hotstar.com")
    stream = frame_records(22, serialize_client_hello(hello), VERSION_TLS1_0, max_fragment=40)
    records = parse_records(stream).records
    assert len(records) > 1
    assert client_hello_from_records(records) == hello


def test_client_flight_parses_back():
    hello = make_tls12_hello("bifrost-api.hotstar.com")
    records = parse_records(client_flight(hello)).records
    assert client_hello_from_records(records).sni == "bifrost-api.hotstar.com"


def _random_hello(rng):
    versions = None
    if rng.random() < 0.7:
        versions = tuple(
            int(v) for v in rng.choice([VERSION_TLS1_3, VERSION_TLS1_2, 0x0302], size=int(rng.integers(1, 4)), replace=False)
        )
    grease = int(rng.choice(GREASE_VALUES)) if rng.random() < 0.4 else None
    groups = tuple(int(g) for g in rng.choice([GROUP_X25519, GROUP_SECP256R1], size=int(rng.integers(0, 3)), replace=False))
    alpn = None
    if rng.random() < 0.6:
        alpn = tuple(rng.choice(["h2", "http/1.1", "h3"], size=int(rng.integers(1, 3)), replace=False).tolist())
    extra = []
    if rng.random() < 0.3:
        extra.append(Extension(0x0017, b""))
    if rng.random() < 0.3:
        extra.append(Extension(0xFFCE, rng.integers(0, 256, size=int(rng.integers(0, 40)), dtype="uint8").tobytes()))
    return make_client_hello(
        sni=str(rng.choice(SNI_POOL)) if rng.random() < 0.9 else None,
        alpn=alpn,
        versions=versions,
        key_share_groups=groups,
        psk=bool(rng.random() < 0.2),
        grease=grease,
        extra_extensions=extra,
        session_id=rng.integers(0, 256, size=int(rng.integers(0, 33)), dtype="uint8").tobytes(),
        random=rng.integers(0, 256, size=32, dtype="uint8").tobytes(),
    )


def test_generated_hellos_round_trip(rng):
    for _ in range(10_000):
        hello = _random_hello(rng)
        data = serialize_client_hello(hello)
        parsed = parse_client_hello(data)
        assert parsed == hello
        assert serialize_client_hello(parsed) == data
