import pytest

from echoscope.constants import EXT_PRE_SHARED_KEY, VERSION_TLS1_3
from echoscope.exception.exception import (
    EmptyEchConfigList,
    MalformedEchConfig,
    NoInnerSni,
    SealerFailure,
)
from echoscope.components.attack_policy import apply_policy, policy_for_profile
from echoscope.tls.builder import make_client_hello, make_tls12_hello, make_tls13_hello
from echoscope.tls.codec import u16, vec16
from echoscope.tls.ech import (
    EchConfig,
    UnknownEchConfig,
    build_outer_client_hello,
    detect_ech,
    keystream_sealer,
    make_grease_ech,
    mark_inner,
    parse_ech_config_list,
    select_config,
    serialize_ech_config_list,
)
from echoscope.tls.extensions import EchVariant
from echoscope.tls.handshake import parse_client_hello, serialize_client_hello
from echoscope.tls.privacy import assess_privacy
from echoscope.tls.messages import PrivacyLevel

CONFIG = EchConfig(
    config_id=42,
    kem_id=0x0020,
    public_key=bytes(range(1, 33)),
    cipher_suites=((0x0001, 0x0001),),
    public_name="cdn.example",
)


def test_config_list_round_trip():
    configs = [CONFIG, UnknownEchConfig(0xFE0A, b"\xde\xad\xbe\xef")]
    data = serialize_ech_config_list(configs)
    assert parse_ech_config_list(data) == configs


def test_empty_config_list():
    with pytest.raises(EmptyEchConfigList):
        parse_ech_config_list(vec16(b""))


def test_duplicate_config_ids_are_rejected():
    with pytest.raises(MalformedEchConfig):
        parse_ech_config_list(serialize_ech_config_list([CONFIG, CONFIG]))


def test_trailing_bytes_are_rejected():
    with pytest.raises(MalformedEchConfig):
        parse_ech_config_list(serialize_ech_config_list([CONFIG]) + b"\x00")


def test_truncated_config_contents():
    data = serialize_ech_config_list([CONFIG])
    broken = u16(len(data) - 2 - 4) + data[2:-4]
    with pytest.raises(MalformedEchConfig):
        parse_ech_config_list(broken)


def test_select_config_skips_unknown_versions():
    configs = [UnknownEchConfig(0xFE0A, b"x"), CONFIG]
    assert select_config(configs) is CONFIG
    assert select_config(configs, 42) is CONFIG
    with pytest.raises(MalformedEchConfig):
        select_config(configs, 7)


def test_outer_hello_hides_inner_sni():
    inner = make_client_hello(
        sni="api.hotstar.com",
        alpn=("h2",),
        versions=(VERSION_TLS1_3,),
        key_share_groups=(0x001D,),
        psk=True,
    )
    outer = build_outer_client_hello(inner, CONFIG, keystream_sealer)

    assert outer.sni == "cdn.example"
    assert outer.alpn == ("h2", "http/1.1")
    assert VERSION_TLS1_3 in outer.supported_versions
    assert outer.extension(EXT_PRE_SHARED_KEY) is None
    assert outer.ech.variant is EchVariant.OUTER
    assert outer.ech.config_id == 42
    wire = serialize_client_hello(outer)
    assert b"hotstar" not in wire
    assert parse_client_hello(wire) == outer


def test_outer_payload_is_sealed_marked_inner():
    inner = make_tls13_hello("i.ytimg.com")
    seen = {}

    def recording_sealer(public_key, plaintext):
        seen["key"] = public_key
        seen["plaintext"] = plaintext
        return keystream_sealer(public_key, plaintext)

    outer = build_outer_client_hello(inner, CONFIG, recording_sealer)
    assert seen["key"] == CONFIG.public_key
    assert seen["plaintext"] == serialize_client_hello(mark_inner(inner))
    assert outer.ech.payload == keystream_sealer(CONFIG.public_key, seen["plaintext"])
    assert parse_client_hello(seen["plaintext"]).ech.variant is EchVariant.INNER


def test_tls12_inner_still_gets_tls13_outer():
    outer = build_outer_client_hello(make_tls12_hello("fonts.gstatic.com"), CONFIG, keystream_sealer)
    assert outer.effective_version_code == VERSION_TLS1_3


def test_inner_without_sni():
    with pytest.raises(NoInnerSni):
        build_outer_client_hello(make_tls13_hello(None), CONFIG, keystream_sealer)


@pytest.mark.parametrize("sealer", [
    lambda key, plaintext: b"",
    lambda key, plaintext: 1 / 0,
])
def test_sealer_failures(sealer):
    with pytest.raises(SealerFailure):
        build_outer_client_hello(make_tls13_hello("a.example"), CONFIG, sealer)


def test_mark_inner_replaces_existing_ech():
    hello = make_tls13_hello("a.example")
    marked = mark_inner(mark_inner(hello))
    assert marked.ech.variant is EchVariant.INNER
    assert sum(1 for ext in marked.extensions if ext.type == 0xFE0D) == 1


def test_grease_ech_is_detected_and_deterministic():
    first = make_grease_ech(b"seed")
    assert first == make_grease_ech(b"seed")
    assert first != make_grease_ech(b"other")

    hello = make_client_hello(sni="cdn.example", versions=(VERSION_TLS1_3,), ech_extension=first)
    detection = detect_ech(hello)
    assert detection.present
    assert len(detection.extension.payload) == 144
    assert not detect_ech(make_tls13_hello("cdn.example")).present


def test_full_ech_flows_pass_every_profile_policy(rng, profiles):
    policies = [policy_for_profile(profile) for profile in profiles]
    hosts = [h for profile in profiles for h in profile.sni_patterns if not h.startswith(".")]
    for _ in range(1_000):
        host = str(rng.choice(hosts))
        outer = build_outer_client_hello(make_tls13_hello(host), CONFIG, keystream_sealer)
        assert assess_privacy(outer).privacy_level is PrivacyLevel.FULL_ECH
        assert all(apply_policy(outer, policy).allowed for policy in policies)
