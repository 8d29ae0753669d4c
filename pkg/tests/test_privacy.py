import pytest

from echoscope.constants import (
    HANDSHAKE_CERTIFICATE,
    HANDSHAKE_SERVER_HELLO,
    VERSION_TLS1_2,
    VERSION_TLS1_3,
)
from echoscope.exception.exception import NoServerHello
from echoscope.tls.builder import (
    application_data,
    make_client_hello,
    make_tls12_hello,
    make_tls13_hello,
    server_flight,
)
from echoscope.tls.ech import make_grease_ech
from echoscope.tls.handshake import parse_server_hello
from echoscope.tls.messages import PrivacyLevel, TlsServerHello, TlsVersion
from echoscope.tls.privacy import assess_privacy
from echoscope.tls.records import parse_records


def _server_hello(version, with_certificate=True):
    return parse_server_hello(parse_records(server_flight(version, with_certificate)).records)


def test_tls12_server_sends_certificate_in_clear():
    sh = _server_hello(VERSION_TLS1_2)
    assert sh.negotiated_version is TlsVersion.TLS1_2
    assert sh.certificate_in_clear
    assert sh.handshake_types_in_clear[:2] == (HANDSHAKE_SERVER_HELLO, HANDSHAKE_CERTIFICATE)


def test_tls12_resumption_has_no_certificate():
    assert not _server_hello(VERSION_TLS1_2, with_certificate=False).certificate_in_clear


def test_tls13_server_hello():
    sh = _server_hello(VERSION_TLS1_3)
    assert sh.legacy_version == VERSION_TLS1_2
    assert sh.supported_versions_selected == VERSION_TLS1_3
    assert sh.negotiated_version is TlsVersion.TLS1_3
    assert sh.key_share_group == 0x001D
    assert not sh.certificate_in_clear
    assert sh.handshake_types_in_clear == (HANDSHAKE_SERVER_HELLO,)


def test_application_data_only_has_no_server_hello():
    with pytest.raises(NoServerHello):
        parse_server_hello(parse_records(application_data(300)).records)


def test_tls13_server_hello_cannot_expose_certificate():
    with pytest.raises(ValueError):
        TlsServerHello(
            legacy_version=VERSION_TLS1_2,
            selected_cipher=0x1301,
            supported_versions_selected=VERSION_TLS1_3,
            certificate_in_clear=True,
        )


def test_tls12_exposes_everything():
    result = assess_privacy(make_tls12_hello("api.hotstar.com"), _server_hello(VERSION_TLS1_2))
    assert result.privacy_level is PrivacyLevel.NONE
    assert result.sni_exposed
    assert result.certificate_exposed
    assert not result.certificate_inferred


def test_tls12_without_server_hello_infers_certificate():
    result = assess_privacy(make_tls12_hello("api.hotstar.com"))
    assert result.certificate_exposed
    assert result.certificate_inferred


def test_tls13_hides_certificate_but_not_sni():
    result = assess_privacy(make_tls13_hello("i.ytimg.com"), _server_hello(VERSION_TLS1_3))
    assert result.privacy_level is PrivacyLevel.PARTIAL_TLS13
    assert result.sni_exposed
    assert not result.certificate_exposed


def test_negotiated_version_wins_over_offer():
    # Client offers 1.3, server settles on 1.2
    result = assess_privacy(make_tls13_hello("i.ytimg.com"), _server_hello(VERSION_TLS1_2))
    assert result.effective_version is TlsVersion.TLS1_2
    assert result.privacy_level is PrivacyLevel.NONE


def test_ech_with_tls13_is_full_ech():
    hello = make_client_hello(
        sni="cdn.example",
        versions=(VERSION_TLS1_3,),
        ech_extension=make_grease_ech(b"primary"),
    )
    result = assess_privacy(hello, _server_hello(VERSION_TLS1_3))
    assert result.privacy_level is PrivacyLevel.FULL_ECH
    assert not result.sni_exposed
    assert result.ech_present


def test_ech_downgraded_to_tls12_protects_nothing():
    hello = make_client_hello(
        sni="cdn.example",
        versions=(VERSION_TLS1_3, VERSION_TLS1_2),
        ech_extension=make_grease_ech(b"primary"),
    )
    result = assess_privacy(hello, _server_hello(VERSION_TLS1_2))
    assert result.privacy_level is PrivacyLevel.NONE
    assert result.ech_present
    assert result.sni_exposed
