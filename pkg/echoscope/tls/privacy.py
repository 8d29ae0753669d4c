from typing import Optional

from echoscope.tls.ech import detect_ech
from echoscope.tls.messages import (
    PrivacyAssessment,
    PrivacyLevel,
    TlsClientHello,
    TlsServerHello,
    TlsVersion,
)


def assess_privacy(ch: TlsClientHello, sh: Optional[TlsServerHello] = None) -> PrivacyAssessment:
    """
    Grade what an on-path observer learns from a session's handshake.

    The negotiated version wins over the offered one when the ServerHello is
    known. Without it, certificate exposure is inferred from the offered
    version and flagged as inferred. Total: never raises.
    """
    notes = []
    if sh is not None:
        version = sh.negotiated_version
    else:
        version = ch.effective_version

    ech_present, _ = detect_ech(ch)
    if ech_present:
        notes.append("ECH extension present (GREASE ECH is indistinguishable)")

    is_tls13 = version is TlsVersion.TLS1_3

    if is_tls13 and ech_present:
        # Outer SNI is the fronting server's innocuous public name
        return PrivacyAssessment(
            effective_version=TlsVersion.TLS1_3,
            sni_exposed=False,
            certificate_exposed=False,
            ech_present=True,
            privacy_level=PrivacyLevel.FULL_ECH,
            certificate_inferred=sh is None,
            notes=tuple(notes),
        )

    if is_tls13:
        if ch.sni is None:
            notes.append("TLS 1.3 without SNI")
        return PrivacyAssessment(
            effective_version=TlsVersion.TLS1_3,
            sni_exposed=ch.sni is not None,
            certificate_exposed=False,
            ech_present=False,
            privacy_level=PrivacyLevel.PARTIAL_TLS13,
            certificate_inferred=sh is None,
            notes=tuple(notes),
        )

    if sh is not None:
        certificate_exposed = sh.certificate_in_clear
    else:
        certificate_exposed = True
        notes.append("certificate exposure inferred from version")
    if ech_present:
        notes.append("ECH offered without TLS 1.3 has no effect")

    return PrivacyAssessment(
        effective_version=version,
        sni_exposed=ch.sni is not None,
        certificate_exposed=certificate_exposed,
        ech_present=ech_present,
        privacy_level=PrivacyLevel.NONE,
        certificate_inferred=sh is None,
        notes=tuple(notes),
    )
