import sys
from pathlib import Path
from typing import Optional, Union


def get_detailed_error_message(error: Exception, error_detail: sys) -> str:
    _, _, exc_tb = error_detail.exc_info()

    # Called outside an except block: nothing to locate
    if exc_tb is None:
        return str(error)

    # Walk to the frame that actually raised
    while exc_tb.tb_next is not None:
        exc_tb = exc_tb.tb_next

    file_name = exc_tb.tb_frame.f_code.co_filename
    line_number = exc_tb.tb_lineno
    function_name = exc_tb.tb_frame.f_code.co_name

    return (
        f"Error occurred in module [{file_name}] "
        f"at line [{line_number}] "
        f"in function [{function_name}]: "
        f"{str(error)}"
    )


class EchoscopeException(Exception):
    """Traceback-enriched wrapper for unexpected failures inside a stage."""

    def __init__(self, error_message: Exception, error_detail: sys = sys):
        super().__init__(error_message)
        self.cause = error_message
        self.error_message = get_detailed_error_message(error_message, error_detail)

    def __str__(self) -> str:
        return self.error_message

    def __repr__(self) -> str:
        return f"EchoscopeException: {self.error_message}"


# ================================
# TYPED DOMAIN ERRORS
# ================================

class EchoscopeError(Exception):
    """Base of all expected data errors. Carries file + offset when known."""

    def __init__(
        self,
        message: str,
        path: Optional[Union[str, Path]] = None,
        offset: Optional[int] = None
    ):
        super().__init__(message)
        self.message = message
        self.path = str(path) if path is not None else None
        self.offset = offset

    def __str__(self) -> str:
        location = []
        if self.path is not None:
            location.append(f"file {self.path}")
        if self.offset is not None:
            location.append(f"offset {self.offset}")
        if location:
            return f"{self.message} ({', '.join(location)})"
        return self.message


class TlsParseError(EchoscopeError):
    pass


class NotTls(TlsParseError):
    pass


class TruncatedRecord(TlsParseError):
    pass


class MalformedHandshake(TlsParseError):
    pass


class MalformedExtension(MalformedHandshake):
    pass


class DuplicateExtension(MalformedHandshake):
    pass


class NotClientHello(TlsParseError):
    pass


class NoServerHello(TlsParseError):
    pass


class EchError(EchoscopeError):
    pass


class MalformedEchConfig(EchError):
    pass


class EmptyEchConfigList(EchError):
    pass


class NoInnerSni(EchError):
    pass


class SealerFailure(EchError):
    pass


class DnsRecordError(EchError):
    pass


class CaptureError(EchoscopeError):
    pass


class UnsupportedLinkType(CaptureError):
    pass


class CorruptCapture(CaptureError):
    pass


class IoFailure(EchoscopeError):
    pass


class ConfigurationError(EchoscopeError):
    pass


class ProfileValidationError(ConfigurationError):
    pass


class NoSideChannels(EchoscopeError):
    pass


class InconsistentModel(EchoscopeError):
    pass


class IncompleteGrid(EchoscopeError):
    pass


class UsageError(EchoscopeError):
    pass
