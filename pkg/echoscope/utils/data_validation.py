import sys
import os
from pathlib import Path
from typing import Tuple, Union

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import EchoscopeException, UsageError
from echoscope.constants import CLASSIFICATION_REPORT_NAME

logger = get_logger(__name__)


def check_file_exists(file_path: Union[str, Path]) -> bool:
    try:
        file_path = Path(file_path)
        exists = file_path.exists() and (file_path.is_file() or file_path.is_dir())

        if exists:
            logger.debug(f"Input exists: {file_path}")
        else:
            logger.warning(f"Input not found: {file_path}")

        return exists

    except Exception as e:
        logger.error(f"Error checking file existence: {file_path}")
        raise EchoscopeException(e, sys)


def check_file_readable(file_path: Union[str, Path]) -> bool:
    file_path = Path(file_path)
    return check_file_exists(file_path) and os.access(file_path, os.R_OK)


CAPTURE_SUFFIXES = (".pcap", ".pcapng", ".cap")
STAGE_INPUT_KINDS = {
    ".json": "classification",
    ".jsonl": "flow_table",
    ".csv": "flow_table",
    **{suffix: "capture" for suffix in CAPTURE_SUFFIXES},
}


def resolve_stage_input(path: Union[str, Path]) -> Tuple[str, Path]:
    """
    Work out what a stage input is: ("capture" | "flow_table" |
    "classification", file). A directory resolves to classification.json,
    else its first *.jsonl, *.csv, then capture file.

    Raises:
        UsageError: the input is missing or of no known kind
    """
    path = Path(path)
    if not check_file_readable(path):
        raise UsageError(f"input not found or unreadable: {path}")

    if path.is_dir():
        candidates = [path / CLASSIFICATION_REPORT_NAME] if (path / CLASSIFICATION_REPORT_NAME).is_file() else []
        for pattern in ("*.jsonl", "*.csv", *(f"*{suffix}" for suffix in CAPTURE_SUFFIXES)):
            candidates.extend(sorted(path.glob(pattern)))
        if not candidates:
            raise UsageError(f"no report or capture found in directory {path}")
        logger.debug(f"Directory {path} resolved to {candidates[0]}")
        path = candidates[0]

    kind = STAGE_INPUT_KINDS.get(path.suffix.lower())
    if kind is None:
        raise UsageError(f"cannot tell what {path} is (expected capture, CSV/JSON-lines report or classification JSON)")
    return kind, path
