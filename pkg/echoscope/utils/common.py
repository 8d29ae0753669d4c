"""
Common utility functions for echoscope.
File helpers shared by the pipeline stages.
"""

import sys
import json
import yaml
import pandas as pd
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union
from datetime import datetime

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import EchoscopeException, IoFailure

logger = get_logger(__name__)


def read_yaml(file_path: Union[str, Path]) -> Dict:
    """
    Read a YAML document.

    Args:
        file_path: Path to YAML file

    Returns:
        Dict: Parsed document ({} for an empty file)

    Raises:
        EchoscopeException: If file cannot be read
    """
    try:
        file_path = Path(file_path)

        if not file_path.exists():
            raise FileNotFoundError(f"YAML file not found: {file_path}")

        with open(file_path, "r", encoding="utf-8") as f:
            content = yaml.safe_load(f)

        logger.debug(f"Loaded YAML from: {file_path}")
        return content if content else {}

    except Exception as e:
        logger.error(f"Error reading YAML file: {file_path}")
        raise EchoscopeException(e, sys)


def read_yaml_documents(file_path: Union[str, Path]) -> List[Dict]:
    """Read every document of a multi-document YAML stream (empty ones dropped)."""
    try:
        file_path = Path(file_path)

        if not file_path.exists():
            raise FileNotFoundError(f"YAML file not found: {file_path}")

        with open(file_path, "r", encoding="utf-8") as f:
            documents = [doc for doc in yaml.safe_load_all(f) if doc]

        logger.debug(f"Loaded {len(documents)} YAML documents from: {file_path}")
        return documents

    except Exception as e:
        logger.error(f"Error reading YAML file: {file_path}")
        raise EchoscopeException(e, sys)


def save_yaml(file_path: Union[str, Path], data: Dict, header_comment: Optional[str] = None) -> None:
    """Write a YAML document, optionally preceded by '#' comment lines."""
    try:
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)

        body = yaml.safe_dump(data, sort_keys=False, default_flow_style=False)
        with open(file_path, "w", encoding="utf-8", newline="\n") as f:
            if header_comment:
                for line in header_comment.splitlines():
                    f.write(f"# {line}".rstrip() + "\n")
            f.write(body)

        logger.info(f"Saved YAML to: {file_path}")

    except Exception as e:
        logger.error(f"Error saving YAML file: {file_path}")
        raise IoFailure(f"cannot write YAML: {e}", path=file_path)


def save_json(file_path: Union[str, Path], data: Any) -> None:
    try:
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)

        with open(file_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(data, f, indent=4, default=str)
            f.write("\n")

        logger.info(f"Saved JSON to: {file_path}")

    except Exception as e:
        logger.error(f"Error saving JSON file: {file_path}")
        raise IoFailure(f"cannot write JSON: {e}", path=file_path)


def load_json(file_path: Union[str, Path]) -> Any:
    try:
        file_path = Path(file_path)

        if not file_path.exists():
            raise FileNotFoundError(f"JSON file not found: {file_path}")

        with open(file_path, "r", encoding="utf-8") as f:
            data = json.load(f)

        logger.debug(f"Loaded JSON from: {file_path}")
        return data

    except Exception as e:
        logger.error(f"Error loading JSON file: {file_path}")
        raise EchoscopeException(e, sys)


def save_jsonl(file_path: Union[str, Path], rows: Iterable[Dict]) -> None:
    """Write one JSON object per line (floats keep full precision)."""
    try:
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)

        with open(file_path, "w", encoding="utf-8", newline="\n") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=False))
                f.write("\n")

        logger.info(f"Saved JSON lines to: {file_path}")

    except Exception as e:
        logger.error(f"Error saving JSON lines file: {file_path}")
        raise IoFailure(f"cannot write JSON lines: {e}", path=file_path)


def save_dataframe(
    df: pd.DataFrame,
    file_path: Union[str, Path],
    format: str = "csv"
) -> None:
    try:
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)

        if format.lower() == "csv":
            # RFC 4180: CRLF record separator, minimal quoting
            df.to_csv(file_path, index=False, lineterminator="\r\n")
        elif format.lower() == "jsonl":
            save_jsonl(file_path, df.to_dict(orient="records"))
        else:
            raise ValueError(f"Unsupported format: {format}")

        logger.info(f"Saved table to: {file_path} (format: {format}, rows: {len(df)})")

    except Exception as e:
        logger.error(f"Error saving table to: {file_path}")
        raise IoFailure(f"cannot write table: {e}", path=file_path)


def load_dataframe(
    file_path: Union[str, Path],
    format: str = "csv"
) -> pd.DataFrame:
    try:
        file_path = Path(file_path)

        if not file_path.exists():
            raise FileNotFoundError(f"File not found: {file_path}")

        if format.lower() == "csv":
            # Keep every cell as text; callers apply the schema
            df = pd.read_csv(file_path, dtype=str, keep_default_na=False)
        elif format.lower() == "jsonl":
            df = pd.DataFrame(load_jsonl(file_path))
        else:
            raise ValueError(f"Unsupported format: {format}")

        logger.info(f"Loaded table from: {file_path} (shape: {df.shape})")
        return df

    except Exception as e:
        logger.error(f"Error loading table from: {file_path}")
        raise EchoscopeException(e, sys)


def save_text(file_path: Union[str, Path], text: str) -> None:
    try:
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        logger.info(f"Saved text to: {file_path}")
    except Exception as e:
        logger.error(f"Error saving text file: {file_path}")
        raise IoFailure(f"cannot write file: {e}", path=file_path)


def create_directories(directories: List[Union[str, Path]]) -> None:
    try:
        for directory in directories:
            dir_path = Path(directory)
            dir_path.mkdir(parents=True, exist_ok=True)
            logger.debug(f"Directory ensured: {dir_path}")

    except Exception as e:
        logger.error("Error creating directories")
        raise EchoscopeException(e, sys)


def get_file_size(file_path: Union[str, Path]) -> str:
    try:
        file_path = Path(file_path)
        if not file_path.exists():
            return "File not found"

        size_bytes = file_path.stat().st_size

        for unit in ['B', 'KB', 'MB', 'GB', 'TB']:
            if size_bytes < 1024.0:
                return f"{size_bytes:.2f} {unit}"
            size_bytes /= 1024.0

        return f"{size_bytes:.2f} PB"

    except Exception:
        logger.warning(f"Error getting file size for: {file_path}")
        return "Unknown"


def get_timestamp(format: str = "%Y%m%d_%H%M%S") -> str:
    return datetime.now().strftime(format)
