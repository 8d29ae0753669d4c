import os
from pathlib import Path

# ================================
# PROJECT ROOT & BASE PATHS
# ================================

PROJECT_ROOT = Path(__file__).parent.parent.parent.resolve()

CONFIG_DIR = PROJECT_ROOT / "configs"
PROFILES_DIR = PROJECT_ROOT / "profiles"
MODELS_DIR = PROJECT_ROOT / "models"
DNS_DIR = PROJECT_ROOT / "dns"
ARTIFACTS_DIR = PROJECT_ROOT / "artifacts"

CAPTURE_CONFIG = CONFIG_DIR / "capture.yaml"
CLASSIFIER_CONFIG = CONFIG_DIR / "classifier.yaml"
SIMULATION_CONFIG = CONFIG_DIR / "simulation.yaml"

DEFAULT_PROFILES_PATH = PROFILES_DIR / "table1.yaml"
PROFILES_ENV_VAR = "ECHOSCOPE_PROFILES"


def default_profiles_path() -> Path:
    """Profile file from ECHOSCOPE_PROFILES, else the shipped streaming-service profiles."""
    env_value = os.environ.get(PROFILES_ENV_VAR)
    return Path(env_value) if env_value else DEFAULT_PROFILES_PATH


# ================================
# TLS WIRE CODEPOINTS
# ================================

CONTENT_CHANGE_CIPHER_SPEC = 20
CONTENT_ALERT = 21
CONTENT_HANDSHAKE = 22
CONTENT_APPLICATION_DATA = 23

HANDSHAKE_CLIENT_HELLO = 1
HANDSHAKE_SERVER_HELLO = 2
HANDSHAKE_CERTIFICATE = 11

RECORD_HEADER_LEN = 5
MAX_RECORD_FRAGMENT = 2 ** 14
MAX_RECORD_PAYLOAD = 2 ** 14 + 2048

VERSION_TLS1_0 = 0x0301
VERSION_TLS1_1 = 0x0302
VERSION_TLS1_2 = 0x0303
VERSION_TLS1_3 = 0x0304

EXT_SERVER_NAME = 0x0000
EXT_ALPN = 0x0010
EXT_PRE_SHARED_KEY = 0x0029
EXT_SUPPORTED_VERSIONS = 0x002B
EXT_KEY_SHARE = 0x0033
EXT_ENCRYPTED_CLIENT_HELLO = 0xFE0D

ECH_CONFIG_VERSION = 0xFE0D
ECH_OUTER = 0
ECH_INNER = 1

GROUP_X25519 = 0x001D
GROUP_SECP256R1 = 0x0017

KEM_X25519_HKDF_SHA256 = 0x0020
KDF_HKDF_SHA256 = 0x0001
AEAD_AES_128_GCM = 0x0001

# Innocuous ALPN list placed in ECH outer hellos
OUTER_ALPN = ("h2", "http/1.1")

# ================================
# CAPTURE INGEST
# ================================

DEFAULT_PER_FLOW_CAP = 64 * 1024

REPORT_COLUMNS = [
    "src_ip",
    "src_port",
    "dst_ip",
    "dst_port",
    "tls_version",
    "sni",
    "alpn",
    "ech",
    "bytes_up",
    "bytes_down",
    "session_length_s",
    "privacy_level",
]

# Extra fields carried only by the JSON-lines mirror
MIRROR_EXTRA_COLUMNS = ["first_ts", "last_ts", "transport", "truncated"]

TLS_VERSION_UNKNOWN = "unknown"
TLS_VERSION_QUIC = "quic-opaque"
PRIVACY_LEVEL_UNKNOWN = "unknown"

# ================================
# CHANNEL CLASSIFICATION
# ================================

DEFAULT_PRIMARY_VOLUME_THRESHOLD = 1024 * 1024
DEFAULT_SIDE_VOLUME_CEILING = 256 * 1024
DEFAULT_SESSION_LENGTH_THRESHOLD = 60.0

CLASSIFICATION_REPORT_NAME = "classification.json"

# Shared CDN domains serving many tenants
SHARED_CDN_SUFFIXES = (
    ".akamaized.net",
    ".cloudfront.net",
    ".aiv-cdn.net",
    ".gstatic.com",
    ".googlesyndication.com",
)

# ================================
# SHAPER SIMULATION
# ================================

DEFAULT_SESSION_SEGMENTS = 20
DEFAULT_MIN_SIDE_RATE = 128_000

TABLE2_SERVICES = ["hotstar", "primevideo", "youtube"]

# Rendered cell labels
LABEL_NO_VIDEO = "No video"
LABEL_STOPS_AFTER_BUFFER = "No Video"
LABEL_DEGRADED = "Reduced rate and quality downgrade"
LABEL_NO_THUMBNAILS = "Video playout, no thumbnails"
LABEL_NORMAL = "Normal"

# Reference grid, keyed by (service, scenario value)
TABLE2_REFERENCE = {
    ("hotstar", "before"): LABEL_NO_VIDEO,
    ("hotstar", "during"): LABEL_STOPS_AFTER_BUFFER,
    ("primevideo", "before"): LABEL_NO_VIDEO,
    ("primevideo", "during"): LABEL_DEGRADED,
    ("youtube", "before"): LABEL_NO_THUMBNAILS,
    ("youtube", "during"): LABEL_NO_THUMBNAILS,
}

FALLBACK_BLOCKED_ROW = "primevideo (fallback blocked)"
