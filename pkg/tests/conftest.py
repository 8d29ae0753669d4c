import os
from pathlib import Path

import numpy as np
import pytest

# Keep test logs out of the working tree
os.environ.setdefault("ECHOSCOPE_LOG_DIR", str(Path(__file__).parent.parent / "logs"))

from echoscope.constants import DEFAULT_PROFILES_PATH, MODELS_DIR  # noqa: E402
from echoscope.components.channel_classifier import load_profiles  # noqa: E402
from echoscope.entity.config_entity import (  # noqa: E402
    CaptureConfig,
    ClassifierConfig,
    SimulationConfig,
)
from echoscope.utils.capture_writer import write_synthetic_capture  # noqa: E402

TABLE1_HOSTS = {
    "hotstar": [
        "hesads.akamaized.net",
        "hotstar.com",
        "img1.hotstarext.com",
        "service.hotstar.com",
        "persona.hotstar.com",
        "api.hotstar.com",
        "secure-media.hotstar.com",
        "bifrost-api.hotstar.com",
    ],
    "primevideo": [
        "cloudfront.xp-assets.aiv-cdn.net",
        "atv-ps-eu.primevideo.com",
        "m.media-amazon.com",
        "fls-eu.amazon.com",
        "unagi.amazon.com",
    ],
    "youtube": [
        "fonts.gstatic.com",
        "yt3.ggpht.com",
        "i.ytimg.com",
        "pagead2.googlesyndication.com",
    ],
}

ALL_TABLE1_HOSTS = [host for hosts in TABLE1_HOSTS.values() for host in hosts]


@pytest.fixture
def rng():
    return np.random.default_rng(20231)


@pytest.fixture(scope="session")
def profiles():
    return load_profiles(DEFAULT_PROFILES_PATH)


@pytest.fixture(scope="session")
def profiles_by_name(profiles):
    return {p.service_name: p for p in profiles}


@pytest.fixture
def classifier_config(profiles):
    return ClassifierConfig(profiles=tuple(profiles), profiles_path=DEFAULT_PROFILES_PATH)


@pytest.fixture
def capture_config(tmp_path):
    return CaptureConfig(artifact_dir=tmp_path / "analysis")


@pytest.fixture
def simulation_config():
    return SimulationConfig(models_dir=MODELS_DIR, profiles_path=DEFAULT_PROFILES_PATH)


@pytest.fixture(scope="session")
def table1_capture(tmp_path_factory):
    """Every profiled host over TLS 1.2 plus one large ECH flow per service."""
    path = tmp_path_factory.mktemp("captures") / "table1.pcap"
    return write_synthetic_capture(path, TABLE1_HOSTS, ech_flows=True)


@pytest.fixture(scope="session")
def hotstar_capture(tmp_path_factory):
    path = tmp_path_factory.mktemp("captures") / "hotstar.pcapng"
    return write_synthetic_capture(path, {"hotstar": TABLE1_HOSTS["hotstar"]}, fmt="pcapng")
