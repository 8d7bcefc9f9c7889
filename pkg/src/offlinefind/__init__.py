"""Crowd-sourced offline device finding: protocol primitives and analytics.

Subsystems:

- :mod:`offlinefind.keys` -- master beacon key and the rolling key chain
- :mod:`offlinefind.advert` -- 37-byte BLE advertisement frame codec
- :mod:`offlinefind.reportcrypto` -- encrypted 88-byte location reports
- :mod:`offlinefind.service` / :mod:`offlinefind.httpd` -- report server
- :mod:`offlinefind.sim` -- deterministic lost/finder/owner simulation
- :mod:`offlinefind.geodesy` / :mod:`offlinefind.analytics` -- evaluation
  pipeline (geodesics, path estimation, top locations)
"""

__version__ = "0.1.0"

from .advert import AdvertPayloadFields, BleFrame, decode_advert, encode_advert, is_offline_finding
from .keys import (
    AdvertisementKeyPair,
    KeyChain,
    MasterBeaconKey,
    SeededEntropy,
    derive_pair,
    diversify,
    export_cache,
    generate_master,
    import_cache,
    key_at,
    keys_in_window,
    roll_symmetric,
)
from .reportcrypto import (
    EncryptedReport,
    LocationMessage,
    decode_location,
    decode_report,
    decrypt_report,
    encode_location,
    encode_report,
    encrypt_report,
)
from .service import CorrelationFinding, ReportStore, StoredReport
from .sim import (
    FinderSpec,
    LostDeviceSpec,
    ScenarioConfig,
    owner_retrieve,
    run_correlation_demo,
    run_relay_attack,
    run_scenario,
)

__all__ = [
    "AdvertPayloadFields",
    "AdvertisementKeyPair",
    "BleFrame",
    "CorrelationFinding",
    "EncryptedReport",
    "FinderSpec",
    "KeyChain",
    "LocationMessage",
    "LostDeviceSpec",
    "MasterBeaconKey",
    "ReportStore",
    "ScenarioConfig",
    "SeededEntropy",
    "StoredReport",
    "decode_advert",
    "decode_location",
    "decode_report",
    "decrypt_report",
    "derive_pair",
    "diversify",
    "encode_advert",
    "encode_location",
    "encode_report",
    "encrypt_report",
    "export_cache",
    "generate_master",
    "import_cache",
    "is_offline_finding",
    "key_at",
    "keys_in_window",
    "owner_retrieve",
    "roll_symmetric",
    "run_correlation_demo",
    "run_relay_attack",
    "run_scenario",
]
