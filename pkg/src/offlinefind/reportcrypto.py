"""End-to-end encryption of finder location reports.

A finder that hears an advertised key encrypts its position for the owner:

    1. generate an ephemeral P-224 key pair (d', p')
    2. ECDH(d', advertised key) -> shared secret (X coordinate, 28 bytes)
    3. X9.63-SHA256 KDF over the secret, shared info = advertised X, 32 bytes
    4. first 16 bytes  -> AES key
    5. last 16 bytes   -> GCM IV
    6. AES-GCM over the 10-byte location message

The uploaded report is 88 bytes: a 4-byte timestamp (seconds since
2001-01-01Z), one confidence byte, the 57-byte uncompressed ephemeral public
key, the 10-byte ciphertext, and the 16-byte authentication tag.  The owner
reverses the exchange with the window's private scalar d_i; any tampering or
key mismatch surfaces as a single indistinguishable authentication failure.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from datetime import datetime

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.x963kdf import X963KDF

from . import curve
from .keys import EntropySource, _draw_scalar, system_entropy
from .timebase import report_seconds, to_unix

PLAINTEXT_BYTES = 10
TAG_BYTES = 16
REPORT_BYTES = 4 + 1 + curve.UNCOMPRESSED_POINT_BYTES + PLAINTEXT_BYTES + TAG_BYTES

_COORD_SCALE = 10**7
_REPORT_STRUCT = struct.Struct(f">IB{curve.UNCOMPRESSED_POINT_BYTES}s{PLAINTEXT_BYTES}s{TAG_BYTES}s")


class AuthenticationFailure(Exception):
    """Report failed AEAD verification (wrong key, tampering, truncation)."""


@dataclass(frozen=True)
class LocationMessage:
    """Decrypted report content: WGS-84 position, accuracy, status."""

    latitude: float
    longitude: float
    accuracy: int = 0
    status: int = 0


@dataclass(frozen=True)
class EncryptedReport:
    timestamp: int  # seconds since 2001-01-01T00:00:00Z
    confidence: int
    p_eph_bytes: bytes
    ciphertext: bytes
    tag: bytes


def encode_location(msg: LocationMessage) -> bytes:
    if not -90.0 <= msg.latitude <= 90.0:
        raise ValueError(f"latitude {msg.latitude} outside [-90, 90]")
    if not -180.0 <= msg.longitude <= 180.0:
        raise ValueError(f"longitude {msg.longitude} outside [-180, 180]")
    if not 0 <= msg.accuracy <= 0xFF or not 0 <= msg.status <= 0xFF:
        raise ValueError("accuracy and status must be single bytes")
    return struct.pack(
        ">iiBB",
        int(round(msg.latitude * _COORD_SCALE)),
        int(round(msg.longitude * _COORD_SCALE)),
        msg.accuracy,
        msg.status,
    )


def decode_location(data: bytes) -> LocationMessage:
    if len(data) != PLAINTEXT_BYTES:
        raise ValueError(f"location message must be {PLAINTEXT_BYTES} bytes, got {len(data)}")
    lat_fp, lon_fp, accuracy, status = struct.unpack(">iiBB", data)
    return LocationMessage(
        latitude=lat_fp / _COORD_SCALE,
        longitude=lon_fp / _COORD_SCALE,
        accuracy=accuracy,
        status=status,
    )


def encode_report(report: EncryptedReport) -> bytes:
    return _REPORT_STRUCT.pack(
        report.timestamp,
        report.confidence,
        report.p_eph_bytes,
        report.ciphertext,
        report.tag,
    )


def decode_report(data: bytes) -> EncryptedReport:
    if len(data) != REPORT_BYTES:
        raise ValueError(f"report must be {REPORT_BYTES} bytes, got {len(data)}")
    timestamp, confidence, p_eph, ciphertext, tag = _REPORT_STRUCT.unpack(data)
    return EncryptedReport(
        timestamp=timestamp,
        confidence=confidence,
        p_eph_bytes=p_eph,
        ciphertext=ciphertext,
        tag=tag,
    )


def _session_material(shared_secret: bytes, advertised_x: bytes) -> tuple[bytes, bytes]:
    derived = X963KDF(algorithm=hashes.SHA256(), length=32, sharedinfo=advertised_x).derive(
        shared_secret
    )
    return derived[:16], derived[16:]


def encrypt_report(
    advertised_x: bytes,
    msg: LocationMessage,
    timestamp: int | datetime,
    entropy: EntropySource = system_entropy,
    confidence: int = 0,
) -> EncryptedReport:
    """Encrypt a location message under an advertised public key.

    ``timestamp`` may be an aware datetime or raw seconds since the 2001
    epoch.  Deterministic under a seeded entropy source.
    """
    if isinstance(timestamp, datetime):
        timestamp = report_seconds(to_unix(timestamp))
    p_adv = curve.point_from_x(advertised_x)
    d_eph = _draw_scalar(entropy, curve.GROUP_ORDER)
    eph_priv = curve.private_key(d_eph)
    shared = eph_priv.exchange(ec.ECDH(), p_adv)
    enc_key, iv = _session_material(shared, advertised_x)
    sealed = AESGCM(enc_key).encrypt(iv, encode_location(msg), None)
    nums = eph_priv.public_key().public_numbers()
    return EncryptedReport(
        timestamp=timestamp,
        confidence=confidence,
        p_eph_bytes=curve.point_to_uncompressed(nums.x, nums.y),
        ciphertext=sealed[:PLAINTEXT_BYTES],
        tag=sealed[PLAINTEXT_BYTES:],
    )


def decrypt_report(d: int, report: EncryptedReport) -> LocationMessage:
    """Decrypt with the advertisement private scalar for the matching window."""
    try:
        p_eph = curve.point_from_uncompressed(report.p_eph_bytes)
    except curve.OffCurvePoint as exc:
        raise AuthenticationFailure("report verification failed") from exc
    advertised_x = curve.public_point(d)[0].to_bytes(curve.COORD_BYTES, "big")
    shared = curve.ecdh_shared_secret(d, p_eph)
    enc_key, iv = _session_material(shared, advertised_x)
    try:
        plaintext = AESGCM(enc_key).decrypt(iv, report.ciphertext + report.tag, None)
    except InvalidTag as exc:
        raise AuthenticationFailure("report verification failed") from exc
    return decode_location(plaintext)
