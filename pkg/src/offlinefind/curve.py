"""NIST P-224 curve parameters and point/scalar plumbing.

Group operations (scalar multiplication, ECDH) are delegated to the
``cryptography`` package's P-224 backend; this module owns the byte-level
conventions: 28-byte big-endian scalars and X coordinates, 57-byte
uncompressed points, and X-coordinate-only decompression.
"""

from __future__ import annotations

from dataclasses import dataclass

from cryptography.hazmat.primitives.asymmetric import ec

COORD_BYTES = 28
UNCOMPRESSED_POINT_BYTES = 1 + 2 * COORD_BYTES

# NIST P-224 (secp224r1) domain parameters.
FIELD_PRIME = 2**224 - 2**96 + 1
CURVE_A = FIELD_PRIME - 3
CURVE_B = 0xB4050A850C04B3ABF54132565044B0B7D7BFD8BA270B39432355FFB4
GENERATOR_X = 0xB70E0CBD6BB4BF7F321390B94A03C1D356C21122343280D6115C1D21
GENERATOR_Y = 0xBD376388B5F723FB4C22DFE6CD4375A05A07476444D5819985007E34
GROUP_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFF16A2E0B8F03E13DD29455C5C2A3D


class OffCurvePoint(ValueError):
    """An X coordinate (or encoded point) does not lie on P-224."""


@dataclass(frozen=True)
class CurveParams:
    """The curve group an advertisement key chain lives on."""

    generator: tuple[int, int]
    order: int
    name: str

    @property
    def q(self) -> int:
        return self.order


P224 = CurveParams(
    generator=(GENERATOR_X, GENERATOR_Y),
    order=GROUP_ORDER,
    name="NIST P-224",
)

_BACKEND_CURVE = ec.SECP224R1()


def is_on_curve(x: int, y: int) -> bool:
    return (y * y - (x * x * x + CURVE_A * x + CURVE_B)) % FIELD_PRIME == 0


def scalar_to_bytes(d: int) -> bytes:
    return d.to_bytes(COORD_BYTES, "big")


def scalar_from_bytes(data: bytes) -> int:
    return int.from_bytes(data, "big")


def public_point(d: int) -> tuple[int, int]:
    """d * G as affine coordinates. Requires 1 <= d < group order."""
    if not 1 <= d < GROUP_ORDER:
        raise ValueError("scalar outside [1, q-1]")
    nums = ec.derive_private_key(d, _BACKEND_CURVE).public_key().public_numbers()
    return nums.x, nums.y


def point_from_x(x_bytes: bytes) -> ec.EllipticCurvePublicKey:
    """Decompress a bare 28-byte X coordinate.

    The Y parity is irrelevant to an ECDH X-coordinate result, so the even
    root is chosen arbitrarily.
    """
    if len(x_bytes) != COORD_BYTES:
        raise OffCurvePoint(f"X coordinate must be {COORD_BYTES} bytes, got {len(x_bytes)}")
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(_BACKEND_CURVE, b"\x02" + x_bytes)
    except ValueError as exc:
        raise OffCurvePoint("X coordinate is not on the curve") from exc


def point_from_uncompressed(data: bytes) -> ec.EllipticCurvePublicKey:
    if len(data) != UNCOMPRESSED_POINT_BYTES or data[0] != 0x04:
        raise OffCurvePoint("expected a 57-byte uncompressed point (0x04 || X || Y)")
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(_BACKEND_CURVE, data)
    except ValueError as exc:
        raise OffCurvePoint("encoded point is not on the curve") from exc


def point_to_uncompressed(x: int, y: int) -> bytes:
    return b"\x04" + x.to_bytes(COORD_BYTES, "big") + y.to_bytes(COORD_BYTES, "big")


def private_key(d: int) -> ec.EllipticCurvePrivateKey:
    return ec.derive_private_key(d, _BACKEND_CURVE)


def ecdh_shared_secret(d: int, peer: ec.EllipticCurvePublicKey) -> bytes:
    """X coordinate of d * peer, big-endian, zero-padded to 28 bytes."""
    return private_key(d).exchange(ec.ECDH(), peer)
