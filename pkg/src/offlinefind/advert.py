"""Codec for the 37-byte offline-finding BLE advertisement frame.

A frame is the 6-byte advertising address followed by a 31-byte payload.  The
28-byte public-key X coordinate does not fit in the payload alone, so the
first six key bytes ride in the address; the BLE random-address rule forces
the address's top two bits to 0b11, and the displaced two key bits are parked
near the end of the payload.

Byte map (zero-indexed from the start of the frame):

    0-5    address: (x[0] | 0b11000000) || x[1..5]
    6      payload length (30)
    7      advertising data type (0xFF, manufacturer-specific)
    8-9    company id (0x004C, little-endian on the wire)
    10     offline-finding type (0x12)
    11     offline-finding data length (25)
    12     status byte (opaque, e.g. battery level)
    13-34  x[6..27]
    35     x[0] >> 6 (the two displaced bits)
    36     hint byte (0x00 on phone-generated frames)
"""

from __future__ import annotations

from dataclasses import dataclass

ADDRESS_BYTES = 6
PAYLOAD_BYTES = 31
FRAME_BYTES = ADDRESS_BYTES + PAYLOAD_BYTES
KEY_BYTES = 28

PAYLOAD_LENGTH_BYTE = 30
ADV_TYPE_MANUFACTURER = 0xFF
COMPANY_ID = 0x004C
OF_TYPE = 0x12
OF_DATA_LENGTH = 25


class NotOfflineFinding(ValueError):
    """Frame is not an offline-finding advertisement; names the bad field."""

    def __init__(self, field: str, detail: str):
        super().__init__(f"{field}: {detail}")
        self.field = field


@dataclass(frozen=True)
class AdvertPayloadFields:
    """Decoded content of a frame: status, hint, and the public-key X bytes."""

    x_bytes: bytes
    status: int = 0
    hint: int = 0

    def __post_init__(self):
        if len(self.x_bytes) != KEY_BYTES:
            raise ValueError(f"public key X coordinate must be {KEY_BYTES} bytes")
        if not 0 <= self.status <= 0xFF or not 0 <= self.hint <= 0xFF:
            raise ValueError("status and hint must be single bytes")


@dataclass(frozen=True)
class BleFrame:
    address: bytes
    payload: bytes

    def __post_init__(self):
        if len(self.address) != ADDRESS_BYTES or len(self.payload) != PAYLOAD_BYTES:
            raise ValueError(f"frame must be {ADDRESS_BYTES}+{PAYLOAD_BYTES} bytes")

    @property
    def frame_bytes(self) -> bytes:
        return self.address + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "BleFrame":
        if len(data) != FRAME_BYTES:
            raise ValueError(f"frame must be {FRAME_BYTES} bytes, got {len(data)}")
        return cls(address=bytes(data[:ADDRESS_BYTES]), payload=bytes(data[ADDRESS_BYTES:]))

    def hexdump(self) -> str:
        return " ".join(f"{b:02X}" for b in self.frame_bytes)


def encode_advert(fields: AdvertPayloadFields) -> BleFrame:
    x = fields.x_bytes
    address = bytes([x[0] | 0b11000000]) + x[1:6]
    payload = (
        bytes([
            PAYLOAD_LENGTH_BYTE,
            ADV_TYPE_MANUFACTURER,
            COMPANY_ID & 0xFF,
            COMPANY_ID >> 8,
            OF_TYPE,
            OF_DATA_LENGTH,
            fields.status,
        ])
        + x[6:28]
        + bytes([x[0] >> 6, fields.hint])
    )
    return BleFrame(address=address, payload=payload)


def decode_advert(frame: BleFrame) -> AdvertPayloadFields:
    raw = frame.frame_bytes
    if raw[6] != PAYLOAD_LENGTH_BYTE:
        raise NotOfflineFinding("length", f"payload length byte 0x{raw[6]:02X} != 0x{PAYLOAD_LENGTH_BYTE:02X}")
    if raw[7] != ADV_TYPE_MANUFACTURER:
        raise NotOfflineFinding("adv-type", f"advertising type 0x{raw[7]:02X} != 0xFF")
    company = raw[8] | (raw[9] << 8)
    if company != COMPANY_ID:
        raise NotOfflineFinding("company", f"company id 0x{company:04X} != 0x{COMPANY_ID:04X}")
    if raw[10] != OF_TYPE:
        raise NotOfflineFinding("type", f"subtype 0x{raw[10]:02X} != 0x{OF_TYPE:02X}")
    if raw[11] != OF_DATA_LENGTH:
        raise NotOfflineFinding("data-length", f"data length byte {raw[11]} != {OF_DATA_LENGTH}")
    if raw[35] > 0b11:
        raise NotOfflineFinding("key-bits", f"byte 35 holds two key bits, got 0x{raw[35]:02X}")
    x0 = (raw[35] << 6) | (raw[0] & 0b00111111)
    x_bytes = bytes([x0]) + raw[1:6] + raw[13:35]
    return AdvertPayloadFields(x_bytes=x_bytes, status=raw[12], hint=raw[36])


def is_offline_finding(frame: BleFrame) -> bool:
    try:
        decode_advert(frame)
    except NotOfflineFinding:
        return False
    return True
