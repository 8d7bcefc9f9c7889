"""Master beacon key generation and the rolling advertisement key chain.

A device's root secret is a P-224 key pair (d0, p0) plus a 32-byte symmetric
secret SK0.  Every 15-minute window rolls the symmetric secret forward with an
ANSI X9.63 KDF, expands it into a pair of anti-tracking multipliers, and
combines those with d0 into the advertisement key pair for that window:

    SK_i     = KDF(SK_{i-1}, "update", 32)
    (u_i, v_i) = KDF(SK_i, "diversify", 72)      # 36 bytes each
    d_i      = (d0 * u_i + v_i) mod q
    p_i      = d_i * G

Only the 28-byte X coordinate of p_i is ever broadcast; its SHA-256 hash is
the server-side lookup id for location reports.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Callable, Iterable, Iterator

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.x963kdf import X963KDF

from . import curve
from .curve import COORD_BYTES, P224, CurveParams
from .timebase import KEY_WINDOW_SECONDS, to_unix

SYMMETRIC_KEY_BYTES = 32
DIVERSIFY_OUTPUT_BYTES = 72
UPDATE_INFO = b"update"
DIVERSIFY_INFO = b"diversify"

EntropySource = Callable[[int], bytes]


class DegenerateKey(Exception):
    """d_i reduced to zero; the index cannot be used as a private key."""

    def __init__(self, index: int):
        super().__init__(f"advertisement key {index} degenerates to the zero scalar")
        self.index = index


class TimeBeforeCreation(ValueError):
    """A requested window predates the master key's creation time."""


class CacheFormatError(ValueError):
    """A key-cache line could not be parsed; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


def system_entropy(n: int) -> bytes:
    return os.urandom(n)


class SeededEntropy:
    """Deterministic byte stream for reproducible key material.

    SHA-256 counter stream over the seed; stable across platforms and runs.
    Not a vetted DRBG; intended for simulation and tests.
    """

    def __init__(self, seed: int | bytes):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=False) if seed >= 0 else str(seed).encode()
        self._seed = bytes(seed)
        self._counter = 0
        self._buffer = b""

    def __call__(self, n: int) -> bytes:
        while len(self._buffer) < n:
            block = hashlib.sha256(self._seed + self._counter.to_bytes(8, "big")).digest()
            self._buffer += block
            self._counter += 1
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out


@dataclass(frozen=True)
class MasterBeaconKey:
    """Root secret (d0, p0, SK0); index 0 is never advertised."""

    d0: int
    p0: tuple[int, int]
    sk0: bytes
    creation_time: datetime

    def __post_init__(self):
        if len(self.sk0) != SYMMETRIC_KEY_BYTES:
            raise ValueError(f"SK0 must be {SYMMETRIC_KEY_BYTES} bytes")


@dataclass(frozen=True)
class SymmetricRollingKey:
    index: int
    sk: bytes


@dataclass(frozen=True)
class AntiTrackingPair:
    u: int
    v: int


@dataclass(frozen=True)
class AdvertisementKeyPair:
    """Rolling key for one window: private scalar, public point, and id."""

    index: int
    d: int
    p: tuple[int, int]
    x_bytes: bytes
    key_id: bytes


def _kdf(secret: bytes, info: bytes, length: int) -> bytes:
    return X963KDF(algorithm=hashes.SHA256(), length=length, sharedinfo=info).derive(secret)


def _draw_scalar(entropy: EntropySource, order: int) -> int:
    # Rejection sampling keeps the draw uniform over [1, order-1].
    while True:
        candidate = int.from_bytes(entropy(COORD_BYTES), "big")
        if 1 <= candidate < order:
            return candidate


def generate_master(
    entropy: EntropySource = system_entropy,
    *,
    creation_time: datetime | None = None,
    params: CurveParams = P224,
) -> MasterBeaconKey:
    """Generate a fresh master beacon key.

    Deterministic when given a :class:`SeededEntropy` source (and an explicit
    creation time).
    """
    if creation_time is None:
        creation_time = datetime.now(tz=timezone.utc)
    d0 = _draw_scalar(entropy, params.order)
    p0 = curve.public_point(d0)
    sk0 = entropy(SYMMETRIC_KEY_BYTES)
    return MasterBeaconKey(d0=d0, p0=p0, sk0=sk0, creation_time=creation_time)


def roll_symmetric(prev: SymmetricRollingKey) -> SymmetricRollingKey:
    if len(prev.sk) != SYMMETRIC_KEY_BYTES:
        raise ValueError("rolling key must be 32 bytes")
    return SymmetricRollingKey(
        index=prev.index + 1,
        sk=_kdf(prev.sk, UPDATE_INFO, SYMMETRIC_KEY_BYTES),
    )


def _reduce_to_scalar(raw: bytes, order: int) -> int:
    # (x mod (q-1)) + 1 keeps the multiplier nonzero with negligible bias.
    return int.from_bytes(raw, "big") % (order - 1) + 1


def diversify(sk: SymmetricRollingKey, params: CurveParams = P224) -> AntiTrackingPair:
    raw = _kdf(sk.sk, DIVERSIFY_INFO, DIVERSIFY_OUTPUT_BYTES)
    return AntiTrackingPair(
        u=_reduce_to_scalar(raw[:36], params.order),
        v=_reduce_to_scalar(raw[36:], params.order),
    )


def derive_pair(
    master: MasterBeaconKey,
    at: AntiTrackingPair,
    index: int,
    params: CurveParams = P224,
) -> AdvertisementKeyPair:
    if index < 1:
        raise ValueError("advertised indices start at 1")
    d = (master.d0 * at.u + at.v) % params.order
    if d == 0:
        raise DegenerateKey(index)
    p = curve.public_point(d)
    x_bytes = p[0].to_bytes(COORD_BYTES, "big")
    return AdvertisementKeyPair(
        index=index,
        d=d,
        p=p,
        x_bytes=x_bytes,
        key_id=hashlib.sha256(x_bytes).digest(),
    )


class KeyChain:
    """Incrementally extended view of a master key's advertisement chain.

    Caches the symmetric chain so that repeated ``key_at`` calls (and window
    queries) cost one KDF step per new index instead of re-walking from SK0.
    Derivation is pure; instances are cheap and independent.
    """

    def __init__(self, master: MasterBeaconKey, params: CurveParams = P224):
        self.master = master
        self.params = params
        self._symmetric = [master.sk0]

    def _sk(self, index: int) -> bytes:
        while len(self._symmetric) <= index:
            prev = SymmetricRollingKey(len(self._symmetric) - 1, self._symmetric[-1])
            self._symmetric.append(roll_symmetric(prev).sk)
        return self._symmetric[index]

    def key_at(self, index: int) -> AdvertisementKeyPair:
        if index < 1:
            raise ValueError("advertised indices start at 1")
        rolling = SymmetricRollingKey(index, self._sk(index))
        return derive_pair(self.master, diversify(rolling, self.params), index, self.params)

    def iter_keys(self, start: int = 1, stop: int | None = None) -> Iterator[AdvertisementKeyPair]:
        index = start
        while stop is None or index <= stop:
            yield self.key_at(index)
            index += 1


def key_at(master: MasterBeaconKey, index: int, params: CurveParams = P224) -> AdvertisementKeyPair:
    """Advertisement key for one index; pure function of (master, index).

    Walks the chain from SK0 each call; use :class:`KeyChain` for bulk work.
    """
    return KeyChain(master, params).key_at(index)


def window_index(
    master: MasterBeaconKey,
    at: datetime,
    window_seconds: float = KEY_WINDOW_SECONDS,
) -> int:
    """1-based window index containing the instant ``at``."""
    offset = to_unix(at) - to_unix(master.creation_time)
    if offset < 0:
        raise TimeBeforeCreation(f"{at} precedes master creation {master.creation_time}")
    return int(offset // window_seconds) + 1


def keys_in_window(
    master: MasterBeaconKey,
    t_start: datetime,
    t_end: datetime,
    window_seconds: float = KEY_WINDOW_SECONDS,
    chain: KeyChain | None = None,
) -> list[AdvertisementKeyPair]:
    """Keys whose windows intersect [t_start, t_end).

    The end is exclusive for a nonempty span, so an exact 7-day span covers
    exactly 672 windows; a degenerate span (t_start == t_end) returns the
    single window containing that instant.
    """
    if to_unix(t_start) > to_unix(t_end):
        raise ValueError("t_start must not exceed t_end")
    first = window_index(master, t_start, window_seconds)
    last = window_index(master, t_end, window_seconds)
    if to_unix(t_end) > to_unix(t_start):
        boundary = (to_unix(t_end) - to_unix(master.creation_time)) % window_seconds == 0
        if boundary:
            last -= 1
    chain = chain or KeyChain(master)
    return [chain.key_at(i) for i in range(first, last + 1)]


def export_cache(keys: Iterable[AdvertisementKeyPair], destination: str | os.PathLike | IO[str]) -> int:
    """Write keys as JSON-lines; returns the record count.

    Record schema: {"index", "d" (base64, 28 bytes), "x" (base64, 28 bytes),
    "key_id" (base64, 32 bytes)}.
    """
    keys = list(keys)
    if not keys:
        raise ValueError("refusing to export an empty key cache")

    def _write(fh: IO[str]) -> int:
        for key in keys:
            record = {
                "index": key.index,
                "d": base64.b64encode(curve.scalar_to_bytes(key.d)).decode(),
                "x": base64.b64encode(key.x_bytes).decode(),
                "key_id": base64.b64encode(key.key_id).decode(),
            }
            fh.write(json.dumps(record) + "\n")
        return len(keys)

    if hasattr(destination, "write"):
        return _write(destination)  # type: ignore[arg-type]
    with open(destination, "w", encoding="utf-8") as fh:
        return _write(fh)


def _decode_field(record: dict, name: str, expected_len: int, line: int) -> bytes:
    try:
        raw = base64.b64decode(record[name], validate=True)
    except KeyError:
        raise CacheFormatError(line, f"missing field {name!r}") from None
    except Exception as exc:
        raise CacheFormatError(line, f"field {name!r}: invalid base64 ({exc})") from None
    if len(raw) != expected_len:
        raise CacheFormatError(line, f"field {name!r}: expected {expected_len} bytes, got {len(raw)}")
    return raw


def import_cache(source: str | os.PathLike | IO[str]) -> list[AdvertisementKeyPair]:
    """Read a JSON-lines key cache written by :func:`export_cache`."""

    def _read(fh: IO[str]) -> list[AdvertisementKeyPair]:
        out = []
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CacheFormatError(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise CacheFormatError(line_no, "record is not an object")
            d_bytes = _decode_field(record, "d", COORD_BYTES, line_no)
            x_bytes = _decode_field(record, "x", COORD_BYTES, line_no)
            key_id = _decode_field(record, "key_id", 32, line_no)
            index = record.get("index")
            if not isinstance(index, int) or index < 1:
                raise CacheFormatError(line_no, "field 'index': expected a positive integer")
            d = curve.scalar_from_bytes(d_bytes)
            p = curve.public_point(d)
            if p[0] != curve.scalar_from_bytes(x_bytes):
                raise CacheFormatError(line_no, "field 'x' does not match the private scalar")
            out.append(AdvertisementKeyPair(index=index, d=d, p=p, x_bytes=x_bytes, key_id=key_id))
        return out

    if hasattr(source, "read"):
        return _read(source)  # type: ignore[arg-type]
    with open(source, "r", encoding="utf-8") as fh:
        return _read(fh)
