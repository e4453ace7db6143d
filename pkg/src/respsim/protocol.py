"""Telemetry framing: byte-exact encode/decode plus stream resynchronization.

Every frame is ``magic | version | kind | seq(u16 LE) | flags | len |
payload | crc8`` — 8 bytes of overhead around the payload.  The CRC uses
polynomial 0x07 with init 0x00 over version..payload inclusive, so any
single-bit corruption lands either in the magic check, the CRC check, or
the CRC byte itself and is always rejected.

:class:`StreamSplitter` is the receive side for a raw byte stream: frames
may arrive split across arbitrary chunk boundaries and interleaved with
garbage; it scans forward to the next magic byte, validates candidates,
and coalesces each maximal run of discarded bytes into one resync event.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

MAGIC = 0xA5
VERSION = 0x01
MAX_PAYLOAD = 244          # BLE MTU budget for the payload field
HEADER_LEN = 7             # magic .. len
FRAME_OVERHEAD = HEADER_LEN + 1  # + trailing crc

FLAG_FINAL_FLUSH = 0x01    # partial batch emitted at end of run
FLAG_CHARGING = 0x02       # charger attached when the frame was built

_HEADER = struct.Struct("<BBBHBB")


class FrameKind(IntEnum):
    FSR_BATCH = 0x01
    ACCEL_BATCH = 0x02
    BATTERY_STATUS = 0x03


class ProtocolError(Exception):
    """Base for every framing violation."""


class BadMagic(ProtocolError):
    pass


class BadVersion(ProtocolError):
    pass


class BadCrc(ProtocolError):
    pass


class Truncated(ProtocolError):
    pass


class UnknownKind(ProtocolError):
    pass


class BadLength(ProtocolError):
    """Declared length disagrees with the buffer or the payload structure."""


class OversizeFrame(ProtocolError):
    """Payload would not fit the MTU budget."""


def _crc8_table(poly: int) -> bytes:
    table = bytearray(256)
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table[byte] = crc
    return bytes(table)


_CRC8_07 = _crc8_table(0x07)


def crc8(data: bytes, poly: int = 0x07, init: int = 0x00) -> int:
    """CRC-8 (MSB first, no reflection, no final xor).

    Table-driven for the default polynomial — this sits on the decode hot
    path — with a bitwise fallback for any other generator.
    """
    crc = init
    if poly == 0x07:
        table = _CRC8_07
        for byte in data:
            crc = table[crc ^ byte]
        return crc
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


# ---------------------------------------------------------------------------
# payloads
# ---------------------------------------------------------------------------

def _check_u32(name: str, value: int) -> None:
    if not (0 <= value <= 0xFFFFFFFF):
        raise BadLength(f"{name} {value} outside u32 range")


@dataclass(frozen=True)
class FsrBatchPayload:
    """Batch of consecutive FSR ADC codes starting at ``t0_ms``."""

    t0_ms: int
    codes: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "codes", tuple(int(c) for c in self.codes))
        _check_u32("t0_ms", self.t0_ms)
        if not self.codes:
            raise BadLength("FSR batch must hold at least one code")
        for c in self.codes:
            if not (0 <= c <= 4095):
                raise BadLength(f"FSR code {c} outside 12-bit range")

    def to_bytes(self) -> bytes:
        return struct.pack(
            f"<IB{len(self.codes)}H", self.t0_ms, len(self.codes), *self.codes
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "FsrBatchPayload":
        if len(raw) < 5:
            raise BadLength(f"FSR batch payload too short ({len(raw)} bytes)")
        t0, count = struct.unpack_from("<IB", raw)
        if len(raw) != 5 + 2 * count:
            raise BadLength(
                f"FSR batch declares {count} codes but payload is {len(raw)} bytes"
            )
        codes = struct.unpack_from(f"<{count}H", raw, 5)
        return cls(t0, codes)


@dataclass(frozen=True)
class AccelBatchPayload:
    """Batch of (x, y, z) milli-g triples starting at ``t0_ms``."""

    t0_ms: int
    samples: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "samples", tuple((int(x), int(y), int(z)) for x, y, z in self.samples)
        )
        _check_u32("t0_ms", self.t0_ms)
        if not self.samples:
            raise BadLength("accel batch must hold at least one sample")
        for s in self.samples:
            for axis in s:
                if not (-32768 <= axis <= 32767):
                    raise BadLength(f"accel axis {axis} outside i16 range")

    def to_bytes(self) -> bytes:
        flat = [v for s in self.samples for v in s]
        return struct.pack(
            f"<IB{len(flat)}h", self.t0_ms, len(self.samples), *flat
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "AccelBatchPayload":
        if len(raw) < 5:
            raise BadLength(f"accel batch payload too short ({len(raw)} bytes)")
        t0, count = struct.unpack_from("<IB", raw)
        if len(raw) != 5 + 6 * count:
            raise BadLength(
                f"accel batch declares {count} samples but payload is {len(raw)} bytes"
            )
        flat = struct.unpack_from(f"<{3 * count}h", raw, 5)
        samples = tuple(
            (flat[i], flat[i + 1], flat[i + 2]) for i in range(0, len(flat), 3)
        )
        return cls(t0, samples)


@dataclass(frozen=True)
class BatteryStatusPayload:
    """Battery measurement: raw sense-divider ADC code plus device percent."""

    t_ms: int
    adc_code: int
    percent: int

    def __post_init__(self) -> None:
        _check_u32("t_ms", self.t_ms)
        if not (0 <= self.adc_code <= 4095):
            raise BadLength(f"battery adc_code {self.adc_code} outside 12-bit range")
        if not (0 <= self.percent <= 100):
            raise BadLength(f"battery percent {self.percent} outside 0..100")

    def to_bytes(self) -> bytes:
        return struct.pack("<IHB", self.t_ms, self.adc_code, self.percent)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "BatteryStatusPayload":
        if len(raw) != 7:
            raise BadLength(f"battery payload must be 7 bytes, got {len(raw)}")
        t, code, pct = struct.unpack("<IHB", raw)
        return cls(t, code, pct)


Payload = FsrBatchPayload | AccelBatchPayload | BatteryStatusPayload

_PAYLOAD_TYPES: dict[FrameKind, type] = {
    FrameKind.FSR_BATCH: FsrBatchPayload,
    FrameKind.ACCEL_BATCH: AccelBatchPayload,
    FrameKind.BATTERY_STATUS: BatteryStatusPayload,
}


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TelemetryFrame:
    kind: FrameKind
    seq: int
    flags: int
    payload: Payload

    def __post_init__(self) -> None:
        if not (0 <= self.seq <= 0xFFFF):
            raise BadLength(f"seq {self.seq} outside u16 range")
        if not (0 <= self.flags <= 0xFF):
            raise BadLength(f"flags {self.flags} outside u8 range")
        expected = _PAYLOAD_TYPES[FrameKind(self.kind)]
        if not isinstance(self.payload, expected):
            raise BadLength(
                f"kind {FrameKind(self.kind).name} requires {expected.__name__}, "
                f"got {type(self.payload).__name__}"
            )

    @property
    def final_flush(self) -> bool:
        return bool(self.flags & FLAG_FINAL_FLUSH)

    @property
    def charging(self) -> bool:
        return bool(self.flags & FLAG_CHARGING)


def encode(frame: TelemetryFrame) -> bytes:
    """Serialize a frame; total length is ``8 + len(payload)`` bytes."""
    payload = frame.payload.to_bytes()
    if len(payload) > MAX_PAYLOAD:
        raise OversizeFrame(
            f"payload is {len(payload)} bytes, MTU budget allows {MAX_PAYLOAD}"
        )
    header = _HEADER.pack(
        MAGIC, VERSION, int(frame.kind), frame.seq, frame.flags, len(payload)
    )
    body = header[1:] + payload  # crc covers version .. payload
    return header + payload + bytes([crc8(body)])


def decode(data: bytes) -> TelemetryFrame:
    """Parse exactly one frame from ``data``; reject anything malformed.

    Raises :class:`Truncated` when bytes are missing, :class:`BadLength`
    when trailing bytes follow a complete frame, and the specific error
    class for magic/version/CRC/kind violations.
    """
    if len(data) < FRAME_OVERHEAD:
        raise Truncated(f"need at least {FRAME_OVERHEAD} bytes, got {len(data)}")
    magic, version, kind_byte, seq, flags, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"expected 0x{MAGIC:02X}, got 0x{magic:02X}")
    if version != VERSION:
        raise BadVersion(f"expected version 0x{VERSION:02X}, got 0x{version:02X}")
    total = FRAME_OVERHEAD + length
    if len(data) < total:
        raise Truncated(f"frame declares {total} bytes, got {len(data)}")
    if len(data) > total:
        raise BadLength(f"{len(data) - total} trailing bytes after frame")
    expected_crc = crc8(data[1 : HEADER_LEN + length])
    actual_crc = data[total - 1]
    if actual_crc != expected_crc:
        raise BadCrc(f"crc mismatch: expected 0x{expected_crc:02X}, got 0x{actual_crc:02X}")
    try:
        kind = FrameKind(kind_byte)
    except ValueError:
        raise UnknownKind(f"unknown frame kind 0x{kind_byte:02X}") from None
    payload = _PAYLOAD_TYPES[kind].from_bytes(data[HEADER_LEN:total - 1])
    return TelemetryFrame(kind, seq, flags, payload)


# ---------------------------------------------------------------------------
# stream splitting
# ---------------------------------------------------------------------------

@dataclass
class ResyncEvent:
    """One maximal run of bytes discarded while hunting for a frame start."""

    offset: int    # absolute stream offset of the first discarded byte
    skipped: int   # run length in bytes


class StreamSplitter:
    """Incremental frame extractor over an unreliable byte stream.

    Feed arbitrary chunks; complete valid frames come back in order.  Bytes
    that cannot start a valid frame are dropped one at a time and coalesced
    into :class:`ResyncEvent` runs.  A partial frame at the tail is held
    until more bytes arrive, so splitting a valid stream at any point
    yields a prefix of its frame sequence.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self._consumed = 0        # absolute offset of _buf[0] in the stream
        self._in_skip_run = False
        self.resyncs: list[ResyncEvent] = []
        self.frames_out = 0

    @property
    def pending_bytes(self) -> int:
        """Bytes buffered but not yet resolved into a frame or discarded."""
        return len(self._buf)

    @property
    def resync_count(self) -> int:
        return len(self.resyncs)

    @property
    def skipped_bytes(self) -> int:
        return sum(ev.skipped for ev in self.resyncs)

    def _discard_one(self) -> None:
        if self._in_skip_run:
            self.resyncs[-1].skipped += 1
        else:
            self.resyncs.append(ResyncEvent(offset=self._consumed, skipped=1))
            self._in_skip_run = True
        del self._buf[0]
        self._consumed += 1

    def feed(self, chunk: bytes) -> list[TelemetryFrame]:
        """Absorb a chunk and return every frame completed by it."""
        self._buf.extend(chunk)
        out: list[TelemetryFrame] = []
        while self._buf:
            if self._buf[0] != MAGIC:
                self._discard_one()
                continue
            if len(self._buf) < HEADER_LEN:
                break  # cannot know the frame length yet
            total = FRAME_OVERHEAD + self._buf[6]
            if len(self._buf) < total:
                break  # wait for the rest of the candidate frame
            candidate = bytes(self._buf[:total])
            try:
                frame = decode(candidate)
            except ProtocolError:
                self._discard_one()
                continue
            out.append(frame)
            del self._buf[:total]
            self._consumed += total
            self._in_skip_run = False
            self.frames_out += 1
        return out


def split_stream(data: bytes) -> tuple[list[TelemetryFrame], list[ResyncEvent], int]:
    """One-shot convenience over :class:`StreamSplitter`.

    Returns (frames, resync events, unresolved tail bytes).
    """
    splitter = StreamSplitter()
    frames = splitter.feed(data)
    return frames, splitter.resyncs, splitter.pending_bytes
