"""DNP3 link framing and application-layer fragments.

Frame layout (one-on-one TCP mode, single transport segment per frame)::

    05 64 | len | ctrl | dst(le16) | src(le16) | crc(le16)      10-octet header
    [<=16 payload octets | crc(le16)] ...                         user data blocks

The payload carries a 1-octet transport header followed by the application
fragment.  Application objects use a single explicit-index qualifier (0x28)
for every point group; read requests list groups with the all-points
qualifier (0x06).
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field

from .crc import add_block_crcs, crc_dnp, strip_block_crcs

SYNC = b"\x05\x64"
HEADER_SIZE = 10
BLOCK_SIZE = 16
MAX_PAYLOAD = 292
DNP3_PORT = 20000

# link control octets for unconfirmed user data
CTRL_FROM_MASTER = 0xC4
CTRL_FROM_OUTSTATION = 0x44


class Dnp3Error(Exception):
    """Base class for codec errors."""


class PayloadTooLarge(Dnp3Error):
    pass


class BadSync(Dnp3Error):
    pass


class BadHeaderCrc(Dnp3Error):
    pass


class BadBlockCrc(Dnp3Error):
    def __init__(self, block_index: int):
        super().__init__(f"CRC mismatch in user data block {block_index}")
        self.block_index = block_index


class Truncated(Dnp3Error):
    pass


class UnknownFunctionCode(Dnp3Error):
    def __init__(self, code: int):
        super().__init__(f"unsupported function code 0x{code:02X}")
        self.code = code


class MalformedFragment(Dnp3Error):
    pass


class FunctionCode(enum.IntEnum):
    CONFIRM = 0x00
    READ = 0x01
    READ2 = 0x02
    SELECT = 0x03
    OPERATE = 0x04
    DIRECT_OPERATE = 0x05
    SOLICITED_RESPONSE = 0x81
    UNSOLICITED_RESPONSE = 0x82

    @classmethod
    def from_octet(cls, octet: int) -> "FunctionCode":
        try:
            return cls(octet)
        except ValueError:
            raise UnknownFunctionCode(octet) from None

    @property
    def is_response(self) -> bool:
        return self in (FunctionCode.SOLICITED_RESPONSE, FunctionCode.UNSOLICITED_RESPONSE)


class ControlCode(enum.IntEnum):
    """CROB control codes (pulse-on with trip/close pair bits, latch on/off)."""

    TRIP = 0x81
    CLOSE = 0x41
    LATCH_ON = 0x03
    LATCH_OFF = 0x04


class CommandStatus(enum.IntEnum):
    SUCCESS = 0
    TIMEOUT = 1
    NO_SELECT = 2
    FORMAT_ERROR = 3
    NOT_SUPPORTED = 4


class PointKind(enum.IntEnum):
    """Point group kinds; values are the DNP3 object group numbers."""

    BINARY_INPUT = 1
    BINARY_OUTPUT_COMMAND = 12
    ANALOG_INPUT = 30
    ANALOG_OUTPUT_COMMAND = 41


_VARIATION = {
    PointKind.BINARY_INPUT: 2,
    PointKind.BINARY_OUTPUT_COMMAND: 1,
    PointKind.ANALOG_INPUT: 6,
    PointKind.ANALOG_OUTPUT_COMMAND: 4,
}
QUALIFIER_INDEXED = 0x28
QUALIFIER_ALL = 0x06

_AI = struct.Struct("<HBd")      # index, flags, float64
_BI = struct.Struct("<HB")       # index, flags (bit 7 = state)
_CROB = struct.Struct("<HBBIIB")  # index, code, count, on ms, off ms, status
_AO = struct.Struct("<HdB")      # index, float64, status


@dataclass(frozen=True)
class LinkHeader:
    control: int
    destination: int
    source: int
    length: int = 5

    def to_bytes(self) -> bytes:
        head = SYNC + struct.pack("<BBHH", self.length, self.control, self.destination, self.source)
        return head + crc_dnp(head).to_bytes(2, "little")


@dataclass(frozen=True)
class DnpFrame:
    header: LinkHeader
    payload: bytes

    @property
    def block_crcs(self) -> list[int]:
        return [crc_dnp(self.payload[i:i + BLOCK_SIZE]) for i in range(0, len(self.payload), BLOCK_SIZE)]


def frame_length(payload_len: int) -> int:
    return HEADER_SIZE + payload_len + 2 * math.ceil(payload_len / BLOCK_SIZE)


def _length_octet(payload_len: int) -> int:
    # the octet cannot express more than 250 user octets; larger frames saturate
    # at 255 and the decoder sizes them from the buffer
    return min(5 + payload_len, 255)


def encode_frame(control: int, destination: int, source: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"{len(payload)} octets exceeds the {MAX_PAYLOAD}-octet maximum")
    if not (0 <= destination <= 0xFFFF and 0 <= source <= 0xFFFF and 0 <= control <= 0xFF):
        raise ValueError("address or control out of range")
    header = LinkHeader(control, destination, source, _length_octet(len(payload)))
    return header.to_bytes() + add_block_crcs(payload)


def decode_frame(data: bytes) -> DnpFrame:
    data = bytes(data)
    if len(data) >= 2 and data[:2] != SYNC:
        raise BadSync(f"sync octets {data[:2].hex()}")
    if len(data) < HEADER_SIZE:
        raise Truncated(f"{len(data)} octets is shorter than a link header")
    if crc_dnp(data[:8]) != int.from_bytes(data[8:10], "little"):
        raise BadHeaderCrc("header CRC mismatch")
    length, control, destination, source = struct.unpack_from("<BBHH", data, 2)
    if length < 5:
        raise MalformedFragment(f"length octet {length} below minimum")
    body = data[HEADER_SIZE:]
    if length < 255:
        expected = frame_length(length - 5) - HEADER_SIZE
        if len(body) < expected:
            raise Truncated(f"expected {expected} body octets, got {len(body)}")
        if len(body) > expected:
            raise MalformedFragment(f"{len(body) - expected} trailing octets")
    try:
        payload, bad = strip_block_crcs(body)
    except ValueError:
        raise Truncated("dangling block fragment") from None
    if length == 255 and len(payload) < 250:
        raise Truncated("saturated length octet with short body")
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"{len(payload)} octets")
    if bad >= 0:
        raise BadBlockCrc(bad)
    return DnpFrame(LinkHeader(control, destination, source, length), payload)


@dataclass
class PointGroup:
    kind: PointKind
    points: list = field(default_factory=list)
    """``(index, value)`` pairs; for commands ``value`` is ``(code_or_setpoint, status)``."""

    def indices(self) -> list[int]:
        return [idx for idx, _ in self.points]


@dataclass
class AppFragment:
    function: FunctionCode
    objects: list[PointGroup] = field(default_factory=list)
    seq: int = 0
    fir: bool = True
    fin: bool = True
    con: bool = False
    uns: bool = False
    iin: int | None = None

    def group(self, kind: PointKind) -> PointGroup | None:
        for grp in self.objects:
            if grp.kind == kind:
                return grp
        return None


def _check_group(group: PointGroup) -> None:
    idx = group.indices()
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise MalformedFragment(f"indices in {group.kind.name} are not strictly increasing")
    if any(not 0 <= i <= 0xFFFF for i in idx):
        raise MalformedFragment("point index out of range")


def encode_app(fragment: AppFragment) -> bytes:
    func = FunctionCode(fragment.function)
    if func.is_response and fragment.iin is None:
        raise MalformedFragment("responses carry an IIN field")
    if not func.is_response and fragment.iin is not None:
        raise MalformedFragment("requests carry no IIN field")
    if not 0 <= fragment.seq <= 15:
        raise MalformedFragment("application sequence is 4 bits")
    ctl = (fragment.fir << 7) | (fragment.fin << 6) | (fragment.con << 5) | (fragment.uns << 4) | fragment.seq
    out = bytearray([ctl, func])
    if func.is_response:
        out += struct.pack("<H", fragment.iin)
    for group in fragment.objects:
        kind = PointKind(group.kind)
        _check_group(group)
        if not group.points:
            out += bytes([kind, _VARIATION[kind], QUALIFIER_ALL])
            continue
        out += bytes([kind, _VARIATION[kind], QUALIFIER_INDEXED])
        out += struct.pack("<H", len(group.points))
        for index, value in group.points:
            if kind == PointKind.BINARY_INPUT:
                out += _BI.pack(index, 0x81 if value else 0x01)
            elif kind == PointKind.ANALOG_INPUT:
                out += _AI.pack(index, 0x01, float(value))
            elif kind == PointKind.BINARY_OUTPUT_COMMAND:
                code, status = value
                out += _CROB.pack(index, ControlCode(code), 1, 0, 0, status)
            else:
                setpoint, status = value
                out += _AO.pack(index, float(setpoint), status)
    return bytes(out)


_ENTRY = {
    PointKind.BINARY_INPUT: _BI,
    PointKind.ANALOG_INPUT: _AI,
    PointKind.BINARY_OUTPUT_COMMAND: _CROB,
    PointKind.ANALOG_OUTPUT_COMMAND: _AO,
}


def decode_app(data: bytes) -> AppFragment:
    data = bytes(data)
    if len(data) < 2:
        raise MalformedFragment("fragment shorter than its header")
    ctl = data[0]
    func = FunctionCode.from_octet(data[1])
    pos = 2
    iin = None
    if func.is_response:
        if len(data) < 4:
            raise MalformedFragment("response missing IIN")
        iin = struct.unpack_from("<H", data, 2)[0]
        pos = 4
    objects = []
    try:
        while pos < len(data):
            group_no, variation, qualifier = data[pos:pos + 3]
            pos += 3
            try:
                kind = PointKind(group_no)
            except ValueError:
                raise MalformedFragment(f"unsupported object group {group_no}") from None
            if variation != _VARIATION[kind]:
                raise MalformedFragment(f"unsupported variation g{group_no}v{variation}")
            if qualifier == QUALIFIER_ALL:
                objects.append(PointGroup(kind, []))
                continue
            if qualifier != QUALIFIER_INDEXED:
                raise MalformedFragment(f"unsupported qualifier 0x{qualifier:02X}")
            (count,) = struct.unpack_from("<H", data, pos)
            pos += 2
            entry = _ENTRY[kind]
            points = []
            for _ in range(count):
                fields = entry.unpack_from(data, pos)
                pos += entry.size
                if kind == PointKind.BINARY_INPUT:
                    points.append((fields[0], bool(fields[1] & 0x80)))
                elif kind == PointKind.ANALOG_INPUT:
                    points.append((fields[0], fields[2]))
                elif kind == PointKind.BINARY_OUTPUT_COMMAND:
                    try:
                        code = ControlCode(fields[1])
                    except ValueError:
                        raise MalformedFragment(f"unknown control code 0x{fields[1]:02X}") from None
                    points.append((fields[0], (code, fields[5])))
                else:
                    points.append((fields[0], (fields[1], fields[2])))
            group = PointGroup(kind, points)
            _check_group(group)
            objects.append(group)
    except (struct.error, ValueError) as exc:
        raise MalformedFragment(f"object data truncated: {exc}") from None
    return AppFragment(
        function=func,
        objects=objects,
        seq=ctl & 0x0F,
        fir=bool(ctl & 0x80),
        fin=bool(ctl & 0x40),
        con=bool(ctl & 0x20),
        uns=bool(ctl & 0x10),
        iin=iin,
    )


def transport_octet(seq: int) -> int:
    """Single-segment transport header: FIR and FIN set, 6-bit sequence."""
    return 0xC0 | (seq & 0x3F)


def encode_message(fragment: AppFragment, control: int, destination: int, source: int, transport_seq: int = 0) -> bytes:
    """Encode an application fragment as one complete link frame."""
    payload = bytes([transport_octet(transport_seq)]) + encode_app(fragment)
    return encode_frame(control, destination, source, payload)


@dataclass
class Dnp3Message:
    frame: DnpFrame
    transport: int
    fragment: AppFragment


def decode_message(data: bytes) -> Dnp3Message:
    frame = decode_frame(data)
    if not frame.payload:
        raise MalformedFragment("frame carries no transport header")
    transport = frame.payload[0]
    if transport & 0xC0 != 0xC0:
        raise MalformedFragment("multi-segment transport is not supported")
    return Dnp3Message(frame, transport, decode_app(frame.payload[1:]))


def reencode_message(message: Dnp3Message, recompute_crc: bool = True) -> bytes:
    """Re-serialise a (possibly edited) message.

    With ``recompute_crc=False`` the new payload is written under the block
    CRCs of the original payload, which is what a careless in-path editor
    produces.
    """
    hdr = message.frame.header
    payload = bytes([message.transport]) + encode_app(message.fragment)
    fresh = encode_frame(hdr.control, hdr.destination, hdr.source, payload)
    if recompute_crc:
        return fresh
    old_crcs = message.frame.block_crcs
    out = bytearray(fresh[:HEADER_SIZE])
    for block_no, start in enumerate(range(0, len(payload), BLOCK_SIZE)):
        out += payload[start:start + BLOCK_SIZE]
        crc = old_crcs[block_no] if block_no < len(old_crcs) else 0
        out += crc.to_bytes(2, "little")
    return bytes(out)
