import pytest
from hypothesis import given, strategies as st

from oracles import crc_dnp_bitwise
from scadasim import dnp3
from scadasim.dnp3 import (AppFragment, ControlCode, FunctionCode, PointGroup, PointKind, decode_app,
                           decode_frame, decode_message, encode_app, encode_frame, encode_message)


def test_frame_length_arithmetic():
    assert len(encode_frame(0xC4, 10, 1, bytes(5))) == 17
    assert len(encode_frame(0xC4, 10, 1, bytes(32))) == 46
    assert dnp3.frame_length(0) == 10


def test_max_payload_accepted_and_one_more_rejected():
    frame = encode_frame(0xC4, 10, 1, bytes(292))
    assert decode_frame(frame).payload == bytes(292)
    with pytest.raises(dnp3.PayloadTooLarge):
        encode_frame(0xC4, 10, 1, bytes(293))


def test_header_crc_is_bit_serial_crc():
    frame = encode_frame(0xC4, 10, 1, b"\xc0\xc1\x01")
    assert int.from_bytes(frame[8:10], "little") == crc_dnp_bitwise(frame[:8])


@given(control=st.integers(0, 255), dst=st.integers(0, 0xFFFF), src=st.integers(0, 0xFFFF),
       payload=st.binary(max_size=292))
def test_frame_round_trip(control, dst, src, payload):
    frame = decode_frame(encode_frame(control, dst, src, payload))
    assert (frame.header.control, frame.header.destination, frame.header.source) == (control, dst, src)
    assert frame.payload == payload


@given(payload=st.binary(min_size=1, max_size=292), data=st.data())
def test_single_bit_flip_in_payload_is_detected(payload, data):
    frame = bytearray(encode_frame(0xC4, 10, 1, payload))
    index = data.draw(st.integers(0, len(payload) - 1))
    pos = 10 + (index // 16) * 18 + index % 16
    frame[pos] ^= 1 << data.draw(st.integers(0, 7))
    with pytest.raises(dnp3.BadBlockCrc):
        decode_frame(bytes(frame))


def test_header_tamper_detected():
    frame = bytearray(encode_frame(0xC4, 10, 1, b"abc"))
    frame[4] ^= 0x01
    with pytest.raises(dnp3.BadHeaderCrc):
        decode_frame(bytes(frame))


def test_bad_sync():
    frame = bytearray(encode_frame(0xC4, 10, 1, b"abc"))
    frame[0] = 0x06
    with pytest.raises(dnp3.BadSync):
        decode_frame(bytes(frame))


def test_truncated_frame():
    frame = encode_frame(0xC4, 10, 1, bytes(20))
    with pytest.raises(dnp3.Truncated):
        decode_frame(frame[:-5])
    with pytest.raises(dnp3.Truncated):
        decode_frame(frame[:6])


def test_function_octets():
    direct = encode_app(AppFragment(FunctionCode.DIRECT_OPERATE, [
        PointGroup(PointKind.BINARY_OUTPUT_COMMAND, [(5, (ControlCode.TRIP, 0))])]))
    assert direct[1] == 0x05
    resp = encode_app(AppFragment(FunctionCode.SOLICITED_RESPONSE, [], iin=0))
    assert resp[1] == 0x81
    with pytest.raises(dnp3.UnknownFunctionCode):
        decode_app(bytes([0xC0, 0x17]))


def test_object_headers_use_documented_groups():
    frag = AppFragment(FunctionCode.SOLICITED_RESPONSE, [
        PointGroup(PointKind.BINARY_INPUT, [(0, True)]),
        PointGroup(PointKind.ANALOG_INPUT, [(0, 1.5)]),
    ], iin=0)
    raw = encode_app(frag)
    assert raw[4:7] == bytes([1, 2, 0x28])
    assert bytes([30, 6, 0x28]) in raw
    cmd = encode_app(AppFragment(FunctionCode.SELECT, [
        PointGroup(PointKind.BINARY_OUTPUT_COMMAND, [(1, (ControlCode.CLOSE, 0))]),
        PointGroup(PointKind.ANALOG_OUTPUT_COMMAND, [(2, (1000.0, 0))])]))
    assert cmd[2:5] == bytes([12, 1, 0x28])
    assert bytes([41, 4, 0x28]) in cmd


def test_requests_and_responses_check_iin():
    with pytest.raises(dnp3.MalformedFragment):
        encode_app(AppFragment(FunctionCode.SOLICITED_RESPONSE, []))
    with pytest.raises(dnp3.MalformedFragment):
        encode_app(AppFragment(FunctionCode.READ, [], iin=0))


def test_indices_must_increase():
    with pytest.raises(dnp3.MalformedFragment):
        encode_app(AppFragment(FunctionCode.READ, [PointGroup(PointKind.ANALOG_INPUT, [(2, 1.0), (1, 1.0)])]))


points = st.lists(st.integers(0, 0xFFFF), unique=True, max_size=8).map(sorted)
finite = st.floats(allow_nan=False, allow_infinity=False)


@st.composite
def fragments(draw):
    func = draw(st.sampled_from(list(FunctionCode)))
    groups = []
    if func.is_response:
        bi = draw(points)
        groups.append(PointGroup(PointKind.BINARY_INPUT, [(i, draw(st.booleans())) for i in bi]))
        ai = draw(points)
        groups.append(PointGroup(PointKind.ANALOG_INPUT, [(i, draw(finite)) for i in ai]))
    elif func in (FunctionCode.SELECT, FunctionCode.OPERATE, FunctionCode.DIRECT_OPERATE):
        bo = draw(points)
        groups.append(PointGroup(PointKind.BINARY_OUTPUT_COMMAND,
                                 [(i, (draw(st.sampled_from(list(ControlCode))), draw(st.integers(0, 4)))) for i in bo]))
        ao = draw(points)
        groups.append(PointGroup(PointKind.ANALOG_OUTPUT_COMMAND, [(i, (draw(finite), 0)) for i in ao]))
    else:
        groups.append(PointGroup(PointKind.ANALOG_INPUT, []))
    return AppFragment(func, groups, seq=draw(st.integers(0, 15)), con=draw(st.booleans()),
                       uns=draw(st.booleans()), iin=draw(st.integers(0, 0xFFFF)) if func.is_response else None)


@given(fragments())
def test_app_round_trip(frag):
    raw = encode_app(frag)
    assert decode_app(raw) == frag


@given(fragments(), st.integers(0, 63))
def test_message_round_trip(frag, tseq):
    raw = encode_app(frag)
    if len(raw) + 1 > dnp3.MAX_PAYLOAD:
        with pytest.raises(dnp3.PayloadTooLarge):
            encode_message(frag, 0xC4, 10, 1, tseq)
        return
    msg = decode_message(encode_message(frag, 0xC4, 10, 1, tseq))
    assert msg.fragment == frag
    assert msg.transport == dnp3.transport_octet(tseq)


def _operate(code):
    frag = AppFragment(FunctionCode.DIRECT_OPERATE,
                       [PointGroup(PointKind.BINARY_OUTPUT_COMMAND, [(3, (code, 0))])], seq=9)
    return encode_message(frag, dnp3.CTRL_FROM_MASTER, 10, 1, 4)


def test_reencode_with_fresh_crcs_decodes():
    msg = decode_message(_operate(ControlCode.CLOSE))
    msg.fragment.objects[0].points[0] = (3, (ControlCode.TRIP, 0))
    out = decode_message(dnp3.reencode_message(msg, recompute_crc=True))
    assert out.fragment.objects[0].points == [(3, (ControlCode.TRIP, 0))]
    assert out.fragment.seq == 9 and out.transport == msg.transport


def test_reencode_keeping_old_crcs_is_detected():
    msg = decode_message(_operate(ControlCode.CLOSE))
    msg.fragment.objects[0].points[0] = (3, (ControlCode.TRIP, 0))
    with pytest.raises(dnp3.BadBlockCrc):
        decode_message(dnp3.reencode_message(msg, recompute_crc=False))
