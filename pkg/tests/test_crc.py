import importlib
import random

import pytest
from hypothesis import given, strategies as st

from oracles import crc_dnp_bitwise
from scadasim import _crc_fallback, crc

try:
    from scadasim import _crc_core
except ImportError:
    _crc_core = None

BACKENDS = [_crc_fallback] + ([_crc_core] if _crc_core is not None else [])


def test_check_value():
    # published check value of CRC-16/DNP over ASCII "123456789"
    assert crc.crc_dnp(b"123456789") == 0xEA82
    assert crc_dnp_bitwise(b"123456789") == 0xEA82


def test_empty_input_is_final_complement():
    assert crc.crc_dnp(b"") == crc_dnp_bitwise(b"") == 0xFFFF


def test_read_request_header_matches_oracle():
    header = bytes([0x05, 0x64, 0x08, 0xC4, 0x0A, 0x00, 0x01, 0x00])
    assert crc.crc_dnp(header) == crc_dnp_bitwise(header)
    assert crc.crc_dnp(header) == crc.crc_dnp(header)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_backend_matches_bit_serial_oracle(impl):
    rnd = random.Random(7)
    for _ in range(500):
        data = rnd.randbytes(rnd.randint(0, 64))
        assert impl.crc_dnp(data) == crc_dnp_bitwise(data)


@pytest.mark.skipif(_crc_core is None, reason="compiled kernel not built")
@given(st.binary(max_size=400))
def test_backends_agree(data):
    assert _crc_core.crc_dnp(data) == _crc_fallback.crc_dnp(data)
    framed = _crc_core.add_block_crcs(data)
    assert framed == _crc_fallback.add_block_crcs(data)
    assert _crc_core.strip_block_crcs(framed) == _crc_fallback.strip_block_crcs(framed) == (data, -1)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_strip_reports_first_bad_block(impl):
    data = bytes(range(40))
    framed = bytearray(impl.add_block_crcs(data))
    framed[18 + 3] ^= 0x01  # inside the second block
    payload, bad = impl.strip_block_crcs(bytes(framed))
    assert bad == 1 and len(payload) == 40


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_strip_rejects_dangling_fragment(impl):
    with pytest.raises(ValueError):
        impl.strip_block_crcs(bytes(18 + 2))


def test_pure_python_switch(monkeypatch):
    monkeypatch.setenv("SCADASIM_PURE_PYTHON", "1")
    forced = importlib.reload(crc)
    try:
        assert forced.BACKEND == "python"
        assert forced.crc_dnp(b"123456789") == 0xEA82
    finally:
        monkeypatch.delenv("SCADASIM_PURE_PYTHON")
        importlib.reload(crc)
