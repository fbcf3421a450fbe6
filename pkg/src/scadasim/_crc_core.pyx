# cython: language_level=3
"""Compiled DNP3 CRC and link-block framing kernels.

Mirrors ``scadasim._crc_fallback`` exactly; the two are checked against
each other in the test suite.
"""
from libc.stdint cimport uint8_t, uint16_t

cdef uint16_t _TABLE[256]


cdef void _init_table():
    cdef int i, bit
    cdef uint16_t crc
    for i in range(256):
        crc = <uint16_t>i
        for bit in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ 0xA6BC
            else:
                crc >>= 1
        _TABLE[i] = crc


_init_table()


cdef inline uint16_t _crc(const uint8_t[:] data, Py_ssize_t start, Py_ssize_t stop) nogil:
    cdef uint16_t crc = 0
    cdef Py_ssize_t i
    for i in range(start, stop):
        crc = (crc >> 8) ^ _TABLE[(crc ^ data[i]) & 0xFF]
    return crc ^ 0xFFFF


def crc_dnp(data):
    cdef const uint8_t[:] view = bytes(data)
    return _crc(view, 0, view.shape[0])


def add_block_crcs(payload):
    """Return payload with a little-endian CRC after every 16-octet block."""
    cdef bytes src = bytes(payload)
    cdef const uint8_t[:] view = src
    cdef Py_ssize_t n = view.shape[0]
    cdef Py_ssize_t nblocks = (n + 15) // 16
    cdef bytearray out = bytearray(n + 2 * nblocks)
    cdef uint8_t[:] dst = out
    cdef Py_ssize_t i, j, stop, pos = 0
    cdef uint16_t crc
    i = 0
    while i < n:
        stop = i + 16
        if stop > n:
            stop = n
        for j in range(i, stop):
            dst[pos] = view[j]
            pos += 1
        crc = _crc(view, i, stop)
        dst[pos] = crc & 0xFF
        dst[pos + 1] = crc >> 8
        pos += 2
        i = stop
    return bytes(out)


def strip_block_crcs(body):
    """Split CRC-framed user data back into payload.

    Returns ``(payload, bad_block)`` where ``bad_block`` is the index of the
    first block whose CRC does not match, or -1.  Raises ValueError when the
    body cannot be a valid block sequence (dangling CRC fragment).
    """
    cdef bytes src = bytes(body)
    cdef const uint8_t[:] view = src
    cdef Py_ssize_t n = view.shape[0]
    cdef Py_ssize_t rem = n % 18
    if rem != 0 and rem < 3:
        raise ValueError("truncated block")
    cdef Py_ssize_t payload_len = (n // 18) * 16 + (rem - 2 if rem else 0)
    cdef bytearray out = bytearray(payload_len)
    cdef uint8_t[:] dst = out
    cdef Py_ssize_t i = 0, j, stop, pos = 0, block = 0, bad = -1
    cdef uint16_t crc, stored
    while i < n:
        stop = i + 16
        if stop > n - 2:
            stop = n - 2
        for j in range(i, stop):
            dst[pos] = view[j]
            pos += 1
        crc = _crc(view, i, stop)
        stored = view[stop] | (view[stop + 1] << 8)
        if bad < 0 and crc != stored:
            bad = block
        block += 1
        i = stop + 2
    return bytes(out), bad
