"""Pure-Python DNP3 CRC and link-block framing (fallback for ``_crc_core``)."""

BLOCK_SIZE = 16


def _make_table() -> list[int]:
    table = []
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ 0xA6BC if crc & 1 else crc >> 1
        table.append(crc)
    return table


_TABLE = _make_table()


def crc_dnp(data) -> int:
    crc = 0
    table = _TABLE
    for byte in bytes(data):
        crc = (crc >> 8) ^ table[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFF


def add_block_crcs(payload) -> bytes:
    """Return payload with a little-endian CRC after every 16-octet block."""
    payload = bytes(payload)
    out = bytearray()
    for i in range(0, len(payload), BLOCK_SIZE):
        block = payload[i:i + BLOCK_SIZE]
        out += block
        out += crc_dnp(block).to_bytes(2, "little")
    return bytes(out)


def strip_block_crcs(body) -> tuple[bytes, int]:
    """Split CRC-framed user data back into payload.

    Returns ``(payload, bad_block)`` where ``bad_block`` is the index of the
    first block whose CRC does not match, or -1.  Raises ValueError when the
    body cannot be a valid block sequence.
    """
    body = bytes(body)
    n = len(body)
    rem = n % (BLOCK_SIZE + 2)
    if rem and rem < 3:
        raise ValueError("truncated block")
    out = bytearray()
    bad = -1
    block = 0
    i = 0
    while i < n:
        stop = min(i + BLOCK_SIZE, n - 2)
        chunk = body[i:stop]
        stored = body[stop] | (body[stop + 1] << 8)
        if bad < 0 and crc_dnp(chunk) != stored:
            bad = block
        out += chunk
        block += 1
        i = stop + 2
    return bytes(out), bad
