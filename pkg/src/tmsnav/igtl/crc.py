"""CRC-64/ECMA-182 as used by the OpenIGTLink header."""

POLY = 0x42F0E1EBA9EA3693
_MASK = 0xFFFFFFFFFFFFFFFF


def _make_table():
    table = []
    for byte in range(256):
        crc = byte << 56
        for _ in range(8):
            if crc & (1 << 63):
                crc = ((crc << 1) ^ POLY) & _MASK
            else:
                crc = (crc << 1) & _MASK
        table.append(crc)
    return tuple(table)


_TABLE = _make_table()


def crc64(data: bytes, crc: int = 0) -> int:
    """Return the CRC-64/ECMA-182 of ``data``.

    Non-reflected, init 0, no final XOR. ``crc`` lets callers chain
    chunks: ``crc64(b, crc64(a)) == crc64(a + b)``.
    """
    table = _TABLE
    for byte in data:
        crc = table[((crc >> 56) ^ byte) & 0xFF] ^ ((crc << 8) & _MASK)
    return crc
