"""
Wire Format
Versioned binary encoding shared by params, key and ciphertext files.

Layout:
    b"PSA" | version (1 byte) | record type (1 byte) | fields...

Every integer field is a 4-byte big-endian length followed by the
big-endian magnitude bytes. Byte strings use the same length prefix.
"""

import binascii
import struct
import textwrap

from errors import ParseError, VersionMismatchError

MAGIC = b'PSA'
FORMAT_VERSION = 1

# Record type tags
RECORD_PARAMS = 0x01
RECORD_AGGREGATOR_KEY = 0x02
RECORD_USER_KEY = 0x03
RECORD_CIPHERTEXT = 0x04

RECORD_NAMES = {
    RECORD_PARAMS: 'PARAMS',
    RECORD_AGGREGATOR_KEY: 'AGGREGATOR KEY',
    RECORD_USER_KEY: 'USER KEY',
    RECORD_CIPHERTEXT: 'CIPHERTEXT',
}

_LENGTH = struct.Struct('>I')


def encode_int(value):
    """4-byte big-endian length prefix + big-endian magnitude (nonnegative only)"""
    value = int(value)
    if value < 0:
        raise ValueError(f"wire integers are nonnegative, got {value}")
    body = value.to_bytes((value.bit_length() + 7) // 8, 'big')
    return _LENGTH.pack(len(body)) + body


def encode_bytes(data):
    return _LENGTH.pack(len(data)) + bytes(data)


class WireWriter:
    """Accumulates one record"""

    def __init__(self, record_type):
        self.parts = [MAGIC, bytes([FORMAT_VERSION, record_type])]

    def int(self, value):
        self.parts.append(encode_int(value))
        return self

    def bytes(self, data):
        self.parts.append(encode_bytes(data))
        return self

    def getvalue(self):
        return b''.join(self.parts)


class WireReader:
    """Cursor over one record; every error reports the byte offset"""

    def __init__(self, data, expected_type):
        self.data = bytes(data)
        self.offset = 0
        self._header(expected_type)

    def _take(self, count, what):
        end = self.offset + count
        if end > len(self.data):
            raise ParseError(f"truncated input while reading {what}", self.offset)
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def _header(self, expected_type):
        magic = self._take(len(MAGIC), 'magic')
        if magic != MAGIC:
            raise ParseError("bad magic, not a PSA record", 0)
        version = self._take(1, 'version')[0]
        if version != FORMAT_VERSION:
            raise VersionMismatchError(
                f"unsupported format version {version} (expected {FORMAT_VERSION})", 3)
        record_type = self._take(1, 'record type')[0]
        if record_type != expected_type:
            raise ParseError(
                f"expected {RECORD_NAMES.get(expected_type, expected_type)} record, "
                f"found {RECORD_NAMES.get(record_type, record_type)}", 4)

    def bytes(self, what='bytes'):
        (length,) = _LENGTH.unpack(self._take(_LENGTH.size, f"{what} length"))
        return self._take(length, what)

    def int(self, what='integer'):
        return int.from_bytes(self.bytes(what), 'big')

    def finish(self):
        if self.offset != len(self.data):
            raise ParseError(f"{len(self.data) - self.offset} trailing bytes", self.offset)


# ============================================
# HEX ARMOR (debugging form)
# ============================================

def armor(data):
    """Hex-armored text form of a record"""
    if len(data) < 5 or data[:3] != MAGIC:
        raise ParseError("bad magic, not a PSA record", 0)
    label = RECORD_NAMES.get(data[4], 'RECORD')
    body = '\n'.join(textwrap.wrap(binascii.hexlify(data).decode('ascii'), 64))
    return f"-----BEGIN PSA {label}-----\n{body}\n-----END PSA {label}-----\n"


def dearmor(text):
    """Inverse of armor()"""
    lines = [line.strip() for line in text.strip().splitlines()]
    if len(lines) < 2 or not lines[0].startswith('-----BEGIN PSA') or not lines[-1].startswith('-----END PSA'):
        raise ParseError("missing armor delimiters", 0)
    try:
        return binascii.unhexlify(''.join(lines[1:-1]))
    except (binascii.Error, ValueError) as e:
        raise ParseError(f"bad hex in armored record: {e}", 0)


def load_record(raw):
    """Accept either binary or armored bytes"""
    if raw.startswith(b'-----BEGIN'):
        return dearmor(raw.decode('ascii', errors='replace'))
    return raw
