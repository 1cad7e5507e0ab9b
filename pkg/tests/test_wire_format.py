import pytest

from errors import ParseError, VersionMismatchError
from wire_format import (
    FORMAT_VERSION, MAGIC, RECORD_CIPHERTEXT, RECORD_USER_KEY, WireReader, WireWriter, armor,
    dearmor, encode_int, load_record,
)


def _record():
    return WireWriter(RECORD_CIPHERTEXT).int(5).int(1 << 200).bytes(b'seed').getvalue()


def test_header_layout():
    data = _record()
    assert data[:3] == MAGIC
    assert data[3] == FORMAT_VERSION
    assert data[4] == RECORD_CIPHERTEXT


def test_reader_reads_fields_back():
    reader = WireReader(_record(), RECORD_CIPHERTEXT)
    assert reader.int() == 5
    assert reader.int() == 1 << 200
    assert reader.bytes() == b'seed'
    reader.finish()


def test_encode_int():
    assert encode_int(0) == b'\x00\x00\x00\x00'
    assert encode_int(258) == b'\x00\x00\x00\x02\x01\x02'
    with pytest.raises(ValueError):
        encode_int(-1)


def test_bad_magic():
    data = b'XYZ' + _record()[3:]
    with pytest.raises(ParseError) as exc:
        WireReader(data, RECORD_CIPHERTEXT)
    assert exc.value.offset == 0
    assert exc.value.code == 'malformed-input'


def test_version_mismatch():
    data = bytearray(_record())
    data[3] = FORMAT_VERSION + 1
    with pytest.raises(VersionMismatchError) as exc:
        WireReader(bytes(data), RECORD_CIPHERTEXT)
    assert exc.value.offset == 3
    assert exc.value.code == 'version-mismatch'


def test_wrong_record_type():
    with pytest.raises(ParseError) as exc:
        WireReader(_record(), RECORD_USER_KEY)
    assert exc.value.offset == 4
    assert 'USER KEY' in exc.value.message


def test_truncated_input_reports_offset():
    data = WireWriter(RECORD_CIPHERTEXT).int(5).getvalue()[:-1]
    reader = WireReader(data, RECORD_CIPHERTEXT)
    with pytest.raises(ParseError) as exc:
        reader.int('user index')
    # header (5) + length prefix (4)
    assert exc.value.offset == 9
    assert 'byte offset 9' in str(exc.value)


def test_trailing_bytes_rejected():
    reader = WireReader(_record() + b'\x00', RECORD_CIPHERTEXT)
    reader.int()
    reader.int()
    reader.bytes()
    with pytest.raises(ParseError):
        reader.finish()


def test_armor_round_trip():
    data = _record()
    text = armor(data)
    assert text.startswith('-----BEGIN PSA CIPHERTEXT-----')
    assert text.rstrip().endswith('-----END PSA CIPHERTEXT-----')
    assert dearmor(text) == data
    assert load_record(text.encode('ascii')) == data
    assert load_record(data) == data


def test_dearmor_rejects_garbage():
    with pytest.raises(ParseError):
        dearmor('not armored')
    with pytest.raises(ParseError):
        dearmor('-----BEGIN PSA X-----\nzz\n-----END PSA X-----\n')
