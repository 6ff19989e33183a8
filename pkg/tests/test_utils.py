import struct

import numpy as np
import pytest

from src.utils.errors import AdmissibilityError, ConfigError, NumericalError
from src.utils.io import format_float, read_field_binary, write_field_binary
from src.utils.parallel import parallel_map
from src.utils.rng import make_generator, realization_seed, stream_word


class TestRng:
    def test_same_stream_same_draws(self):
        a = make_generator(3, 1, 2).standard_normal(5)
        b = make_generator(3, 1, 2).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = make_generator(3, 1).standard_normal(5)
        b = make_generator(3, 2).standard_normal(5)
        c = make_generator(4, 1).standard_normal(5)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_empty_stream_word(self):
        assert stream_word(()) == 0

    def test_realization_seeds_are_distinct(self):
        seeds = {realization_seed(0, i) for i in range(1000)}
        assert len(seeds) == 1000
        assert realization_seed(5, 3) == realization_seed(5, 3)


class TestBinary:
    def test_header_layout(self, tmp_path):
        path = write_field_binary(tmp_path / "f.bin", np.arange(6.0).reshape(2, 3))
        raw = path.read_bytes()
        assert struct.unpack("<4sIII", raw[:16]) == (b"PAMF", 1, 2, 3)
        assert len(raw) == 16 + 6 * 8

    def test_three_dimensional_fields_are_flattened(self, tmp_path):
        values = np.arange(24.0).reshape(2, 3, 4)
        path = write_field_binary(tmp_path / "f.bin", values)
        np.testing.assert_array_equal(read_field_binary(path), values.reshape(2, 12))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(struct.pack("<4sIII", b"NOPE", 1, 1, 1) + b"\0" * 8)
        with pytest.raises(ConfigError, match="magic"):
            read_field_binary(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.bin"
        path.write_bytes(struct.pack("<4sIII", b"PAMF", 1, 2, 2) + b"\0" * 8)
        with pytest.raises(ConfigError, match="expected 4 values"):
            read_field_binary(path)


def test_format_float_round_trips():
    for value in (0.1, 1.0 / 3.0, 2.0 ** -40, 12345.678901234567):
        assert float(format_float(value)) == value
    assert format_float(3) == "3"
    assert format_float(True) == "1"
    assert format_float("th1.7") == "th1.7"


def test_parallel_map_preserves_order():
    assert parallel_map(lambda x: x * x, range(10), workers=4) == [x * x for x in range(10)]
    assert parallel_map(lambda x: x, [], workers=4) == []


def test_error_categories():
    assert ConfigError("x").exit_code == 2
    assert NumericalError("x").exit_code == 3
    err = AdmissibilityError("bad", violations=["v"])
    assert err.exit_code == 4
    assert err.violations == ["v"]
    assert str(err) == "[covariance] bad"
    assert isinstance(ConfigError("x"), ValueError)
