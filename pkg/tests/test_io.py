import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hsibundles.core import GroupStructure
from hsibundles.io import (FormatError, load_groups, load_matrix, read_kv, save_groups,
                           save_matrix, write_kv)


def test_bin_layout(tmp_path):
    p = tmp_path / "m.bin"
    M = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    save_matrix(M, p)
    raw = p.read_bytes()
    assert raw[:4] == b"HSIM" and raw[4] == 1
    assert struct.unpack_from("<QQ", raw, 5) == (2, 3)
    # row-major payload
    assert np.frombuffer(raw[21:], "<f8").tolist() == [1, 2, 3, 4, 5, 6]
    assert len(raw) == 21 + 48


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_bin_round_trip_bit_exact(tmp_path_factory, M):
    p = tmp_path_factory.mktemp("rt") / "m.bin"
    save_matrix(M, p)
    assert np.array_equal(load_matrix(p), M)


def test_csv_round_trip(tmp_path):
    M = np.random.default_rng(0).normal(size=(4, 3))
    p = tmp_path / "m.csv"
    save_matrix(M, p)
    assert "," in p.read_text().splitlines()[0]
    assert np.array_equal(load_matrix(p), M)


def test_truncated_bin(tmp_path):
    p = tmp_path / "m.bin"
    save_matrix(np.ones((3, 3)), p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(FormatError, match="72 bytes, 64 available"):
        load_matrix(p)


def test_bad_magic_and_version(tmp_path):
    p = tmp_path / "m.bin"
    p.write_bytes(b"XXXX" + bytes(17))
    with pytest.raises(FormatError, match="magic"):
        load_matrix(p)
    p.write_bytes(b"HSIM" + struct.pack("<BQQ", 2, 0, 0))
    with pytest.raises(FormatError, match="version"):
        load_matrix(p)
    p.write_bytes(b"HSI")
    with pytest.raises(FormatError):
        load_matrix(p)


def test_csv_errors_name_location(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,2\n3,x\n")
    with pytest.raises(FormatError, match="row 2, column 2"):
        load_matrix(p)
    p.write_text("1,2\n3\n")
    with pytest.raises(FormatError, match="row 2"):
        load_matrix(p)


def test_groups_round_trip_one_based(tmp_path):
    p = tmp_path / "groups.txt"
    g = GroupStructure(np.array([0, 0, 1, 2, 1]))
    save_groups(g, p)
    assert p.read_text().split() == ["1", "1", "2", "3", "2"]
    assert load_groups(p).labels.tolist() == g.labels.tolist()
    p.write_text("0\n1\n")
    with pytest.raises(FormatError):
        load_groups(p)


def test_kv(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\npenalty = group  # trailing\n\nlambda=0.01\n")
    assert read_kv(p) == {"penalty": "group", "lambda": "0.01"}
    write_kv({"a": 1, "b": "x"}, p)
    assert read_kv(p) == {"a": "1", "b": "x"}
    p.write_text("a=1\na=2\n")
    with pytest.raises(FormatError, match="duplicate"):
        read_kv(p)
    p.write_text("novalue\n")
    with pytest.raises(FormatError):
        read_kv(p)
