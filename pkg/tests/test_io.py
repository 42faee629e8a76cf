import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kronmem.io import (
    FormatError,
    parse_int_list,
    read_csv_matrix,
    read_kmm,
    read_manifest,
    read_off,
    write_csv_matrix,
    write_kmm,
    write_manifest,
    write_off,
)


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.tuples(st.integers(0, 6), st.integers(0, 6)),
              elements=st.floats(allow_nan=False)))
def test_kmm_round_trip(tmp_path_factory, M):
    p = tmp_path_factory.mktemp("k") / "m.kmm"
    write_kmm(p, M)
    np.testing.assert_array_equal(read_kmm(p), M)


def test_kmm_layout(tmp_path):
    p = tmp_path / "m.kmm"
    write_kmm(p, [[1.0, 2.0, 3.0]])
    raw = p.read_bytes()
    assert raw[:4] == b"KMM1" and len(raw) == 12 + 24
    assert raw[4:12] == (1).to_bytes(4, "little") + (3).to_bytes(4, "little")
    write_kmm(p, np.arange(3.0))
    assert read_kmm(p).shape == (3, 1)


def test_kmm_errors(tmp_path):
    p = tmp_path / "bad.kmm"
    p.write_bytes(b"KMM2" + bytes(8))
    with pytest.raises(FormatError):
        read_kmm(p)
    p.write_bytes(b"KMM1" + (2).to_bytes(4, "little") + (2).to_bytes(4, "little") + bytes(8))
    with pytest.raises(FormatError):
        read_kmm(p)
    p.write_bytes(b"KM")
    with pytest.raises(FormatError):
        read_kmm(p)
    with pytest.raises(ValueError):
        write_kmm(p, np.zeros((2, 2, 2)))


def test_manifest_round_trip(tmp_path):
    p = tmp_path / "manifest.txt"
    write_manifest(p, {"alpha": 0.1, "stage": "GM", "idx": [1, 2, 3], "n": 4})
    m = read_manifest(p)
    assert m == {"alpha": "0.1", "stage": "GM", "idx": "1,2,3", "n": "4"}
    assert parse_int_list(m["idx"]) == [1, 2, 3]
    with pytest.raises(ValueError):
        write_manifest(p, {"a=b": 1})
    p.write_text("# comment\n\nkey = value\nbroken\n")
    with pytest.raises(FormatError):
        read_manifest(p)


def test_csv_matrix(tmp_path, rng):
    M = rng.standard_normal((3, 4))
    write_csv_matrix(tmp_path / "m.csv", M)
    np.testing.assert_array_equal(read_csv_matrix(tmp_path / "m.csv"), M)


def test_off_round_trip(tmp_path):
    from kronmem.cortex import icosphere
    v, f = icosphere(1)
    write_off(tmp_path / "m.off", v, f)
    v2, f2 = read_off(tmp_path / "m.off")
    np.testing.assert_array_equal(v2, v)
    np.testing.assert_array_equal(f2, f)
    (tmp_path / "q.off").write_text("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    with pytest.raises(FormatError):
        read_off(tmp_path / "q.off")
    (tmp_path / "n.off").write_text("PLY\n")
    with pytest.raises(FormatError):
        read_off(tmp_path / "n.off")
