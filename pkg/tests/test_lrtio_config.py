import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lightray.config import ExperimentConfig
from lightray.lrtio import LrtError, LrtFile, read_lrt, write_lrt


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_round_trip_is_bit_identical(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("rt") / "a.lrt"
    write_lrt(p, LrtFile("field", 2, data, [1.0, 2.0], {"x": 1}))
    back = read_lrt(p)
    assert back.data.tobytes() == np.ascontiguousarray(data).tobytes()
    assert back.kind == "field" and back.n == 2 and back.meta == {"x": 1}
    # writing again gives identical bytes
    q = p.with_name("b.lrt")
    write_lrt(q, back)
    assert p.read_bytes() == q.read_bytes()


def test_first_index_varies_fastest(tmp_path):
    a = np.arange(6.0).reshape(2, 3)
    write_lrt(tmp_path / "f.lrt", LrtFile("sinogram", 1, a, [1.0]))
    body = (tmp_path / "f.lrt").read_bytes().split(b"\n", 1)[1]
    assert np.array_equal(np.frombuffer(body, "<f8"), [0, 3, 1, 4, 2, 5])


def test_large_random_round_trip(tmp_path):
    a = np.random.default_rng(0).normal(size=(64, 64, 64))
    write_lrt(tmp_path / "big.lrt", LrtFile("field", 2, a, [1.0, 1.0]))
    assert np.array_equal(read_lrt(tmp_path / "big.lrt").data, a)


def _good(tmp_path):
    p = tmp_path / "g.lrt"
    write_lrt(p, LrtFile("field", 2, np.zeros((3, 4, 4)), [1.0, 1.0]))
    return p


def test_truncated_body_reports_offset(tmp_path):
    p = _good(tmp_path)
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(LrtError) as ei:
        read_lrt(p)
    assert "too short" in str(ei.value)
    assert ei.value.offset > 0


@pytest.mark.parametrize("mutate", [
    lambda h: {**h, "magic": "LRT2"},
    lambda h: {**h, "kind": "volume"},
    lambda h: {**h, "dims": [3, 4]},
    lambda h: {**h, "dtype": "float32"},
    lambda h: {k: v for k, v in h.items() if k != "extents"},
])
def test_bad_headers_rejected(tmp_path, mutate):
    p = _good(tmp_path)
    head, body = p.read_bytes().split(b"\n", 1)
    h = mutate(json.loads(head))
    p.write_bytes(json.dumps(h).encode() + b"\n" + body)
    with pytest.raises(LrtError):
        read_lrt(p)


def test_garbage_and_nonfinite(tmp_path):
    p = tmp_path / "x.lrt"
    p.write_bytes(b"{not json\n")
    with pytest.raises(LrtError):
        read_lrt(p)
    q = _good(tmp_path)
    raw = bytearray(q.read_bytes())
    raw[-8:] = np.array([np.nan]).tobytes()
    q.write_bytes(bytes(raw))
    with pytest.raises(LrtError) as ei:
        read_lrt(q)
    assert ei.value.offset == len(raw) - 8


def test_config_defaults_and_merge(tmp_path):
    c = ExperimentConfig.from_dict({"grid": {"nt": 9}, "eps": 0.3})
    assert c.grid["nt"] == 9 and c.grid["nx"] == 65 and c.eps == 0.3
    p = tmp_path / "c.json"
    p.write_text(c.dumps())
    assert ExperimentConfig.load(p) == c


@pytest.mark.parametrize("d", [{"colour": 1}, {"grid": {"nz": 3}}, {"n": 4}, {"eps": 1.5},
                               {"metric": "schwarzschild"}, {"pad": 0}])
def test_config_rejects(d):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(d)


def test_config_reports_json_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"n": 2,,}')
    with pytest.raises(ValueError, match="byte 8"):
        ExperimentConfig.load(p)
