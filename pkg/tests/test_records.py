import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fgscatter.records import (SWEEP_HEADER, Record, decode_complex, encode, format_number, read_records,
                               sweep_csv, to_line, write_records)


def test_field_order_and_provenance():
    line = to_line(Record("Q", {"n": 4}, 1.5, 2e-10, {"module": "gjms"}))
    obj = json.loads(line)
    assert list(obj) == ["quantity", "params", "value", "error_estimate", "provenance"]
    assert obj["provenance"]["package"] == "fgscatter" and obj["provenance"]["module"] == "gjms"


def test_number_formats():
    assert format_number(0.1) == "0.10000000000000001"
    assert format_number(3.0) == "3.0"
    assert format_number(-2) == "-2.0"
    assert format_number(1e22) == "1e+22"
    with pytest.raises(ValueError):
        format_number(math.nan)
    assert encode(0.5 - 0.25j) == "[0.5, -0.25]"
    assert encode(Fraction(-1, 768)) == '"-1/768"'
    assert encode(np.array([1.0, 2.0])) == "[1.0, 2.0]"
    assert encode({"a": [True, None, 3]}) == '{"a": [true, null, 3]}'
    with pytest.raises(TypeError):
        encode(object())


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_scalar_round_trip_is_bit_exact(x):
    back = json.loads(to_line(Record("x", {}, x)))["value"]
    assert back == x and math.copysign(1, back) == math.copysign(1, x)


def test_complex_residue_pair(tmp_path):
    path = tmp_path / "out" / "r.jsonl"
    write_records([Record("residue", {"s0": 0.5}, 0.5 + 1e-17j, 1e-16)], path)
    (obj,) = read_records(path)
    assert decode_complex(obj["value"]) == 0.5 + 1e-17j


def test_sweep_csv():
    text = sweep_csv([("xi=1,0", 1.3, 0.2 - 0.1j)])
    lines = text.splitlines()
    assert lines[0] == "mode,re_s,im_s,re_S,im_S" == ",".join(SWEEP_HEADER)
    assert lines[1] == '"xi=1,0",1.3,0.0,0.20000000000000001,-0.10000000000000001'


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="cannot write"):
        write_records([Record("x", {}, 1.0)], blocker / "sub" / "r.jsonl")
