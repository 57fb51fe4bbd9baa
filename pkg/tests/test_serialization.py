import json
import math

import numpy as np
import pytest
from hypothesis import given

from conftest import small_models
from maxsum_bethe.errors import ModelFormatError
from maxsum_bethe.model import Model
from maxsum_bethe.serialization import dump_model, dumps_model, json_text, jsonable, load_model, loads_model


def test_round_trip_with_neg_inf(tmp_path):
    m = Model([3, 2], [[0, "-inf", 1.5], [0, 0]], [((0, 1), [[0, 1], [-math.inf, -math.inf], [2, -0.25]])])
    text = dumps_model(m)
    assert '"-inf"' in text
    back = loads_model(text)
    assert back.equals(m)
    assert dumps_model(back) == text
    dump_model(m, tmp_path / "m.json")
    assert (tmp_path / "m.json").read_text() == text
    assert load_model(tmp_path / "m.json").equals(m)


@given(small_models())
def test_round_trip_is_byte_identical(m):
    text = dumps_model(m)
    assert dumps_model(loads_model(text)) == text
    assert loads_model(text).equals(m)


def _doc(**over):
    doc = {"domains": [2, 2], "unary": [[0, 0], [0, 0]], "factors": [{"vars": [0, 1], "table": [0, 1, 2, 3]}]}
    doc.update(over)
    return doc


def _lines(doc):
    # one key per line so the reported line is easy to predict
    return json.dumps(doc, indent=1)


@pytest.mark.parametrize("change, pattern", [
    ({"domains": [2, 0]}, "domain sizes"),
    ({"domains": [2, 2.5]}, "integers"),
    ({"unary": [[0, 0]]}, "unary tables"),
    ({"unary": [[0, 0], [0, "x"]]}, "number"),
    ({"unary": [[0, 0], ["-inf", "-inf"]]}, "entirely -inf"),
    ({"factors": [{"vars": [0], "table": [0, 0]}]}, "singleton"),
    ({"factors": [{"vars": [0, 5], "table": [0, 0, 0, 0]}]}, "outside"),
    ({"factors": [{"vars": [1, 0], "table": [0, 0, 0, 0]}]}, "increasing"),
    ({"factors": [{"vars": [0, 1], "table": [0, 0, 0]}]}, "expected 4"),
    ({"factors": [{"vars": [0, 1], "table": [0, 0, 0, 0], "w": 1}]}, "exactly the keys"),
    ({"factors": [{"vars": [0, 1], "table": [0, 0, 0, 0]}, {"vars": [0, 1], "table": [0, 0, 0, 0]}]},
     "duplicates"),
    ({"extra": 1}, "unknown key"),
])
def test_validation_errors(change, pattern):
    with pytest.raises(ModelFormatError, match=pattern) as info:
        loads_model(_lines(_doc(**change)))
    assert info.value.line is not None and str(info.value).startswith(f"line {info.value.line}: ")


def test_error_lines_point_at_the_value():
    text = dumps_model(Model([2, 2, 2], [[0, 0]] * 3, [((0, 1), np.zeros((2, 2))), ((1, 2), np.zeros((2, 2)))]))
    lines = text.splitlines()
    lines[4] = lines[4].replace("0.0", '"oops"', 1)
    with pytest.raises(ModelFormatError) as info:
        loads_model("\n".join(lines))
    assert info.value.line == 5
    lines = text.splitlines()
    lines[3] = lines[3].replace("[0.0", '["-inf"', 1)
    with pytest.raises(ModelFormatError, match="incompatible") as info:
        loads_model("\n".join(lines))
    assert info.value.line == 9  # factor 0, the first one touching variable 0


@pytest.mark.parametrize("text, pattern", [
    ('{"domains": [1], "unary": [[NaN]]}', "NaN"),
    ('{"domains": [1], "unary": [[-Infinity]]}', "NaN/Infinity"),
    ('{"domains": [1], "unary": [[1e999]]}', "non-finite"),
    ('{"domains": [1], "domains": [1], "unary": [[0]]}', "duplicate"),
    ('{"domains": [1], "unary": [[0]]', "invalid JSON"),
    ('[1]', "object"),
    ('{"unary": []}', "missing"),
])
def test_rejects_bad_json(text, pattern):
    with pytest.raises(ModelFormatError, match=pattern):
        loads_model(text)


def test_missing_file(tmp_path):
    with pytest.raises(ModelFormatError, match="cannot read"):
        load_model(tmp_path / "nope.json")


def test_factors_key_is_optional():
    assert loads_model('{"domains": [2], "unary": [[0, 1]]}').num_factors == 0


def test_jsonable():
    out = jsonable({"a": np.float64(math.inf), "b": [np.int64(3), np.array([1.0, -math.inf])], 1: math.nan})
    assert out == {"a": "inf", "b": [3, [1.0, "-inf"]], "1": "nan"}
    assert json_text({"x": 1}).endswith("\n")
