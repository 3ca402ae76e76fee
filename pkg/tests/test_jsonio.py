import json

import numpy as np
import pytest

from cknlab import jsonio


def test_floats_17_significant_digits():
    out = jsonio.dumps({"x": 0.1})
    assert '"x": 0.10000000000000001' in out


def test_roundtrip_and_structure():
    obj = {"a": 1, "b": [1.5, 2.0, True, None], "c": {"d": "text \"quoted\"", "e": []}}
    out = jsonio.dumps(obj)
    back = json.loads(out)
    assert back["a"] == 1
    assert back["b"] == [1.5, 2.0, True, None]
    assert back["c"]["d"] == 'text "quoted"'
    assert back["c"]["e"] == []


def test_numpy_scalars_handled():
    out = jsonio.dumps({"v": np.float64(2.5), "n": np.int64(3), "f": np.True_})
    back = json.loads(out)
    assert back == {"v": 2.5, "n": 3, "f": True}


def test_byte_stability():
    obj = {"values": list(np.geomspace(1e-4, 1e-1, 8))}
    assert jsonio.dumps(obj) == jsonio.dumps(obj)


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        jsonio.dumps({"x": float("inf")})


def test_integers_stay_integers():
    out = jsonio.dumps({"n": 42})
    assert '"n": 42' in out and "42.0" not in out
