import json

import numpy as np
import pytest

from qpath import io


def test_csv_round_trip(tmp_path, rng):
    data = rng.standard_normal((7, 3)) * 10.0 ** rng.integers(-12, 12, (7, 3))
    p = io.write_csv(tmp_path / "a.csv", ["x", "y", "z"], data)
    header, back = io.read_csv(p)
    assert header == ["x", "y", "z"]
    np.testing.assert_array_equal(back, data)
    assert p.read_bytes().count(b"\r\n") == 8


def test_csv_empty_table(tmp_path):
    p = io.write_csv(tmp_path / "e.csv", ["a", "b"], [])
    header, data = io.read_csv(p)
    assert header == ["a", "b"] and data.shape == (0, 2)


def test_csv_errors(tmp_path):
    with pytest.raises(io.SchemaError):
        io.write_csv(tmp_path / "b.csv", ["a"], np.zeros((2, 2)))
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(io.SchemaError):
        io.read_csv(tmp_path / "empty.csv")
    (tmp_path / "bad.csv").write_text("a,b\r\n1,x\r\n")
    with pytest.raises(io.SchemaError):
        io.read_csv(tmp_path / "bad.csv")


def test_json_round_trip_and_schema(tmp_path):
    payload = {"arr": np.arange(3.0), "c": np.array([1 + 2j]), "flag": np.bool_(True), "n": np.int64(4),
               "nan": float("nan"), "nested": {"t": (1, 2)}}
    p = io.write_json(tmp_path / "r.json", payload, "thing")
    doc = io.read_json(p, "thing")
    assert doc["schema_version"] == io.SCHEMA_VERSION and doc["kind"] == "thing"
    assert doc["arr"] == [0.0, 1.0, 2.0]
    assert doc["c"] == {"real": [1.0], "imag": [2.0]}
    assert doc["flag"] is True and doc["n"] == 4 and doc["nan"] == "nan"
    with pytest.raises(io.SchemaError, match="kind"):
        io.read_json(p, "other")
    doc["schema_version"] = 99
    p.write_text(json.dumps(doc))
    with pytest.raises(io.SchemaError, match="schema_version"):
        io.read_json(p)


def test_json_byte_stable(tmp_path):
    a = io.write_json(tmp_path / "a.json", {"b": 1.0, "a": [0.1, 0.2]}, "k").read_bytes()
    b = io.write_json(tmp_path / "b.json", {"a": [0.1, 0.2], "b": 1.0}, "k").read_bytes()
    assert a == b


def test_unserialisable():
    with pytest.raises(TypeError):
        io.to_jsonable(object())


def test_tables_parse_back(tmp_path, net5d):
    from qpath.localqp import tube_surface

    tables = {
        "cycle": io.cycle_table(net5d["cycle"]),
        "frame": io.frame_table(net5d["frame"]),
        "G": io.riccati_table(net5d["G"]),
        "tube": io.tube_table(tube_surface(net5d["model"], n_tau=4, n_theta=3, h=1e-2)),
    }
    for name, (header, rows) in tables.items():
        h2, back = io.read_csv(io.write_csv(tmp_path / f"{name}.csv", header, rows))
        assert h2 == header
        np.testing.assert_array_equal(back, rows)
    assert tables["G"][0][:3] == ["tau", "G00", "G01"]
    assert len(tables["frame"][0]) == 1 + 25 + 1
