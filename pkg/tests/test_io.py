import json
import struct

import numpy as np
import pytest

from supcp.io import (
    CsvParseError,
    TensorFormatError,
    load_model,
    model_document,
    read_matrix_csv,
    read_tensor,
    save_model,
    write_matrix_csv,
    write_tensor,
)
from supcp.model import FitConfig, fit_supcp
from supcp.selection import test_loglik as held_out_loglik


def test_tensor_round_trip_bitwise(tmp_path):
    x = np.random.default_rng(0).standard_normal((3, 4, 5))
    path = tmp_path / "t.mway"
    write_tensor(path, x)
    assert np.array_equal(read_tensor(path), x)


def test_tensor_round_trip_one_way(tmp_path):
    x = np.arange(6.0)
    path = tmp_path / "v.mway"
    write_tensor(path, x)
    assert np.array_equal(read_tensor(path), x)


def test_tensor_bad_magic(tmp_path):
    path = tmp_path / "bad.mway"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(TensorFormatError) as err:
        read_tensor(path)
    assert err.value.offset == 0


def test_tensor_bad_version(tmp_path):
    path = tmp_path / "bad.mway"
    path.write_bytes(struct.pack("<4sII", b"MWAY", 9, 1) + struct.pack("<Q", 1) + b"\x00" * 8)
    with pytest.raises(TensorFormatError) as err:
        read_tensor(path)
    assert err.value.offset == 4


def test_tensor_zero_order_rejected(tmp_path):
    path = tmp_path / "bad.mway"
    path.write_bytes(struct.pack("<4sII", b"MWAY", 1, 0))
    with pytest.raises(TensorFormatError) as err:
        read_tensor(path)
    assert err.value.offset == 8


def test_tensor_truncated_payload(tmp_path):
    x = np.ones((2, 3))
    path = tmp_path / "t.mway"
    write_tensor(path, x)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(TensorFormatError) as err:
        read_tensor(path)
    assert err.value.offset == len(blob) - 8


def test_tensor_trailing_bytes(tmp_path):
    x = np.ones((2, 2))
    path = tmp_path / "t.mway"
    write_tensor(path, x)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(TensorFormatError):
        read_tensor(path)


def test_tensor_zero_dimension_rejected(tmp_path):
    path = tmp_path / "t.mway"
    header = struct.pack("<4sII", b"MWAY", 1, 2) + struct.pack("<QQ", 2, 0)
    path.write_bytes(header)
    with pytest.raises(TensorFormatError) as err:
        read_tensor(path)
    assert err.value.offset == 12 + 8


def test_tensor_nonfinite_payload_rejected(tmp_path):
    path = tmp_path / "t.mway"
    header = struct.pack("<4sII", b"MWAY", 1, 1) + struct.pack("<Q", 2)
    payload = struct.pack("<dd", 1.0, float("nan"))
    path.write_bytes(header + payload)
    with pytest.raises(TensorFormatError) as err:
        read_tensor(path)
    assert err.value.offset == 20 + 8


def test_tensor_write_rejects_nonfinite(tmp_path):
    with pytest.raises(ValueError):
        write_tensor(tmp_path / "t.mway", np.array([1.0, np.inf]))


def test_csv_plain_matrix(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,2\n3,4\n")
    assert np.array_equal(read_matrix_csv(path), [[1.0, 2.0], [3.0, 4.0]])


def test_csv_header_skipped(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b\n1,2\n3,4\n")
    assert np.array_equal(read_matrix_csv(path), [[1.0, 2.0], [3.0, 4.0]])


def test_csv_ragged_row_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(CsvParseError) as err:
        read_matrix_csv(path)
    assert err.value.line == 2


def test_csv_non_numeric_cell_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,2\n3,oops\n")
    with pytest.raises(CsvParseError) as err:
        read_matrix_csv(path)
    assert err.value.line == 2


def test_csv_empty_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("")
    with pytest.raises(CsvParseError):
        read_matrix_csv(path)


def test_csv_write_round_trip(tmp_path):
    m = np.random.default_rng(1).standard_normal((4, 3))
    path = tmp_path / "m.csv"
    write_matrix_csv(path, m)
    assert np.array_equal(read_matrix_csv(path), m)
    write_matrix_csv(path, m, header=["a", "b", "c"])
    assert np.array_equal(read_matrix_csv(path), m)


def _small_fit():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((10, 3, 4)) + 1.5
    y = rng.standard_normal((10, 2)) - 0.5
    config = FitConfig(rank=2, max_iters=25, anneal_iters=4, seed=3)
    return x, y, fit_supcp(x, y, config)


def test_model_document_round_trip(tmp_path):
    x, y, res = _small_fit()
    path = tmp_path / "model.json"
    save_model(path, res)
    back = load_model(path)
    assert back.params.sigma_e2 == res.params.sigma_e2
    assert np.array_equal(back.params.b, res.params.b)
    assert np.array_equal(back.params.sigma_f, res.params.sigma_f)
    for a, b in zip(back.params.loadings, res.params.loadings):
        assert np.array_equal(a, b)
    assert np.array_equal(back.x_mean, res.x_mean)
    assert np.array_equal(back.y_mean, res.y_mean)
    assert np.array_equal(back.loglik_trace, res.loglik_trace)
    assert back.converged == res.converged
    assert back.config.seed == res.config.seed


def test_model_round_trip_preserves_evaluation(tmp_path):
    x, y, res = _small_fit()
    path = tmp_path / "model.json"
    save_model(path, res)
    back = load_model(path)
    assert abs(held_out_loglik(x, y, back) - res.loglik) < 1e-10 * abs(res.loglik)


def test_model_document_shape(tmp_path):
    _, _, res = _small_fit()
    doc = model_document(res)
    assert doc["schema_version"] == 1
    assert doc["rank"] == 2
    assert doc["dims"] == [3, 4]
    assert "sigma_f_diag" in doc and "sigma_f" not in doc
    assert doc["fit"]["seed"] == 3
    text = json.dumps(doc, allow_nan=False)
    assert "NaN" not in text


def test_model_document_unsupervised(tmp_path):
    rng = np.random.default_rng(11)
    x = rng.standard_normal((8, 3, 3))
    res = fit_supcp(x, None, FitConfig(rank=1, max_iters=15, anneal_iters=2, seed=0))
    path = tmp_path / "model.json"
    save_model(path, res)
    back = load_model(path)
    assert back.params.b.shape == (0, 1)
    assert back.y_mean is None
