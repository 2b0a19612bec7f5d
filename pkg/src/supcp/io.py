"""File formats: binary tensor container, covariate CSV, JSON model document.

The tensor container is little-endian throughout: 4-byte magic ``MWAY``,
u32 format version (1), u32 order K, K u64 dimensions, then the float64
payload linearized with the first mode fastest (Fortran order).  Writes are
atomic (temp file in the target directory, then rename).
"""

import json
import os
import struct
import tempfile

import numpy as np

from .model import FitConfig, FitResult, SupCpParams
from .validation import check_matrix, check_multiway

__all__ = [
    "TensorFormatError",
    "CsvParseError",
    "read_tensor",
    "write_tensor",
    "read_matrix_csv",
    "write_matrix_csv",
    "save_model",
    "load_model",
    "model_document",
]

MAGIC = b"MWAY"
FORMAT_VERSION = 1
SCHEMA_VERSION = 1
# header prefix: magic, u32 version, u32 order
_PREFIX = struct.Struct("<4sII")


class TensorFormatError(ValueError):
    """Malformed tensor container; ``offset`` is the failing byte position."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CsvParseError(ValueError):
    """Malformed covariate CSV; ``line`` is the failing 1-based line number."""

    def __init__(self, message, line):
        super().__init__(f"{message} (line {line})")
        self.line = line


def _atomic_write(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tensor(path, x):
    """Serialize a multiway array to the binary container (atomic)."""
    x = check_multiway(x, min_order=1, name="x")
    header = _PREFIX.pack(MAGIC, FORMAT_VERSION, x.ndim)
    dims = struct.pack(f"<{x.ndim}Q", *x.shape)
    payload = np.ravel(x, order="F").astype("<f8").tobytes()
    _atomic_write(path, header + dims + payload)


def read_tensor(path):
    """Read a multiway array from the binary container.

    Raises TensorFormatError (with the byte offset) on a bad magic, an
    unsupported version, bad dimensions, or a payload whose length does not
    match the header.
    """
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < _PREFIX.size:
        raise TensorFormatError(f"file too short for header ({len(blob)} bytes)", len(blob))
    magic, version, order = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"unsupported format version {version}", 4)
    if order < 1:
        raise TensorFormatError("order must be at least 1", 8)
    dims_end = _PREFIX.size + 8 * order
    if len(blob) < dims_end:
        raise TensorFormatError("truncated dimension list", len(blob))
    dims = struct.unpack_from(f"<{order}Q", blob, _PREFIX.size)
    n_entries = 1
    for i, d in enumerate(dims):
        if d < 1:
            raise TensorFormatError(f"dimension {i} is {d}", _PREFIX.size + 8 * i)
        n_entries *= d
    expected = dims_end + 8 * n_entries
    if len(blob) < expected:
        raise TensorFormatError(
            f"truncated payload: expected {expected} bytes, file has {len(blob)}",
            len(blob),
        )
    if len(blob) > expected:
        raise TensorFormatError(
            f"trailing bytes after payload: expected {expected} bytes, file has {len(blob)}",
            expected,
        )
    flat = np.frombuffer(blob, dtype="<f8", count=n_entries, offset=dims_end)
    x = np.reshape(flat, dims, order="F")
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(np.ravel(x, order="F")))[0])
        raise TensorFormatError("non-finite payload value", dims_end + 8 * bad)
    return x.copy()


def read_matrix_csv(path):
    """Read an n x q numeric CSV, auto-skipping one header row.

    The first row counts as a header when any of its cells fails to parse as
    a float.  Ragged rows and non-numeric data cells raise CsvParseError with
    the 1-based line number.
    """
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            cells = [c.strip() for c in line.split(",")]
            if lineno == 1:
                try:
                    parsed = [float(c) for c in cells]
                except ValueError:
                    width = len(cells)
                    continue
                width = len(cells)
                rows.append(parsed)
                continue
            if width is not None and len(cells) != width:
                raise CsvParseError(
                    f"expected {width} columns, found {len(cells)}", lineno
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise CsvParseError(str(exc), lineno) from None
    if not rows:
        raise CsvParseError("no data rows", 1)
    m = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(m)):
        raise CsvParseError("non-finite value in data", 1)
    return m


def write_matrix_csv(path, m, header=None):
    """Write a matrix as CSV (atomic); ``header`` is an optional column-name list."""
    m = check_matrix(m, "m")
    lines = []
    if header is not None:
        if len(header) != m.shape[1]:
            raise ValueError("header length does not match column count")
        lines.append(",".join(str(h) for h in header))
    for row in m:
        lines.append(",".join(repr(float(v)) for v in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def _matrix_to_lists(m):
    return [[float(v) for v in row] for row in np.asarray(m, dtype=float)]


def model_document(result):
    """Build the JSON-ready model document for a fit result."""
    params = result.params
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "supcp",
        "dims": [int(d) for d in params.dims],
        "rank": int(params.rank),
        "loadings": [_matrix_to_lists(v) for v in params.loadings],
        "b": _matrix_to_lists(params.b),
        "sigma_e2": float(params.sigma_e2),
        "x_mean": {
            "dims": [int(d) for d in result.x_mean.shape],
            "values": [float(v) for v in np.ravel(result.x_mean, order="F")],
        },
        "y_mean": None
        if result.y_mean is None
        else [float(v) for v in result.y_mean],
    }
    if params.diag_sigma_f:
        doc["sigma_f_diag"] = [float(v) for v in np.diag(params.sigma_f)]
    else:
        doc["sigma_f"] = _matrix_to_lists(params.sigma_f)
    config = result.config
    doc["fit"] = {
        "seed": int(config.seed) if config is not None else None,
        "init_method": config.init_method if config is not None else None,
        "max_iters": int(config.max_iters) if config is not None else None,
        "anneal_iters": int(config.anneal_iters) if config is not None else None,
        "tol": float(config.tol) if config is not None else None,
        "n_iters": int(result.n_iters),
        "converged": bool(result.converged),
        "loglik_trace": [float(v) for v in result.loglik_trace],
    }
    return doc


def save_model(path, result):
    """Serialize a fit result to a JSON model document (atomic write)."""
    doc = model_document(result)
    text = json.dumps(doc, indent=2, allow_nan=False, sort_keys=True)
    _atomic_write(path, (text + "\n").encode("utf-8"))


def load_model(path):
    """Rebuild a FitResult (parameters, centering means, fit metadata) from a
    model document.  Posterior scores are not stored in the document, so the
    ``e_step`` slot is None."""
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema {doc.get('schema_version')!r}")
    loadings = [np.asarray(v, dtype=float) for v in doc["loadings"]]
    rank = int(doc["rank"])
    b = np.asarray(doc["b"], dtype=float)
    if b.size == 0:
        b = b.reshape(0, rank)
    if "sigma_f_diag" in doc:
        sigma_f = np.diag(np.asarray(doc["sigma_f_diag"], dtype=float))
        diag_sigma_f = True
    else:
        sigma_f = np.asarray(doc["sigma_f"], dtype=float)
        diag_sigma_f = False
    params = SupCpParams(loadings, b, sigma_f, float(doc["sigma_e2"]), diag_sigma_f)
    x_mean = np.reshape(
        np.asarray(doc["x_mean"]["values"], dtype=float),
        [int(d) for d in doc["x_mean"]["dims"]],
        order="F",
    )
    y_mean = None if doc["y_mean"] is None else np.asarray(doc["y_mean"], dtype=float)
    meta = doc.get("fit", {})
    config = FitConfig(
        rank=rank,
        max_iters=meta.get("max_iters") or 1000,
        tol=meta.get("tol") or 1e-8,
        anneal_iters=meta.get("anneal_iters") or 0,
        init_method=meta.get("init_method") or "random",
        seed=meta.get("seed") or 0,
        diag_sigma_f=diag_sigma_f,
    )
    return FitResult(
        params=params,
        e_step=None,
        loglik_trace=np.asarray(meta.get("loglik_trace", []), dtype=float),
        converged=bool(meta.get("converged", False)),
        n_iters=int(meta.get("n_iters", 0)),
        x_mean=x_mean,
        y_mean=y_mean,
        config=config,
    )
