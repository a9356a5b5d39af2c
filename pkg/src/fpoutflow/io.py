"""File formats: covering JSON, density CSV/binary, sparse matrix CSV/Matrix Market."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .covering import BoxCovering, DensityVector, StateSpace, build_covering
from .errors import ConfigurationError, UsageError


def covering_to_json(covering: BoxCovering, path) -> None:
    Path(path).write_text(json.dumps(covering.to_dict(), indent=2))


def covering_from_json(path, space: StateSpace | None = None) -> BoxCovering:
    """Rebuild a covering; the active set is taken from the file, not recomputed."""
    doc = json.loads(Path(path).read_text())
    if space is None:
        desc = doc.get("space") or {"type": "box", "bounds": doc["bounds"]}
        space = StateSpace.from_dict(desc)
    cov = build_covering(space, doc["boxes_per_axis"], doc.get("level"))
    active = np.asarray(doc["active"], dtype=np.int64)
    if not np.array_equal(active, cov.active):
        raise ConfigurationError("active boxes in file do not match the rebuilt covering")
    return cov


def density_to_csv(u: DensityVector, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "value"])
        for i, v in enumerate(u.values):
            w.writerow([i, repr(float(v))])


def density_from_csv(path, covering: BoxCovering) -> DensityVector:
    data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
    values = np.zeros(covering.n_active)
    if data.size:
        values[data[:, 0].astype(np.int64)] = data[:, 1]
    return DensityVector(covering, values)


def density_to_bin(u: DensityVector, path) -> None:
    """Little-endian uint64 length header followed by float64 values."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(u.values)))
        fh.write(np.asarray(u.values, dtype="<f8").tobytes())


def density_from_bin(path, covering: BoxCovering) -> DensityVector:
    raw = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", raw[:8])
    values = np.frombuffer(raw[8:], dtype="<f8")
    if len(values) != n:
        raise UsageError(f"header says {n} values, file holds {len(values)}")
    return DensityVector(covering, values.astype(float))


def matrix_to_csv(A, path) -> None:
    coo = sp.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for k in order:
            w.writerow([int(coo.row[k]), int(coo.col[k]), repr(float(coo.data[k]))])


def matrix_from_csv(path, shape: tuple | None = None) -> sp.csr_matrix:
    data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape or (0, 0))
    r, c = data[:, 0].astype(np.int64), data[:, 1].astype(np.int64)
    if shape is None:
        shape = (int(r.max()) + 1, int(c.max()) + 1)
    return sp.csr_matrix((data[:, 2], (r, c)), shape=shape)


def matrix_to_mtx(A, path, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, field="real",
                     precision=17, symmetry="general")


def matrix_from_mtx(path) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(str(path)))


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)}")
