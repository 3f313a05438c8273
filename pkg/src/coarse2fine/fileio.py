"""Readers and writers for datasets, hierarchies and trained parameters.

Formats:

* hierarchy: JSON object ``{coarse: [fine, ...]}`` (key order is label order)
* features: CSV of floats, or binary ``RFLB1`` + u64 N + u64 d + N*d f64 (LE)
* labels: CSV of 0/1 integers
* parameters: binary ``RFLP1`` + architecture descriptor + f64 (LE) in canonical order
"""
import csv
import json
import os
import struct

import numpy as np

from .data import Dataset, LabelHierarchy
from .errors import ConfigError, DimensionError, ParseError, StorageError
from .model import Architecture, ModelParameters

FEATURE_MAGIC = b"RFLB1"
PARAMS_MAGIC = b"RFLP1"
_ACT_CODES = {"relu": 0, "tanh": 1}


def _open_write(path, mode="w"):
    try:
        parent = os.path.dirname(os.fspath(path))
        if parent:
            os.makedirs(parent, exist_ok=True)
        if "b" in mode:
            return open(path, mode)
        return open(path, mode, newline="")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc.strerror}") from exc


def _open_read(path, mode="r"):
    try:
        if "b" in mode:
            return open(path, mode)
        return open(path, mode, newline="")
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc.strerror}") from exc


def save_hierarchy(hierarchy, path):
    with _open_write(path) as fh:
        json.dump(hierarchy.to_mapping(), fh, indent=2)
        fh.write("\n")


def load_hierarchy(path):
    with _open_read(path) as fh:
        try:
            mapping = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(mapping, dict) or not all(isinstance(v, list) for v in mapping.values()):
        raise ParseError(f"{path}: expected an object mapping coarse names to lists of fine names")
    try:
        return LabelHierarchy.from_mapping(mapping)
    except ConfigError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _read_csv_matrix(path, convert, what):
    rows = []
    with _open_read(path) as fh:
        width = None
        for r, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DimensionError(f"{path}: row {r} has {len(row)} columns, expected {width}")
            vals = []
            for c, cell in enumerate(row):
                try:
                    vals.append(convert(cell))
                except ValueError:
                    raise ParseError(f"{path}: row {r}, column {c}: cannot parse {cell!r} as {what}") from None
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return rows


def _parse_bit(cell):
    v = int(cell.strip())
    if v not in (0, 1):
        raise ValueError(cell)
    return v


def _parse_float(cell):
    v = float(cell)
    if not np.isfinite(v):
        raise ValueError(cell)
    return v


def save_features(X, path, binary=False):
    X = np.asarray(X, dtype=np.float64)
    if binary:
        with _open_write(path, "wb") as fh:
            fh.write(FEATURE_MAGIC)
            fh.write(struct.pack("<QQ", X.shape[0], X.shape[1]))
            fh.write(X.astype("<f8").tobytes())
        return
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def load_features(path):
    with _open_read(path, "rb") as fh:
        head = fh.read(len(FEATURE_MAGIC))
        if head == FEATURE_MAGIC:
            dims = fh.read(16)
            if len(dims) != 16:
                raise ParseError(f"{path}: truncated binary header")
            n, d = struct.unpack("<QQ", dims)
            payload = fh.read()
            if len(payload) != 8 * n * d:
                raise DimensionError(f"{path}: header declares {n}x{d} floats, file holds {len(payload) // 8}")
            X = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(n, d)
            if not np.all(np.isfinite(X)):
                bad = np.argwhere(~np.isfinite(X))[0]
                raise ParseError(f"{path}: row {bad[0]}, column {bad[1]}: non-finite value")
            return X
    return np.array(_read_csv_matrix(path, _parse_float, "a finite float"), dtype=np.float64)


def save_labels(Y, path):
    Y = np.asarray(Y)
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in Y:
            w.writerow([int(v) for v in row])


def load_labels(path):
    return np.array(_read_csv_matrix(path, _parse_bit, "0 or 1"), dtype=np.int8)


def save_dataset(dataset, hierarchy, directory, binary_features=False):
    """Write features/coarse/fine/hierarchy files; returns the paths written."""
    paths = {
        "features": os.path.join(directory, "features.bin" if binary_features else "features.csv"),
        "coarse": os.path.join(directory, "coarse.csv"),
        "hierarchy": os.path.join(directory, "hierarchy.json"),
    }
    save_features(dataset.features, paths["features"], binary=binary_features)
    save_labels(dataset.coarse, paths["coarse"])
    if dataset.has_fine:
        paths["fine"] = os.path.join(directory, "fine.csv")
        save_labels(dataset.fine, paths["fine"])
    save_hierarchy(hierarchy, paths["hierarchy"])
    return paths


def load_dataset(feature_path, coarse_path, fine_path=None, hierarchy_path=None):
    if hierarchy_path is None:
        raise ConfigError("a hierarchy file is required")
    hierarchy = load_hierarchy(hierarchy_path)
    X = load_features(feature_path)
    C = load_labels(coarse_path)
    if C.shape[0] != X.shape[0]:
        raise DimensionError(f"{coarse_path}: {C.shape[0]} rows, features have {X.shape[0]}")
    if C.shape[1] != hierarchy.n_coarse:
        raise DimensionError(f"{coarse_path}: {C.shape[1]} columns, hierarchy has {hierarchy.n_coarse} coarse labels")
    F = None
    if fine_path is not None:
        F = load_labels(fine_path)
        if F.shape[0] != X.shape[0]:
            raise DimensionError(f"{fine_path}: {F.shape[0]} rows, features have {X.shape[0]}")
        if F.shape[1] != hierarchy.n_fine:
            raise DimensionError(f"{fine_path}: {F.shape[1]} columns, hierarchy has {hierarchy.n_fine} fine labels")
    dataset = Dataset(X, C, F)
    dataset.check_consistency(hierarchy)
    return dataset, hierarchy


def save_params(params, path):
    arch = params.arch
    with _open_write(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<QQ", arch.input_dim, len(arch.hidden)))
        for h in arch.hidden:
            fh.write(struct.pack("<Q", h))
        fh.write(struct.pack("<QBQ", arch.n_labels, _ACT_CODES[arch.activation], params.n_params))
        fh.write(params.flat.astype("<f8").tobytes())


def load_params(path):
    with _open_read(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(PARAMS_MAGIC):
        raise ParseError(f"{path}: not an RFLP1 parameter file")
    try:
        off = len(PARAMS_MAGIC)
        d, n_hidden = struct.unpack_from("<QQ", blob, off)
        off += 16
        hidden = struct.unpack_from(f"<{n_hidden}Q", blob, off)
        off += 8 * n_hidden
        k, act, n = struct.unpack_from("<QBQ", blob, off)
        off += struct.calcsize("<QBQ")
    except struct.error as exc:
        raise ParseError(f"{path}: truncated header") from exc
    names = {v: k_ for k_, v in _ACT_CODES.items()}
    if act not in names:
        raise ParseError(f"{path}: unknown activation code {act}")
    arch = Architecture(int(d), tuple(int(h) for h in hidden), int(k), names[act])
    if n != arch.n_params or len(blob) - off != 8 * n:
        raise DimensionError(f"{path}: parameter block does not match the architecture")
    return ModelParameters(arch, np.frombuffer(blob, dtype="<f8", offset=off).astype(np.float64))
