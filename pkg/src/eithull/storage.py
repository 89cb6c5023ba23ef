"""Binary containers for matrices, network weights, and datasets.

All multi-byte values are little-endian; floats are 8-byte IEEE.  Writers
emit no timestamps or environment state, so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .femsolver import DNMatrix, NDMatrix
from .geometry import Phantom, phantom_from_text, phantom_to_text
from .network import WEIGHT_SHAPES, NetworkWeights, pad_indicator

MATRIX_MAGIC = b"EITDN01"
INDICATOR_MAGIC = b"EITIM01"
WEIGHTS_MAGIC = b"EITNN01"
DATASET_MAGIC = b"EITDS01"

_F8 = np.dtype("<f8")
_FLAG_DN = 1


class FileFormatError(ValueError):
    """A binary container is malformed or of the wrong kind."""


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FileFormatError(f"truncated file while reading {what}")
    return data


def _expect_magic(fh, magic: bytes) -> None:
    got = fh.read(len(magic))
    if got != magic:
        raise FileFormatError(f"bad magic {got!r}, expected {magic!r}")


# ---------------------------------------------------------------------------
# DN / ND matrices: magic, uint32 order, uint32 flags, row-major float64


def write_matrix_file(path, mat: DNMatrix | NDMatrix) -> None:
    flags = _FLAG_DN if isinstance(mat, DNMatrix) else 0
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<II", mat.order, flags))
        fh.write(np.ascontiguousarray(mat.entries, dtype=_F8).tobytes())


def read_matrix_file(path) -> DNMatrix | NDMatrix:
    with open(path, "rb") as fh:
        _expect_magic(fh, MATRIX_MAGIC)
        order, flags = struct.unpack("<II", _read_exact(fh, 8, "matrix header"))
        size = order + 1 if flags & _FLAG_DN else order
        data = np.frombuffer(_read_exact(fh, 8 * size * size, "matrix data"), dtype=_F8)
        entries = data.reshape(size, size).copy()
    if flags & _FLAG_DN:
        return DNMatrix(order, entries)
    return NDMatrix(order, entries)


# ---------------------------------------------------------------------------
# indicator matrices: magic, uint32 rows, uint32 cols, row-major float64


def write_indicator_file(path, im: np.ndarray) -> None:
    im = np.asarray(im, dtype=float)
    with open(path, "wb") as fh:
        fh.write(INDICATOR_MAGIC)
        fh.write(struct.pack("<II", *im.shape))
        fh.write(np.ascontiguousarray(im, dtype=_F8).tobytes())


def read_indicator_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        _expect_magic(fh, INDICATOR_MAGIC)
        rows, cols = struct.unpack("<II", _read_exact(fh, 8, "indicator header"))
        data = np.frombuffer(_read_exact(fh, 8 * rows * cols, "indicator data"), dtype=_F8)
        return data.reshape(rows, cols).copy()


# ---------------------------------------------------------------------------
# network weights: magic, float64 leaky slope, uint32 tensor count, then per
# tensor (uint32 name length, name, uint32 rank, uint32 dims, float64 data),
# then uint32 echo length and a UTF-8 config echo block


def write_weights_file(path, w: NetworkWeights, config_echo: str = "") -> None:
    arrays = w.arrays()
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<d", w.leaky_slope))
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            blob = name.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype=_F8).tobytes())
        echo = config_echo.encode("utf-8")
        fh.write(struct.pack("<I", len(echo)))
        fh.write(echo)


def read_weights_file(path) -> tuple[NetworkWeights, str]:
    with open(path, "rb") as fh:
        _expect_magic(fh, WEIGHTS_MAGIC)
        (slope,) = struct.unpack("<d", _read_exact(fh, 8, "leaky slope"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(fh, 4, "tensor name"))
            name = _read_exact(fh, nlen, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "tensor rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "tensor dims"))
            n_el = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(_read_exact(fh, 8 * n_el, f"tensor {name}"), dtype=_F8)
            arrays[name] = data.reshape(dims).copy()
        (elen,) = struct.unpack("<I", _read_exact(fh, 4, "config echo"))
        echo = _read_exact(fh, elen, "config echo").decode("utf-8")
    missing = set(WEIGHT_SHAPES) - set(arrays)
    if missing:
        raise FileFormatError(f"weights file is missing tensors: {sorted(missing)}")
    for name, shape in WEIGHT_SHAPES.items():
        if arrays[name].shape != shape:
            raise FileFormatError(f"{name} has shape {arrays[name].shape}, expected {shape}")
    return NetworkWeights(**arrays, leaky_slope=slope), echo


# ---------------------------------------------------------------------------
# datasets: magic, uint32 declared count, uint32 flags, uint32 echo length,
# echo, then per record (uint64 seed, uint32 descriptor length, descriptor,
# 10x45 indicator, 30x50 input, 45 support values)


@dataclass(frozen=True)
class DatasetRecord:
    """One training/test case: phantom, indicator data, and target."""

    seed: int
    phantom: Phantom
    indicator: np.ndarray
    input: np.ndarray
    support: np.ndarray


def _record_bytes(rec: DatasetRecord) -> bytes:
    desc = phantom_to_text(rec.phantom).encode("utf-8")
    parts = [
        struct.pack("<QI", rec.seed, len(desc)),
        desc,
        np.ascontiguousarray(rec.indicator, dtype=_F8).tobytes(),
        np.ascontiguousarray(rec.input, dtype=_F8).tobytes(),
        np.ascontiguousarray(rec.support, dtype=_F8).tobytes(),
    ]
    return b"".join(parts)


def write_dataset_header(path, declared_count: int, config_echo: str) -> None:
    echo = config_echo.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<III", declared_count, 0, len(echo)))
        fh.write(echo)


def append_dataset_records(path, records) -> None:
    with open(path, "ab") as fh:
        for rec in records:
            fh.write(_record_bytes(rec))


def write_dataset(path, records, config_echo: str = "") -> None:
    records = list(records)
    write_dataset_header(path, len(records), config_echo)
    append_dataset_records(path, records)


def _read_record(fh) -> DatasetRecord:
    seed, dlen = struct.unpack("<QI", _read_exact(fh, 12, "record header"))
    desc = _read_exact(fh, dlen, "phantom descriptor").decode("utf-8")
    ind = np.frombuffer(_read_exact(fh, 8 * 10 * 45, "indicator"), dtype=_F8).reshape(10, 45)
    inp = np.frombuffer(_read_exact(fh, 8 * 30 * 50, "input"), dtype=_F8).reshape(30, 50)
    sup = np.frombuffer(_read_exact(fh, 8 * 45, "support"), dtype=_F8)
    return DatasetRecord(seed, phantom_from_text(desc), ind.copy(), inp.copy(), sup.copy())


def read_dataset(path, verify: bool = True) -> tuple[list[DatasetRecord], str, int]:
    """Read all records; returns (records, config echo, declared count).

    With verify the stored input tensor is checked to be exactly the
    padding of the stored indicator matrix.
    """
    records = []
    with open(path, "rb") as fh:
        _expect_magic(fh, DATASET_MAGIC)
        declared, _flags, elen = struct.unpack("<III", _read_exact(fh, 12, "dataset header"))
        echo = _read_exact(fh, elen, "config echo").decode("utf-8")
        while True:
            head = fh.read(12)
            if not head:
                break
            if len(head) != 12:
                raise FileFormatError("truncated record header")
            fh.seek(-12, 1)
            records.append(_read_record(fh))
    if verify:
        for i, rec in enumerate(records):
            if not np.array_equal(rec.input, pad_indicator(rec.indicator)):
                raise FileFormatError(f"record {i}: input tensor is not the padded indicator")
    return records, echo, declared


def count_complete_records(path) -> int:
    """Number of intact records already in a dataset file (resume support)."""
    n = 0
    with open(path, "rb") as fh:
        _expect_magic(fh, DATASET_MAGIC)
        _, _, elen = struct.unpack("<III", _read_exact(fh, 12, "dataset header"))
        _read_exact(fh, elen, "config echo")
        while True:
            head = fh.read(12)
            if len(head) < 12:
                return n
            _, dlen = struct.unpack("<QI", head)
            body = dlen + 8 * (10 * 45 + 30 * 50 + 45)
            data = fh.read(body)
            if len(data) < body:
                return n
            n += 1
