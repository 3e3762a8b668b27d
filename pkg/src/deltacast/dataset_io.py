"""JSON-Lines and binary (``TPFN``) dataset files.

Binary layout (all integers little-endian)::

    magic  b"TPFN"
    u16    version          1 -> values stored as float32, 2 -> float64
    u64    record count
    records:
        u16 id length, UTF-8 id bytes
        u8  unit code, u16 multiple
        i64 start (epoch seconds)
        u32 length
        values (float32 or float64, little-endian)
        mask, packed bits (LSB first), padded to a byte
        u32 provenance length, UTF-8 provenance bytes   (version >= 1)
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .timeseries import Frequency, TimeSeries, Unit

MAGIC = b"TPFN"
_HEADER = struct.Struct("<4sHQ")
_VALUE_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class DatasetFormatError(ValueError):
    pass


def _detect_format(path: Path) -> str:
    if path.suffix in (".bin", ".tpfn"):
        return "bin"
    return "jsonl"


def write_dataset(series: Iterable[TimeSeries], path, format: str | None = None, version: int = 1) -> None:
    path = Path(path)
    format = format or _detect_format(path)
    if format == "jsonl":
        _write_jsonl(series, path)
    elif format == "bin":
        _write_bin(series, path, version)
    else:
        raise ValueError(f"unknown dataset format {format!r}")


def read_dataset(path, format: str | None = None) -> list[TimeSeries]:
    path = Path(path)
    if format is None:
        with open(path, "rb") as fh:
            format = "bin" if fh.read(4) == MAGIC else "jsonl"
    if format == "bin":
        return _read_bin(path)
    return _read_jsonl(path)


# ---------------------------------------------------------------------------


def series_to_record(s: TimeSeries) -> dict:
    values = [float(v) if m else None for v, m in zip(s.values.tolist(), s.mask.tolist())]
    return {
        "id": s.id,
        "freq": str(s.freq),
        "start": str(np.datetime_as_string(s.start, unit="s")),
        "values": values,
        "provenance": s.provenance,
    }


def record_to_series(rec: dict) -> TimeSeries:
    missing = {"id", "freq", "start", "values"} - rec.keys()
    if missing:
        raise DatasetFormatError(f"missing keys {sorted(missing)}")
    raw = rec["values"]
    if not isinstance(raw, list):
        raise DatasetFormatError("'values' must be a list")
    mask = np.array([v is not None for v in raw], dtype=bool)
    vals = np.array([0.0 if v is None else v for v in raw], dtype=np.float64)
    return TimeSeries(
        vals,
        mask,
        start=np.datetime64(rec["start"], "s"),
        freq=Frequency.parse(rec["freq"]),
        id=str(rec["id"]),
        provenance=str(rec.get("provenance", "")),
    )


def _write_jsonl(series, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in series:
            fh.write(json.dumps(series_to_record(s), separators=(",", ":")))
            fh.write("\n")


def _read_jsonl(path: Path) -> list[TimeSeries]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise DatasetFormatError("record is not an object")
                out.append(record_to_series(rec))
            except (ValueError, TypeError) as exc:
                raise DatasetFormatError(f"{path}:{lineno}: malformed record: {exc}") from exc
    return out


# ---------------------------------------------------------------------------


def _write_bin(series, path: Path, version: int) -> None:
    if version not in _VALUE_DTYPE:
        raise ValueError(f"unsupported binary version {version}")
    dtype = _VALUE_DTYPE[version]
    series = list(series)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, len(series)))
        for s in series:
            ident = s.id.encode("utf-8")
            prov = s.provenance.encode("utf-8")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<BHqI", int(s.freq.unit), s.freq.multiple,
                                 int(s.start.astype(np.int64)), len(s)))
            fh.write(s.values.astype(dtype).tobytes())
            fh.write(np.packbits(s.mask, bitorder="little").tobytes())
            fh.write(struct.pack("<I", len(prov)))
            fh.write(prov)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise EOFError
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        st = struct.Struct(fmt)
        return st.unpack(self.take(st.size))


def _read_bin(path: Path) -> list[TimeSeries]:
    buf = Path(path).read_bytes()
    r = _Reader(buf)
    try:
        magic, version, count = r.unpack(_HEADER.format)
    except EOFError:
        raise DatasetFormatError(f"{path}: truncated header") from None
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version not in _VALUE_DTYPE:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    dtype = _VALUE_DTYPE[version]
    out = []
    for index in range(count):
        offset = r.pos
        try:
            (n_id,) = r.unpack("<H")
            ident = r.take(n_id).decode("utf-8")
            unit, mult, start, length = r.unpack("<BHqI")
            values = np.frombuffer(r.take(length * dtype.itemsize), dtype=dtype).astype(np.float64)
            packed = np.frombuffer(r.take(math.ceil(length / 8)), dtype=np.uint8)
            mask = np.unpackbits(packed, bitorder="little")[:length].astype(bool)
            (n_prov,) = r.unpack("<I")
            prov = r.take(n_prov).decode("utf-8")
        except EOFError:
            raise DatasetFormatError(
                f"{path}: truncated record {index} at byte offset {offset}") from None
        try:
            out.append(TimeSeries(values, mask, start=np.datetime64(start, "s"),
                                  freq=Frequency(Unit(unit), mult), id=ident, provenance=prov))
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: invalid record {index} at byte offset {offset}: {exc}") from exc
    return out
