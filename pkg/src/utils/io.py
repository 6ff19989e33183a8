"""
Artifact writers: binary grid dumps, CSV tables and gnuplot scripts.

Binary layout: 16-byte header (magic b"PAMF", uint32 version, uint32 nt,
uint32 nx), then the values as little-endian float64 in row-major order.
"""

import csv
import hashlib
import struct
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError

MAGIC = b"PAMF"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def format_float(value: Any) -> str:
    """17 significant digits so every float round-trips"""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_field_binary(path: Union[str, Path], values: np.ndarray) -> Path:
    """Dump a field; leading axis is time, the rest is flattened into nx columns"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(values, dtype="<f8")
    if arr.ndim == 1:
        arr = arr[None, :]
    arr = arr.reshape(arr.shape[0], -1)
    nt, nx = arr.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, BINARY_VERSION, nt, nx))
        f.write(np.ascontiguousarray(arr).tobytes(order="C"))
    return path


def read_field_binary(path: Union[str, Path]) -> np.ndarray:
    """Read a dump written by write_field_binary; returns shape (nt, nx)"""
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ConfigError(f"{path}: truncated header", module="noise-field")
        magic, version, nt, nx = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}", module="noise-field")
        if version != BINARY_VERSION:
            raise ConfigError(f"{path}: unsupported version {version}", module="noise-field")
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != nt * nx:
        raise ConfigError(f"{path}: expected {nt * nx} values, found {data.size}", module="noise-field")
    return data.reshape(nt, nx).astype(np.float64)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([format_float(v) for v in row])
    return path


def read_csv(path: Union[str, Path]) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]


def write_gnuplot_script(path: Union[str, Path], csv_name: str, x_column: str, y_column: str,
                         header: Sequence[str], title: str, logscale: str = "") -> Path:
    """Plain-text gnuplot script plotting one column of a CSV against another"""
    path = Path(path)
    cols = list(header)
    xi, yi = cols.index(x_column) + 1, cols.index(y_column) + 1
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{x_column}'",
        f"set ylabel '{y_column}'",
    ]
    if logscale:
        lines.append(f"set logscale {logscale}")
    lines += [
        f"set terminal pngcairo size 900,600",
        f"set output '{Path(csv_name).stem}.png'",
        f"plot '{csv_name}' using {xi}:{yi} with linespoints",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def sha256_of(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
