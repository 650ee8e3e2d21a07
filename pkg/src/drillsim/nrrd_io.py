"""Minimal NRRD reader/writer for 8-bit label volumes.

Supported subset: 3-D, uint8, attached header, raw or gzip encoding.
Anything else raises UnsupportedEncoding (float CT volumes are out of
scope; the simulator drills segmented label volumes).
"""

from __future__ import annotations

import gzip
import re
from pathlib import Path

import numpy as np

_UINT8_TYPES = {"uchar", "unsigned char", "uint8", "uint8_t"}


class UnsupportedEncoding(Exception):
    pass


def read_nrrd(path: str | Path) -> tuple[np.ndarray, tuple[float, float, float] | None]:
    """Returns ([z, y, x] uint8 labels, spacing or None).

    NRRD sizes list the fastest axis first, matching this package's
    x-fastest storage, so sizes (nx, ny, nz) reshape to [nz, ny, nx]."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0 or not raw[:nl].startswith(b"NRRD"):
        raise UnsupportedEncoding("not an NRRD file")
    fields: dict[str, str] = {}
    pos = nl + 1
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise UnsupportedEncoding("header never ends")
        line = raw[pos:nl].decode("ascii", "replace").rstrip("\r")
        pos = nl + 1
        if line == "":
            break
        if line.startswith("#"):
            continue
        if ":" in line:
            key, value = line.split(":", 1)
            fields[key.strip().lower()] = value.strip()

    if fields.get("type", "").lower() not in _UINT8_TYPES:
        raise UnsupportedEncoding(f"only 8-bit label volumes (got type {fields.get('type')!r})")
    if int(fields.get("dimension", "0")) != 3:
        raise UnsupportedEncoding("only 3-D volumes")
    if "data file" in fields or "datafile" in fields:
        raise UnsupportedEncoding("detached data files not supported")
    sizes = [int(s) for s in fields["sizes"].split()]
    encoding = fields.get("encoding", "raw").lower()
    data = raw[pos:]
    if encoding in ("gzip", "gz"):
        data = gzip.decompress(data)
    elif encoding != "raw":
        raise UnsupportedEncoding(f"encoding {encoding!r} (only raw/gzip)")
    n = sizes[0] * sizes[1] * sizes[2]
    if len(data) < n:
        raise UnsupportedEncoding(f"data too short: {len(data)} < {n}")
    arr = np.frombuffer(data[:n], dtype=np.uint8).reshape(sizes[2], sizes[1], sizes[0])

    spacing = None
    if "spacings" in fields:
        spacing = tuple(float(s) for s in fields["spacings"].split()[:3])
    elif "space directions" in fields:
        vecs = re.findall(r"\(([^)]*)\)", fields["space directions"])
        if len(vecs) == 3:
            diag = []
            for i, v in enumerate(vecs):
                comps = [float(c) for c in v.replace(",", " ").split()]
                diag.append(abs(comps[i]))
            spacing = tuple(diag)
    return arr.copy(), spacing


def write_nrrd(path: str | Path, labels: np.ndarray,
               spacing: tuple[float, float, float] | None = None,
               encoding: str = "gzip"):
    """Write a [z, y, x] uint8 grid as an attached-header NRRD."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    nz, ny, nx = labels.shape
    lines = [
        "NRRD0004",
        "type: uint8",
        "dimension: 3",
        f"sizes: {nx} {ny} {nz}",
        f"encoding: {encoding}",
        "endian: little",
    ]
    if spacing is not None:
        lines.append(f"spacings: {spacing[0]} {spacing[1]} {spacing[2]}")
    header = "\n".join(lines) + "\n\n"
    data = labels.tobytes()
    if encoding == "gzip":
        data = gzip.compress(data, mtime=0)
    elif encoding != "raw":
        raise UnsupportedEncoding(f"encoding {encoding!r}")
    Path(path).write_bytes(header.encode("ascii") + data)
