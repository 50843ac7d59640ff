"""Readers and writers for PLY, OBJ and XYZ point files.

Only vertex positions and per-vertex normals are kept. PLY may be ASCII or
binary little-endian; big-endian files are rejected.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

import numpy as np

from .cloud import PointCloud
from .errors import EmptyCloud, FormatError

FORMATS = ("ply", "obj", "xyz", "auto")

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_XYZ = ("x", "y", "z")
_NXYZ = ("nx", "ny", "nz")


def _sniff(path: Path) -> str:
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("ply", "obj", "xyz"):
        return suffix
    if suffix in ("txt", "pts", "asc"):
        return "xyz"
    with open(path, "rb") as fh:
        head = fh.read(3)
    if head == b"ply":
        return "ply"
    raise FormatError(f"cannot infer point file format of {path}")


def _normalise_normals(normals: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if normals is None:
        return None
    if not np.all(np.isfinite(normals)):
        raise FormatError("non-finite normal component")
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(lengths == 0):
        raise FormatError("zero-length normal")
    return normals / lengths


def _make_cloud(points, normals, name) -> PointCloud:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        raise EmptyCloud(f"{name}: no vertices")
    if not np.all(np.isfinite(points)):
        raise FormatError(f"{name}: non-finite coordinate")
    if normals is not None:
        normals = _normalise_normals(np.asarray(normals, dtype=np.float64).reshape(-1, 3))
    return PointCloud(points, normals, name)


def load_cloud(path, format: str = "auto") -> PointCloud:
    """Load a point cloud; normals are attached only when the file has them."""
    path = Path(path)
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}")
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    fmt = _sniff(path) if format == "auto" else format
    reader = {"ply": _read_ply, "obj": _read_obj, "xyz": _read_xyz}[fmt]
    points, normals = reader(path)
    return _make_cloud(points, normals, path.stem)


# --------------------------------------------------------------------- PLY

def _parse_ply_header(fh):
    first = fh.readline()
    if first.strip() != b"ply":
        raise FormatError("missing 'ply' magic")
    fmt = None
    elements = []  # (name, count, [(prop, dtype or ('list', cnt_t, item_t))])
    while True:
        raw = fh.readline()
        if not raw:
            raise FormatError("PLY header not terminated by end_header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith(("comment", "obj_info")):
            continue
        tok = line.split()
        if tok[0] == "format":
            if len(tok) < 3:
                raise FormatError(f"bad format line: {line}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise FormatError(f"bad element line: {line}")
            try:
                count = int(tok[2])
            except ValueError as exc:
                raise FormatError(f"bad element count: {line}") from exc
            elements.append((tok[1], count, []))
        elif tok[0] == "property":
            if not elements:
                raise FormatError("property before any element")
            if tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise FormatError(f"bad list property: {line}")
                elements[-1][2].append((tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                    raise FormatError(f"bad property: {line}")
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
        elif tok[0] == "end_header":
            break
        else:
            raise FormatError(f"unexpected header line: {line}")
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}")
    if fmt == "binary_big_endian":
        raise FormatError("binary_big_endian PLY is not supported")
    return fmt, elements


def _vertex_columns(props):
    names = [p[0] for p in props]
    for axis in _XYZ:
        if axis not in names:
            raise FormatError(f"vertex element lacks property {axis!r}")
    for name, kind in props:
        if isinstance(kind, tuple):
            raise FormatError("list properties on vertices are not supported")
    has_normals = all(n in names for n in _NXYZ)
    return names, has_normals


def _read_ply(path: Path):
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        vertex = [e for e in elements if e[0] == "vertex"]
        if not vertex:
            raise FormatError("PLY has no vertex element")
        if fmt == "ascii":
            return _read_ply_ascii(fh, elements)
        return _read_ply_binary(fh, elements)


def _read_ply_ascii(fh, elements):
    for name, count, props in elements:
        if name != "vertex":
            for _ in range(count):
                if not fh.readline():
                    raise FormatError(f"truncated element {name!r}")
            continue
        names, has_normals = _vertex_columns(props)
        rows = []
        for _ in range(count):
            raw = fh.readline()
            if not raw:
                raise FormatError("truncated vertex list")
            tok = raw.split()
            if len(tok) != len(names):
                raise FormatError(f"vertex record has {len(tok)} fields, expected {len(names)}")
            rows.append(tok)
        try:
            data = np.array(rows, dtype=np.float64).reshape(count, len(names))
        except ValueError as exc:
            raise FormatError(f"bad numeric field: {exc}") from exc
        col = {n: i for i, n in enumerate(names)}
        pts = data[:, [col[a] for a in _XYZ]]
        nrm = data[:, [col[a] for a in _NXYZ]] if has_normals else None
        return pts, nrm
    raise FormatError("PLY has no vertex element")


def _read_ply_binary(fh, elements):
    for name, count, props in elements:
        if name != "vertex":
            if any(isinstance(kind, tuple) for _, kind in props):
                raise FormatError(f"cannot skip list-valued element {name!r} before vertices")
            dtype = np.dtype([(p, "<" + kind) for p, kind in props])
            fh.seek(dtype.itemsize * count, os.SEEK_CUR)
            continue
        names, has_normals = _vertex_columns(props)
        dtype = np.dtype([(p, "<" + kind) for p, kind in props])
        buf = fh.read(dtype.itemsize * count)
        if len(buf) != dtype.itemsize * count:
            raise FormatError("truncated binary vertex data")
        rec = np.frombuffer(buf, dtype=dtype, count=count)
        pts = np.stack([rec[a].astype(np.float64) for a in _XYZ], axis=1)
        nrm = np.stack([rec[a].astype(np.float64) for a in _NXYZ], axis=1) if has_normals else None
        return pts, nrm
    raise FormatError("PLY has no vertex element")


# --------------------------------------------------------------- OBJ / XYZ

def _floats(tokens, lineno, path):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise FormatError(f"{path}:{lineno}: bad number") from exc


def _read_obj(path: Path):
    verts, norms = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                if len(tok) < 4:
                    raise FormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                verts.append(_floats(tok[1:4], lineno, path))
            elif tok[0] == "vn":
                if len(tok) < 4:
                    raise FormatError(f"{path}:{lineno}: normal needs 3 components")
                norms.append(_floats(tok[1:4], lineno, path))
    normals = np.array(norms) if norms and len(norms) == len(verts) else None
    return np.array(verts, dtype=np.float64).reshape(-1, 3), normals


def _read_xyz(path: Path):
    rows = []
    width = None
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            tok = text.replace(",", " ").split()
            if len(tok) not in (3, 6):
                raise FormatError(f"{path}:{lineno}: expected 3 or 6 columns, got {len(tok)}")
            if width is None:
                width = len(tok)
            elif len(tok) != width:
                raise FormatError(f"{path}:{lineno}: inconsistent column count")
            rows.append(_floats(tok, lineno, path))
    data = np.array(rows, dtype=np.float64).reshape(-1, width or 3)
    normals = data[:, 3:6] if width == 6 else None
    return data[:, :3], normals


# ------------------------------------------------------------------ writers

def save_cloud(cloud: PointCloud, path, format: str = "auto", binary: bool = False,
               colors: Optional[np.ndarray] = None) -> None:
    """Write ``cloud`` to ``path``.

    ``colors`` (n x 3 uint8) is only honoured by PLY and is used for the
    residual maps written by the benchmark harness.
    """
    path = Path(path)
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}")
    fmt = format
    if fmt == "auto":
        fmt = path.suffix.lower().lstrip(".")
        if fmt not in ("ply", "obj", "xyz"):
            fmt = "xyz"
    if fmt == "ply":
        _write_ply(cloud, path, binary, colors)
    elif fmt == "obj":
        _write_obj(cloud, path)
    else:
        _write_xyz(cloud, path)


def _write_ply(cloud, path, binary, colors):
    n = len(cloud)
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if cloud.has_normals:
        fields += [("nx", "<f8"), ("ny", "<f8"), ("nz", "<f8")]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(n, 3)
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"comment {cloud.name}" if cloud.name else None, f"element vertex {n}"]
    type_name = {"<f8": "double", "u1": "uchar"}
    header += [f"property {type_name[t]} {f}" for f, t in fields]
    header.append("end_header")
    text = "\n".join(h for h in header if h is not None) + "\n"
    if binary:
        rec = np.empty(n, dtype=np.dtype(fields))
        for i, a in enumerate(_XYZ):
            rec[a] = cloud.points[:, i]
        if cloud.has_normals:
            for i, a in enumerate(_NXYZ):
                rec[a] = cloud.normals[:, i]
        if colors is not None:
            for i, a in enumerate(("red", "green", "blue")):
                rec[a] = colors[:, i]
        with open(path, "wb") as fh:
            fh.write(text.encode("ascii"))
            fh.write(rec.tobytes())
        return
    cols = [cloud.points]
    if cloud.has_normals:
        cols.append(cloud.normals)
    body = np.hstack(cols)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
        for i, row in enumerate(body):
            line = " ".join(repr(float(v)) for v in row)
            if colors is not None:
                line += " " + " ".join(str(int(c)) for c in colors[i])
            fh.write(line + "\n")


def _write_obj(cloud, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for p in cloud.points:
            fh.write("v " + " ".join(repr(float(v)) for v in p) + "\n")
        if cloud.has_normals:
            for p in cloud.normals:
                fh.write("vn " + " ".join(repr(float(v)) for v in p) + "\n")


def _write_xyz(cloud, path):
    body = cloud.points if not cloud.has_normals else np.hstack([cloud.points, cloud.normals])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in body:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
