"""File formats: PFM depth maps and fields, PLY point clouds, JSON documents.

Formats are chosen for lossless float payloads and trivially parseable
structure:

- Depth maps: grayscale PFM ("Pf"), little-endian (negative scale marker),
  rows stored bottom-to-top per PFM convention. NaN or non-positive
  samples mean invalid. Incidence fields use the 3-channel variant ("PF").
- Point clouds: PLY with float32 x/y/z vertices, ASCII by default (numbers
  printed with enough digits to round-trip float32 exactly) or binary
  little-endian on request.
- Intrinsics, constraints, scenes, metrics, traces: JSON with fixed field
  names; unknown fields are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from typing import IO, Any

import numpy as np

from .camera import DepthMap, Intrinsics, PointCloud
from .errors import DocumentError
from .incidence import IncidenceField
from .solver import DistanceConstraint
from .synthetic import Box, Plane, SceneSpec, Sphere

# ---------------------------------------------------------------------------
# PFM

def _write_pfm_payload(stream: IO[bytes], data: np.ndarray, magic: bytes) -> None:
    height, width = data.shape[:2]
    stream.write(magic + b"\n")
    stream.write(f"{width} {height}\n".encode("ascii"))
    stream.write(b"-1.0\n")
    stream.write(np.flipud(data).astype("<f4").tobytes())


def _read_pfm_tokens(stream: IO[bytes]) -> tuple[bytes, int, int, float]:
    def token() -> bytes:
        chars = []
        while True:
            ch = stream.read(1)
            if ch == b"":
                raise DocumentError("truncated PFM header")
            if ch.isspace():
                if chars:
                    return b"".join(chars)
                continue
            chars.append(ch)

    magic = token()
    if magic not in (b"Pf", b"PF"):
        raise DocumentError(f"not a PFM file (magic {magic!r})")
    try:
        width = int(token())
        height = int(token())
        scale = float(token())
    except ValueError as exc:
        raise DocumentError(f"malformed PFM header: {exc}") from exc
    if width < 1 or height < 1 or scale == 0.0:
        raise DocumentError("malformed PFM header values")
    return magic, width, height, scale


def _read_pfm_payload(stream: IO[bytes]) -> np.ndarray:
    magic, width, height, scale = _read_pfm_tokens(stream)
    channels = 3 if magic == b"PF" else 1
    count = width * height * channels
    dtype = "<f4" if scale < 0 else ">f4"
    raw = stream.read(4 * count)
    if len(raw) != 4 * count:
        raise DocumentError("truncated PFM payload")
    data = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return np.flipud(data.reshape(shape)).copy()


def write_depth_pfm(path: str, depth: DepthMap) -> None:
    data = np.where(depth.valid, depth.values, np.nan)
    with open(path, "wb") as stream:
        _write_pfm_payload(stream, data, b"Pf")


def read_depth_pfm(path: str) -> DepthMap:
    with open(path, "rb") as stream:
        data = _read_pfm_payload(stream)
    if data.ndim != 2:
        raise DocumentError(f"{path}: expected a grayscale PFM depth map")
    return DepthMap.from_values(data)


def write_field_pfm(path: str, field: IncidenceField) -> None:
    with open(path, "wb") as stream:
        _write_pfm_payload(stream, field.rays, b"PF")


def read_field_pfm(path: str) -> IncidenceField:
    with open(path, "rb") as stream:
        data = _read_pfm_payload(stream)
    if data.ndim != 3:
        raise DocumentError(f"{path}: expected a 3-channel PFM incidence field")
    return IncidenceField(data)


# ---------------------------------------------------------------------------
# PLY

def _float32_text(value: float) -> str:
    return np.format_float_positional(np.float32(value), unique=True, trim="0")


def write_ply(path: str, cloud: PointCloud, binary: bool = False) -> None:
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    )
    with open(path, "wb") as stream:
        stream.write(header.encode("ascii"))
        if binary:
            stream.write(cloud.points.astype("<f4").tobytes())
        else:
            for x, y, z in cloud.points:
                line = f"{_float32_text(x)} {_float32_text(y)} {_float32_text(z)}\n"
                stream.write(line.encode("ascii"))


def read_ply(path: str) -> PointCloud:
    with open(path, "rb") as stream:
        first = stream.readline().strip()
        if first != b"ply":
            raise DocumentError(f"{path}: not a PLY file")
        fmt = None
        count = None
        properties: list[bytes] = []
        while True:
            line = stream.readline()
            if line == b"":
                raise DocumentError(f"{path}: truncated PLY header")
            line = line.strip()
            if line == b"end_header":
                break
            parts = line.split()
            if parts[0] == b"format":
                fmt = parts[1]
            elif parts[0] == b"element":
                if parts[1] != b"vertex":
                    raise DocumentError(f"{path}: only vertex elements are supported")
                count = int(parts[2])
            elif parts[0] == b"property":
                if parts[1] != b"float":
                    raise DocumentError(f"{path}: only float properties are supported")
                properties.append(parts[2])
        if fmt not in (b"ascii", b"binary_little_endian"):
            raise DocumentError(f"{path}: unsupported PLY format {fmt!r}")
        if count is None or properties != [b"x", b"y", b"z"]:
            raise DocumentError(f"{path}: expected exactly float x, y, z vertex properties")
        if fmt == b"binary_little_endian":
            raw = stream.read(12 * count)
            if len(raw) != 12 * count:
                raise DocumentError(f"{path}: truncated PLY payload")
            points = np.frombuffer(raw, dtype="<f4").reshape(count, 3).astype(np.float64)
        else:
            points = np.empty((count, 3))
            for i in range(count):
                line = stream.readline()
                if line == b"":
                    raise DocumentError(f"{path}: truncated PLY payload at vertex {i}")
                try:
                    points[i] = [float(tok) for tok in line.split()]
                except ValueError as exc:
                    raise DocumentError(f"{path}: bad vertex line {i}: {exc}") from exc
            # properties are declared float32; snap so ascii and binary agree
            points = points.astype(np.float32).astype(np.float64)
    return PointCloud(points)


# ---------------------------------------------------------------------------
# JSON documents

def _load_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as stream:
            return json.load(stream)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON: {exc}") from exc


def _check_fields(obj: dict, required: tuple, optional: tuple, where: str) -> None:
    if not isinstance(obj, dict):
        raise DocumentError(f"{where}: expected an object, got {type(obj).__name__}")
    missing = [name for name in required if name not in obj]
    if missing:
        raise DocumentError(f"{where}: missing fields {missing}")
    unknown = [name for name in obj if name not in required and name not in optional]
    if unknown:
        raise DocumentError(f"{where}: unknown fields {unknown}")


def _number(obj: dict, name: str, where: str) -> float:
    value = obj[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DocumentError(f"{where}: field {name!r} must be a number, got {value!r}")
    return float(value)


def write_intrinsics(path: str, k: Intrinsics) -> None:
    doc = {
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
        "width": k.width, "height": k.height,
    }
    with open(path, "w", encoding="utf-8") as stream:
        json.dump(doc, stream, indent=2)
        stream.write("\n")


def read_intrinsics(path: str) -> Intrinsics:
    obj = _load_json(path)
    _check_fields(obj, ("fx", "fy", "cx", "cy", "width", "height"), (), path)
    width = obj["width"]
    height = obj["height"]
    for name, value in (("width", width), ("height", height)):
        if isinstance(value, bool) or not isinstance(value, int):
            raise DocumentError(f"{path}: field {name!r} must be an integer, got {value!r}")
    try:
        return Intrinsics(
            fx=_number(obj, "fx", path),
            fy=_number(obj, "fy", path),
            cx=_number(obj, "cx", path),
            cy=_number(obj, "cy", path),
            width=width,
            height=height,
        )
    except ValueError as exc:
        raise DocumentError(f"{path}: {exc}") from exc


def write_constraints(path: str, constraints: list[DistanceConstraint]) -> None:
    records = [
        {"u1": c.u1, "v1": c.v1, "u2": c.u2, "v2": c.v2, "d1": c.d1, "d2": c.d2, "L": c.distance}
        for c in constraints
    ]
    with open(path, "w", encoding="utf-8") as stream:
        json.dump(records, stream, indent=2)
        stream.write("\n")


def _depth_at_pixel(depth: DepthMap, u: float, v: float, where: str) -> float:
    iu, iv = int(u), int(v)
    if iu != u or iv != v:
        raise DocumentError(
            f"{where}: pixel ({u}, {v}) must have integer coordinates to read its depth"
        )
    if not (0 <= iu < depth.width and 0 <= iv < depth.height):
        raise DocumentError(f"{where}: pixel ({iu}, {iv}) is outside the depth map")
    if not depth.valid[iv, iu]:
        raise DocumentError(f"{where}: pixel ({iu}, {iv}) has no valid depth")
    return float(depth.values[iv, iu])


def read_constraints(path: str, depth: DepthMap | None = None) -> list[DistanceConstraint]:
    """Parse constraint records; d1/d2 missing means read from the depth map."""
    records = _load_json(path)
    if not isinstance(records, list):
        raise DocumentError(f"{path}: expected a JSON array of constraint records")
    out = []
    for i, rec in enumerate(records):
        where = f"{path}: record {i}"
        _check_fields(rec, ("u1", "v1", "u2", "v2", "L"), ("d1", "d2"), where)
        u1 = _number(rec, "u1", where)
        v1 = _number(rec, "v1", where)
        u2 = _number(rec, "u2", where)
        v2 = _number(rec, "v2", where)
        if "d1" in rec:
            d1 = _number(rec, "d1", where)
        elif depth is not None:
            d1 = _depth_at_pixel(depth, u1, v1, where)
        else:
            raise DocumentError(f"{where}: d1 missing and no depth map supplied")
        if "d2" in rec:
            d2 = _number(rec, "d2", where)
        elif depth is not None:
            d2 = _depth_at_pixel(depth, u2, v2, where)
        else:
            raise DocumentError(f"{where}: d2 missing and no depth map supplied")
        try:
            out.append(
                DistanceConstraint(
                    u1=u1, v1=v1, u2=u2, v2=v2, d1=d1, d2=d2,
                    distance=_number(rec, "L", where),
                )
            )
        except ValueError as exc:
            raise DocumentError(f"{where}: {exc}") from exc
    return out


_PRIMITIVE_FIELDS = {
    "plane": ("point", "normal"),
    "sphere": ("center", "radius"),
    "box": ("min", "max"),
}


def _vector3(obj: dict, name: str, where: str) -> tuple[float, float, float]:
    value = obj[name]
    if (
        not isinstance(value, list)
        or len(value) != 3
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise DocumentError(f"{where}: field {name!r} must be a list of 3 numbers")
    return (float(value[0]), float(value[1]), float(value[2]))


def read_scene(path: str) -> SceneSpec:
    obj = _load_json(path)
    _check_fields(obj, ("primitives",), (), path)
    if not isinstance(obj["primitives"], list) or not obj["primitives"]:
        raise DocumentError(f"{path}: 'primitives' must be a non-empty array")
    prims: list = []
    for i, rec in enumerate(obj["primitives"]):
        where = f"{path}: primitive {i}"
        if not isinstance(rec, dict) or "type" not in rec:
            raise DocumentError(f"{where}: each primitive needs a 'type' field")
        kind = rec["type"]
        if kind not in _PRIMITIVE_FIELDS:
            raise DocumentError(f"{where}: unknown primitive type {kind!r}")
        _check_fields(rec, ("type",) + _PRIMITIVE_FIELDS[kind], (), where)
        try:
            if kind == "plane":
                prims.append(Plane(point=_vector3(rec, "point", where),
                                   normal=_vector3(rec, "normal", where)))
            elif kind == "sphere":
                prims.append(Sphere(center=_vector3(rec, "center", where),
                                    radius=_number(rec, "radius", where)))
            else:
                prims.append(Box(min_corner=_vector3(rec, "min", where),
                                 max_corner=_vector3(rec, "max", where)))
        except ValueError as exc:
            raise DocumentError(f"{where}: {exc}") from exc
    return SceneSpec(primitives=tuple(prims))


def write_trace(path: str, trace: list[float]) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        json.dump(list(trace), stream, indent=2)
        stream.write("\n")


def read_trace(path: str) -> list[float]:
    obj = _load_json(path)
    if not isinstance(obj, list) or any(
        isinstance(v, bool) or not isinstance(v, (int, float)) for v in obj
    ):
        raise DocumentError(f"{path}: expected a JSON array of numbers")
    return [float(v) for v in obj]


def write_json_document(path: str | None, doc: dict) -> str:
    """Serialize a report document; also returns the text (for stdout)."""
    text = json.dumps(doc, indent=2) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as stream:
            stream.write(text)
    return text
