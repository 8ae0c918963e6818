"""Readers/writers for the on-disk payload and feature formats.

All binary formats are little-endian with a 4-byte ASCII magic:

  LPC1  point cloud: u32 count, then count * 3 * f32 (x, y, z meters)
  RDC1  radar cube: u32 dims (4, 256, 250), then interleaved f32 re/im, C order
  BEV1  BEV tensor: u32 C, H, W, then C*H*W f32, C order
  RFT1  radar features: u32 dims (8, 256, 64), then f32 payload, C order

GPS payloads are a single CSV line "lat,lon" in f64 degrees; camera frames
are binary PPM (P6, 8-bit RGB).
"""

import struct

import numpy as np

from .errors import FormatError

RADAR_CUBE_SHAPE = (4, 256, 250)
RADAR_FEATURE_SHAPE = (8, 256, 64)


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def _check_magic(f, magic: bytes) -> None:
    got = f.read(4)
    if got != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {got!r}")


def write_lidar(path, points) -> None:
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    with open(path, "wb") as f:
        f.write(b"LPC1")
        f.write(struct.pack("<I", len(points)))
        f.write(points.astype("<f4").tobytes())


def read_lidar(path) -> np.ndarray:
    with open(path, "rb") as f:
        _check_magic(f, b"LPC1")
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        data = np.frombuffer(_read_exact(f, count * 12), dtype="<f4")
    return data.reshape(count, 3).astype(np.float64)


def write_radar_cube(path, cube) -> None:
    cube = np.asarray(cube)
    if cube.shape != RADAR_CUBE_SHAPE:
        raise FormatError(f"radar cube must be {RADAR_CUBE_SHAPE}, got {cube.shape}")
    inter = np.empty(cube.shape + (2,), dtype="<f4")
    inter[..., 0] = cube.real
    inter[..., 1] = cube.imag
    with open(path, "wb") as f:
        f.write(b"RDC1")
        f.write(struct.pack("<III", *RADAR_CUBE_SHAPE))
        f.write(inter.tobytes())


def read_radar_cube(path) -> np.ndarray:
    with open(path, "rb") as f:
        _check_magic(f, b"RDC1")
        dims = struct.unpack("<III", _read_exact(f, 12))
        if dims != RADAR_CUBE_SHAPE:
            raise FormatError(f"radar cube dims {dims} != {RADAR_CUBE_SHAPE}")
        n = dims[0] * dims[1] * dims[2]
        data = np.frombuffer(_read_exact(f, n * 8), dtype="<f4").reshape(dims + (2,))
    out = data[..., 0].astype(np.float64) + 1j * data[..., 1].astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError("radar cube contains non-finite samples")
    return out


def write_gps(path, lat: float, lon: float) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"{lat!r},{lon!r}\n")


def read_gps(path):
    with open(path) as f:
        line = f.readline().strip()
    parts = line.split(",")
    if len(parts) != 2:
        raise FormatError(f"gps file must be one 'lat,lon' line, got {line!r}")
    return float(parts[0]), float(parts[1])


def write_ppm(path, img) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise FormatError("PPM writer expects a uint8 (H, W, 3) array")
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise FormatError("not a binary PPM (P6) file")
    # header: P6, width, height, maxval, then a single whitespace byte
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # the single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"only 8-bit PPM supported, maxval={maxval}")
    raw = data[pos : pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise FormatError("truncated PPM payload")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)


def _write_tensor(path, magic: bytes, arr, expected_shape=None) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    if expected_shape is not None and arr.shape != expected_shape:
        raise FormatError(f"expected shape {expected_shape}, got {arr.shape}")
    if arr.ndim != 3:
        raise FormatError(f"expected a rank-3 tensor, got rank {arr.ndim}")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<III", *arr.shape))
        f.write(arr.astype("<f4").tobytes())


def _read_tensor(path, magic: bytes, expected_shape=None) -> np.ndarray:
    with open(path, "rb") as f:
        _check_magic(f, magic)
        dims = struct.unpack("<III", _read_exact(f, 12))
        if expected_shape is not None and dims != expected_shape:
            raise FormatError(f"dims {dims} != expected {expected_shape}")
        n = dims[0] * dims[1] * dims[2]
        data = np.frombuffer(_read_exact(f, n * 4), dtype="<f4")
    return data.reshape(dims).astype(np.float64)


def write_bev(path, tensor) -> None:
    _write_tensor(path, b"BEV1", tensor)


def read_bev(path) -> np.ndarray:
    return _read_tensor(path, b"BEV1")


def write_radar_features(path, tensor) -> None:
    _write_tensor(path, b"RFT1", tensor, expected_shape=RADAR_FEATURE_SHAPE)


def read_radar_features(path) -> np.ndarray:
    return _read_tensor(path, b"RFT1", expected_shape=RADAR_FEATURE_SHAPE)
