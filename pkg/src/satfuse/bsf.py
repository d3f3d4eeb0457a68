"""Band-Stack Format (BSF) reader/writer.

Layout, in order:

* magic ``BSF1`` (4 bytes)
* unsigned 32-bit little-endian header length N
* N bytes of UTF-8 JSON with keys ``width``, ``height``, ``bands`` (array of
  ``{"name": ..., "wavelength_nm": ...}``, wavelength optional), ``dtype``
  (must be ``"f32"``), ``geotransform``
  (``[origin_x, pixel_w, 0, origin_y, 0, -pixel_h]``) and ``nodata_mask``
* if ``nodata_mask`` is true: ceil(width*height/8) bytes of row-major bitmask,
  1 = valid, most-significant bit first within each byte
* bands*width*height little-endian IEEE-754 float32 values, band-planar,
  row-major

Serialization is deterministic, so writing the same raster twice produces
byte-identical files.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError
from .raster import GeoGrid, Raster

MAGIC = b"BSF1"

__all__ = ["read_bsf", "write_bsf", "MAGIC"]


def write_bsf(r: Raster, path) -> None:
    """Serialize a raster to `path` in Band-Stack Format."""
    if r.n_bands == 0:
        raise ValidationError("cannot serialize a raster with no bands")
    bands = []
    for i, name in enumerate(r.band_names):
        entry = {"name": name}
        if r.wavelengths is not None and np.isfinite(r.wavelengths[i]):
            entry["wavelength_nm"] = float(r.wavelengths[i])
        bands.append(entry)
    write_mask = not bool(r.mask.all())
    g = r.grid
    header = {
        "width": g.width,
        "height": g.height,
        "bands": bands,
        "dtype": "f32",
        "geotransform": [g.origin_x, g.pixel_w, 0.0, g.origin_y, 0.0, -g.pixel_h],
        "nodata_mask": write_mask,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        if write_mask:
            fh.write(np.packbits(r.mask.ravel()).tobytes())
        fh.write(np.ascontiguousarray(r.values, dtype="<f4").tobytes())


def _header_field(header: dict, key: str, offset: int):
    if key not in header:
        raise FormatError(f"header missing key {key!r}", offset=offset)
    return header[key]


def read_bsf(path) -> Raster:
    """Read a Band-Stack Format file back into a :class:`Raster`."""
    with open(path, "rb") as fh:
        data = fh.read()

    if len(data) < 8:
        raise FormatError("file shorter than magic + header length", offset=0)
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    header_len = int(np.frombuffer(data[4:8], dtype="<u4")[0])
    if 8 + header_len > len(data):
        raise FormatError("declared header length exceeds file size", offset=4)
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header is not valid UTF-8 JSON: {exc}", offset=8) from exc
    if not isinstance(header, dict):
        raise FormatError("header is not a JSON object", offset=8)

    width = _header_field(header, "width", 8)
    height = _header_field(header, "height", 8)
    bands = _header_field(header, "bands", 8)
    dtype = _header_field(header, "dtype", 8)
    gt = _header_field(header, "geotransform", 8)
    has_mask = _header_field(header, "nodata_mask", 8)
    if dtype != "f32":
        raise FormatError(f"unsupported dtype {dtype!r}", offset=8)
    if not isinstance(bands, list) or not bands:
        raise FormatError("bands must be a non-empty array", offset=8)
    if not (isinstance(width, int) and isinstance(height, int)) or width < 1 or height < 1:
        raise FormatError("width/height must be positive integers", offset=8)
    if not isinstance(gt, list) or len(gt) != 6:
        raise FormatError("geotransform must have 6 entries", offset=8)
    if gt[2] != 0 or gt[4] != 0:
        raise FormatError("rotated geotransforms are not supported", offset=8)

    pos = 8 + header_len
    n_px = width * height
    mask = None
    if has_mask:
        n_mask = math.ceil(n_px / 8)
        if pos + n_mask > len(data):
            raise CorruptionError(
                f"mask truncated: need {n_mask} bytes at offset {pos}, file has {len(data) - pos}"
            )
        bits = np.unpackbits(np.frombuffer(data[pos : pos + n_mask], dtype=np.uint8))
        mask = bits[:n_px].astype(bool).reshape(height, width)
        pos += n_mask

    nb = len(bands)
    n_payload = nb * n_px * 4
    if len(data) - pos != n_payload:
        raise CorruptionError(
            f"payload length mismatch: expected {n_payload} bytes for "
            f"{nb} band(s) of {width}x{height}, found {len(data) - pos}"
        )
    values = (
        np.frombuffer(data[pos : pos + n_payload], dtype="<f4")
        .reshape(nb, height, width)
        .copy()
    )

    names = []
    wavelengths = np.full(nb, np.nan)
    any_wl = False
    for i, entry in enumerate(bands):
        if not isinstance(entry, dict) or "name" not in entry:
            raise FormatError(f"band entry {i} missing name", offset=8)
        names.append(str(entry["name"]))
        if "wavelength_nm" in entry:
            wavelengths[i] = float(entry["wavelength_nm"])
            any_wl = True

    grid = GeoGrid(
        origin_x=float(gt[0]),
        origin_y=float(gt[3]),
        pixel_w=float(gt[1]),
        pixel_h=float(-gt[5]),
        width=width,
        height=height,
    )
    return Raster(grid, values, names, mask, wavelengths if any_wl else None)
