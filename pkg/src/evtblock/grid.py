"""Gridded observation fields: loading, writing, synthesis and slicing.

A :class:`GriddedDomain` is a regular 1-, 2- or 3-dimensional lattice of
finite scalar observations. All blocking happens in index space; the optional
physical ``resolution`` is carried along for bookkeeping only.

Two on-disk formats are supported:

* text: a header line ``shape=L1xL2[xL3]`` followed by whitespace separated
  decimal values in row-major order;
* binary: a fixed 16-byte header (3-byte magic ``b"EVG"``, one byte ``n``,
  three little-endian uint32 lengths with unused axes set to 0) followed by
  little-endian float64 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "GridError",
    "GriddedDomain",
    "RegionSelector",
    "load_grid",
    "write_grid",
    "generate_synthetic",
    "select_region",
    "negate_values",
    "global_max",
]

BINARY_MAGIC = b"EVG"
HEADER_SIZE = 16
MAX_DIMS = 3


class GridError(ValueError):
    """Raised for malformed grid files or invalid grid operations."""


@dataclass(frozen=True, eq=False)
class GriddedDomain:
    """Immutable n-dimensional lattice of scalar observations.

    ``values`` is stored as a read-only float64 array with shape ``shape``.
    """

    values: np.ndarray
    resolution: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim < 1 or arr.ndim > MAX_DIMS:
            raise GridError(f"grid must have 1 to {MAX_DIMS} dimensions, got {arr.ndim}")
        if arr.size == 0:
            raise GridError("grid must contain at least one value")
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise GridError(f"non-finite value {arr[idx]!r} at index {idx}")
        if self.resolution is not None and len(self.resolution) != arr.ndim:
            raise GridError("resolution must have one entry per dimension")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(int(s) for s in self.values.shape)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    def __eq__(self, other):
        if not isinstance(other, GriddedDomain):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class RegionSelector:
    """Contiguous sub-lattice: ``offsets[j] : offsets[j] + extent[j]`` per axis."""

    offsets: Tuple[int, ...]
    extent: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        object.__setattr__(self, "extent", tuple(int(e) for e in self.extent))
        if len(self.offsets) != len(self.extent):
            raise GridError("offsets and extent must have the same length")
        if any(o < 0 for o in self.offsets):
            raise GridError(f"offsets must be non-negative, got {self.offsets}")
        if any(e < 1 for e in self.extent):
            raise GridError(f"extent must be positive, got {self.extent}")

    def check(self, shape: Sequence[int]) -> None:
        if len(shape) != len(self.offsets):
            raise GridError(
                f"selector has {len(self.offsets)} dimensions, domain has {len(shape)}"
            )
        for j, (o, e, L) in enumerate(zip(self.offsets, self.extent, shape)):
            if o + e > L:
                raise GridError(
                    f"selector out of bounds on axis {j}: {o} + {e} > {L}"
                )


def _parse_shape(text: str) -> Tuple[int, ...]:
    try:
        dims = tuple(int(tok) for tok in text.lower().split("x"))
    except ValueError:
        raise GridError(f"cannot parse shape {text!r}") from None
    if not 1 <= len(dims) <= MAX_DIMS or any(d < 1 for d in dims):
        raise GridError(f"invalid shape {text!r}")
    return dims


def _load_text(path: Path) -> GriddedDomain:
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if not header.startswith("shape="):
            raise GridError(f"{path}:1: expected 'shape=...' header, got {header!r}")
        shape = _parse_shape(header[len("shape="):])
        values = []
        for lineno, line in enumerate(fh, start=2):
            for tok in line.split():
                try:
                    v = float(tok)
                except ValueError:
                    raise GridError(f"{path}:{lineno}: cannot parse value {tok!r}") from None
                if not np.isfinite(v):
                    raise GridError(f"{path}:{lineno}: non-finite value {tok!r}")
                values.append(v)
    expected = int(np.prod(shape))
    if len(values) != expected:
        raise GridError(
            f"{path}: header declares {expected} values, payload has {len(values)}"
        )
    return GriddedDomain(np.asarray(values, dtype=np.float64).reshape(shape))


def _binary_header(shape: Sequence[int]) -> bytes:
    dims = list(shape) + [0] * (MAX_DIMS - len(shape))
    return BINARY_MAGIC + struct.pack("<B3I", len(shape), *dims)


def _load_binary(path: Path) -> GriddedDomain:
    raw = path.read_bytes()
    if len(raw) < HEADER_SIZE:
        raise GridError(f"{path}: truncated header")
    if raw[:3] != BINARY_MAGIC:
        raise GridError(f"{path}: bad magic {raw[:3]!r}")
    n, *dims = struct.unpack_from("<B3I", raw, 3)
    if not 1 <= n <= MAX_DIMS:
        raise GridError(f"{path}: invalid dimension count {n}")
    shape = tuple(dims[:n])
    if any(d < 1 for d in shape):
        raise GridError(f"{path}: invalid shape {shape}")
    payload = raw[HEADER_SIZE:]
    expected = int(np.prod(shape))
    if len(payload) != 8 * expected:
        raise GridError(
            f"{path}: header declares {expected} values, payload has {len(payload) / 8:g}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    return GriddedDomain(values)


def _infer_format(path: Path) -> str:
    return "binary" if path.suffix.lower() in (".bin", ".evtg") else "text"


def load_grid(path, format: Optional[str] = None) -> GriddedDomain:
    """Load a grid file.

    ``format`` is ``"text"`` or ``"binary"``; when omitted it is inferred from
    the extension (``.bin``/``.evtg`` are binary, anything else is text).
    """
    path = Path(path)
    fmt = format or _infer_format(path)
    if not path.exists():
        raise FileNotFoundError(f"grid file not found: {path}")
    if fmt == "text":
        return _load_text(path)
    if fmt == "binary":
        return _load_binary(path)
    raise GridError(f"unknown grid format {fmt!r}")


def write_grid(domain: GriddedDomain, path, format: Optional[str] = None) -> Path:
    """Write ``domain`` so that :func:`load_grid` reproduces it bit-exactly."""
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt == "text":
        with open(path, "w") as fh:
            fh.write("shape=" + "x".join(str(s) for s in domain.shape) + "\n")
            flat = domain.values.ravel()
            # repr() of a Python float round-trips exactly
            for start in range(0, flat.size, 8):
                fh.write(" ".join(repr(float(v)) for v in flat[start:start + 8]) + "\n")
    elif fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_binary_header(domain.shape))
            fh.write(np.ascontiguousarray(domain.values, dtype="<f8").tobytes())
    else:
        raise GridError(f"unknown grid format {fmt!r}")
    return path


def generate_synthetic(shape, mean: float = 0.0, stddev: float = 1.0,
                       seed: int = 0) -> GriddedDomain:
    """I.i.d. normal field drawn with numpy's PCG64 generator.

    Normal variates come from ``Generator.standard_normal`` (ziggurat), scaled
    and shifted, so equal ``(shape, mean, stddev, seed)`` give equal output.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise GridError(f"invalid shape {shape}")
    if not stddev > 0:
        raise GridError(f"stddev must be positive, got {stddev}")
    if seed < 0:
        raise GridError("seed must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    values = rng.standard_normal(shape)
    values *= stddev
    values += mean
    return GriddedDomain(values)


def select_region(domain: GriddedDomain, sel: RegionSelector) -> GriddedDomain:
    sel.check(domain.shape)
    index = tuple(slice(o, o + e) for o, e in zip(sel.offsets, sel.extent))
    return GriddedDomain(domain.values[index], resolution=domain.resolution)


def negate_values(domain: GriddedDomain) -> GriddedDomain:
    """Flip signs so valleys (minima) become maxima."""
    return GriddedDomain(-domain.values, resolution=domain.resolution)


def global_max(domain: GriddedDomain) -> float:
    if domain.size == 0:
        raise GridError("empty domain")
    return float(domain.values.max())
