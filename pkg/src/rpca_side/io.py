"""Matrix files (BMAT binary, CSV) and grayscale PGM image stacks.

BMAT layout: the 8-byte magic ``RPCAMAT1``, rows and cols as little-endian
u64, then ``rows * cols`` little-endian IEEE-754 doubles in row-major
order.

Images are stacked one frame per column; each frame is scanned row by row
(``img.ravel()`` order) and scaled to [0, 1] by its maxval.
"""
from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BadMagic, DimensionMismatch, ParseError, ShapeOverflow,
                     UnsupportedFormat)

MAGIC = b"RPCAMAT1"
_HEADER = struct.Struct("<8sQQ")


def write_bmat(path, M) -> None:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("BMAT stores 2-D matrices only")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, M.shape[0], M.shape[1]))
        fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def read_bmat(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size or data[:8] != MAGIC:
        raise BadMagic(f"{path}: not a BMAT file")
    _, rows, cols = _HEADER.unpack_from(data)
    payload = len(data) - _HEADER.size
    if rows * cols * 8 != payload:
        raise ShapeOverflow(f"{path}: header says {rows}x{cols} but payload holds {payload} bytes")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(np.float64)


def write_csv(path, M) -> None:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("CSV stores 2-D matrices only")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in M:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path, header: bool = False) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not record or all(not cell.strip() for cell in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise ParseError(f"{path}: expected {width} fields, found {len(record)}", line=lineno)
            vals = []
            for col, cell in enumerate(record, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: cannot parse {cell!r} as a number",
                                     line=lineno, column=col) from None
                if not np.isfinite(v):
                    raise ParseError(f"{path}: non-finite value {cell!r}", line=lineno, column=col)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _is_csv(path) -> bool:
    return str(path).lower().endswith((".csv", ".txt"))


def read_matrix(path, header: bool = False) -> np.ndarray:
    """Read a BMAT or CSV matrix, chosen by content (BMAT magic) or extension."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == MAGIC:
        return read_bmat(path)
    if _is_csv(path):
        return read_csv(path, header=header)
    raise BadMagic(f"{path}: not a BMAT file and no .csv extension")


def write_matrix(path, M) -> None:
    if _is_csv(path):
        write_csv(path, M)
    else:
        write_bmat(path, M)


def _pgm_tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens, skipping comments, and the payload offset."""
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise UnsupportedFormat("truncated PGM header")
        tokens.append(data[start:i])
    return tokens, i


def read_pgm(path):
    """Read a P2 or P5 PGM. Returns ``(pixels as int array (height, width), maxval)``."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise UnsupportedFormat(f"{path}: not a P2/P5 PGM file")
    (_, w, h, maxval), end = _pgm_tokens(data, 4)
    width, height, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise UnsupportedFormat(f"{path}: maxval {maxval} out of range")
    if magic == b"P5":
        dtype = ">u1" if maxval < 256 else ">u2"
        start = end + 1
        count = width * height
        pix = np.frombuffer(data, dtype=dtype, count=count, offset=start)
    else:
        pix = np.array(data[end:].split()[: width * height], dtype=np.int64)
        if pix.size != width * height:
            raise UnsupportedFormat(f"{path}: expected {width * height} pixels, found {pix.size}")
    return pix.astype(np.int64).reshape(height, width), maxval


def write_pgm(path, pixels, maxval: int = 255) -> None:
    """Write integer pixels as a binary (P5) PGM."""
    pixels = np.asarray(pixels)
    height, width = pixels.shape
    dtype = ">u1" if maxval < 256 else ">u2"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(pixels.astype(dtype).tobytes())


@dataclass(eq=False)
class ImageColumnStack:
    width: int
    height: int
    frames: int
    matrix: np.ndarray

    def frame(self, k: int) -> np.ndarray:
        return self.matrix[:, k].reshape(self.height, self.width)


def stack_images(paths) -> ImageColumnStack:
    """Load equally sized PGM images into a (width*height) x frames matrix in [0, 1]."""
    paths = list(paths)
    if not paths:
        raise ValueError("no images given")
    cols = []
    shape = None
    for p in paths:
        pix, maxval = read_pgm(p)
        if shape is None:
            shape = pix.shape
        elif pix.shape != shape:
            raise DimensionMismatch(f"{p}: size {pix.shape[1]}x{pix.shape[0]} differs from "
                                    f"{shape[1]}x{shape[0]}")
        cols.append(pix.ravel() / maxval)
    height, width = shape
    return ImageColumnStack(width=width, height=height, frames=len(cols),
                            matrix=np.column_stack(cols).astype(np.float64))


def unstack_to_images(stack: ImageColumnStack, out_dir, prefix: str = "frame",
                      maxval: int = 255) -> list:
    """Write each column as a PGM, clamping to [0, 1] and quantizing to ``maxval`` levels."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for k in range(stack.matrix.shape[1]):
        img = np.clip(stack.frame(k), 0.0, 1.0)
        path = os.path.join(out_dir, f"{prefix}_{k:04d}.pgm")
        write_pgm(path, np.rint(img * maxval).astype(np.int64), maxval)
        paths.append(path)
    return paths
