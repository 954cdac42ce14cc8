"""Netpbm readers/writers used for attention maps, adjacency dumps and samples."""
import numpy as np


def write_pgm(path, image, maxval=255):
    """Binary (P5) greymap; ``image`` holds integers in ``[0, maxval]``."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"PGM image must be 2-D, got {image.shape}")
    if not 1 <= maxval <= 255:
        raise ValueError("only 8-bit PGM is supported")
    if image.min() < 0 or image.max() > maxval:
        raise ValueError(f"pixel values outside [0, {maxval}]")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(image.astype(np.uint8).tobytes())


def _tokens(data, count, pos):
    out = []
    while len(out) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        out.append(data[start:pos])
    return out, pos


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), pos = _tokens(data, 4, 0)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(w), int(h)
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    return pixels.reshape(h, w), int(maxval)


def write_pbm(path, bits):
    """Plain (P1) bitmap, one text row per matrix row; 1 is a set bit."""
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P1\n{w} {h}\n")
        for row in bits.astype(np.uint8):
            fh.write(" ".join(map(str, row)) + "\n")


def read_pbm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h), pos = _tokens(data, 3, 0)
    if magic != b"P1":
        raise ValueError(f"{path}: not a plain PBM")
    w, h = int(w), int(h)
    bits = [c for c in data[pos:] if c in b"01"]
    return (np.array(bits[:w * h], dtype=np.uint8) - ord("0")).reshape(h, w).astype(bool)
