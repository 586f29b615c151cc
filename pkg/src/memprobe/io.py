"""File formats: float tensor datasets, PGM/PPM ingestion, mask files,
and model serialization.

Training always consumes the raw float tensor format (extension .mpr) so
that bit-exactness of [0,1] data is preserved; PGM/PPM are one-time
ingestion conveniences quantized at import.  All binary payloads are
64-bit little-endian floats, row-major.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .autoencoder import (ACTIVATION_KINDS, Activation, AutoencoderModel,
                          DenseLayer, TiedAutoencoder)
from .degradation import ErasureMask
from .numerics import Rng

TENSOR_MAGIC = b"MPRB"
TENSOR_VERSION = 1
MODEL_MAGIC = b"MPRM"
MODEL_VERSION = 1


class FormatError(ValueError):
    """Malformed file; the message names the byte offset when known."""


@dataclass
class ImageRecord:
    sample_id: int
    pixels: np.ndarray  # flat, length h*w*c, values in [0, 1]
    height: int
    width: int
    channels: int


# ---------------------------------------------------------------- tensors

def save_tensor(path, images: np.ndarray, height: int, width: int, channels: int):
    """16-byte header {MPRB, version u16, h u16, w u16, c u16, count u32}
    followed by count*h*w*c float64 LE values."""
    images = np.ascontiguousarray(np.atleast_2d(images), dtype="<f8")
    count, d = images.shape
    if d != height * width * channels:
        raise ValueError(f"geometry {height}x{width}x{channels} != vector length {d}")
    header = TENSOR_MAGIC + struct.pack(
        "<HHHHI", TENSOR_VERSION, height, width, channels, count
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(images.tobytes())


def load_tensor(path):
    """Returns (images (count, d) array, height, width, channels)."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise FormatError(f"{path}: truncated header at byte {len(header)}")
        if header[:4] != TENSOR_MAGIC:
            raise FormatError(f"{path}: bad magic at byte 0")
        version, h, w, c, count = struct.unpack("<HHHHI", header[4:16])
        if version != TENSOR_VERSION:
            raise FormatError(f"{path}: unsupported version {version} at byte 4")
        payload = fh.read()
    expected = count * h * w * c * 8
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes at byte 16, expected {expected}"
        )
    images = np.frombuffer(payload, dtype="<f8").reshape(count, h * w * c).copy()
    return images, h, w, c


# ----------------------------------------------------------- PGM/PPM (P5/P6)

def _read_pnm_token(data: bytes, pos: int):
    while pos < len(data):
        if data[pos:pos + 1].isspace():
            pos += 1
        elif data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError(f"unexpected end of header at byte {start}")
    return data[start:pos], pos


def load_pnm(path):
    """Binary PGM (P5) or PPM (P6); pixel values normalized by maxval.

    Returns (flat float vector, height, width, channels).
    """
    data = open(path, "rb").read()
    magic, pos = _read_pnm_token(data, 0)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise FormatError(f"{path}: unknown PNM magic {magic!r} at byte 0")
    try:
        w_tok, pos = _read_pnm_token(data, pos)
        h_tok, pos = _read_pnm_token(data, pos)
        max_tok, pos = _read_pnm_token(data, pos)
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from exc
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid maxval {maxval}")
    pos += 1  # single whitespace after maxval
    n = width * height * channels
    raw = data[pos:]
    if maxval < 256:
        if len(raw) < n:
            raise FormatError(f"{path}: pixel data truncated at byte {pos + len(raw)}")
        vals = np.frombuffer(raw[:n], dtype=np.uint8).astype(np.float64)
    else:
        if len(raw) < 2 * n:
            raise FormatError(f"{path}: pixel data truncated at byte {pos + len(raw)}")
        vals = np.frombuffer(raw[:2 * n], dtype=">u2").astype(np.float64)
    return vals / maxval, height, width, channels


def save_pnm(path, pixels: np.ndarray, height: int, width: int, channels: int):
    """8-bit P5/P6 export; values are clipped to [0, 1] and quantized."""
    if channels not in (1, 3):
        raise ValueError("PNM export supports 1 or 3 channels")
    magic = b"P5" if channels == 1 else b"P6"
    quant = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    body = np.round(quant * 255.0).astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (width, height))
        fh.write(body)


# ----------------------------------------------------------------- datasets

def load_dataset(path, limit: int | None = None, seed: int = 0) -> list[ImageRecord]:
    """Load a .mpr tensor file or a directory of .pgm/.ppm/.mpr files.

    Values outside [0, 1] are min-max rescaled per sample.  When ``limit``
    is smaller than the available count, a seeded deterministic subset is
    selected (sorted indices of a seeded shuffle).
    """
    records: list[ImageRecord] = []
    if os.path.isdir(path):
        names = sorted(
            f for f in os.listdir(path)
            if f.lower().endswith((".pgm", ".ppm", ".mpr"))
        )
        if not names:
            raise FormatError(f"{path}: no .pgm/.ppm/.mpr files found")
        for name in names:
            full = os.path.join(path, name)
            if name.lower().endswith(".mpr"):
                images, h, w, c = load_tensor(full)
                for row in images:
                    records.append(ImageRecord(len(records), row, h, w, c))
            else:
                vec, h, w, c = load_pnm(full)
                records.append(ImageRecord(len(records), vec, h, w, c))
    else:
        images, h, w, c = load_tensor(path)
        for row in images:
            records.append(ImageRecord(len(records), row, h, w, c))

    for rec in records:
        lo, hi = float(rec.pixels.min()), float(rec.pixels.max())
        if lo < 0.0 or hi > 1.0:
            rec.pixels = (rec.pixels - lo) / (hi - lo) if hi > lo else np.zeros_like(rec.pixels)

    if limit is not None and limit < len(records):
        rng = Rng(seed, spawn_key=(0xD5,))
        order = np.argsort(rng.uniform(size=len(records)), kind="stable")
        keep = np.sort(order[:limit])
        records = [records[i] for i in keep]
        for new_id, rec in enumerate(records):
            rec.sample_id = new_id
    return records


def synthetic_dataset(n: int, height: int, width: int, seed: int = 42,
                      n_blobs: int = 6) -> list[ImageRecord]:
    """Smooth random grayscale images in [0.05, 0.95] (Gaussian blobs),
    deterministic given the seed.  Desk-scale stand-in for photographs."""
    rng = Rng(seed, spawn_key=(0x5D,))
    yy, xx = np.mgrid[0:height, 0:width]
    records = []
    for i in range(n):
        img = np.zeros((height, width))
        for _ in range(n_blobs):
            cy = rng.uniform() * height
            cx = rng.uniform() * width
            sig = 1.0 + rng.uniform() * 0.25 * min(height, width)
            amp = rng.uniform(low=-1.0, high=1.0)
            img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig * sig))
        lo, hi = img.min(), img.max()
        img = 0.05 + 0.9 * (img - lo) / (hi - lo) if hi > lo else np.full_like(img, 0.5)
        records.append(ImageRecord(i, img.ravel(), height, width, 1))
    return records


def records_to_array(records: list[ImageRecord]) -> np.ndarray:
    return np.stack([r.pixels for r in records])


# -------------------------------------------------------------------- masks

def save_mask(path, mask: ErasureMask, height: int | None = None,
              width: int | None = None):
    """ASCII P1 grid; digit 1 means the pixel is kept."""
    d = len(mask)
    if height is None or width is None:
        height, width = 1, d
    if height * width != d:
        raise ValueError(f"geometry {height}x{width} != mask length {d}")
    digits = mask.diag.astype(int).reshape(height, width)
    with open(path, "w") as fh:
        fh.write(f"P1\n{width} {height}\n")
        for row in digits:
            fh.write(" ".join(str(v) for v in row) + "\n")


def load_mask(path) -> ErasureMask:
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise FormatError(f"{path}: expected P1 mask file")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        bits = [int(t) for t in tokens[3:3 + width * height]]
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed mask file ({exc})") from exc
    if len(bits) != width * height:
        raise FormatError(f"{path}: expected {width * height} bits, got {len(bits)}")
    return ErasureMask(np.asarray(bits, dtype=np.float64))


# ------------------------------------------------------------------- models

_ACT_CODES = {None: 0, "identity": 1, "leaky_relu": 2, "prelu": 3, "softplus": 4}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


def _pack_layer(fh, weight, bias, act: Activation | None):
    out_dim, in_dim = weight.shape
    kind = _ACT_CODES[act.kind if act is not None else None]
    param = act.param if act is not None else 0.0
    fh.write(struct.pack("<IIBBd", in_dim, out_dim, 1 if bias is not None else 0,
                         kind, param))
    fh.write(np.ascontiguousarray(weight, dtype="<f8").tobytes())
    if bias is not None:
        fh.write(np.ascontiguousarray(bias, dtype="<f8").tobytes())


def save_model(path, model):
    tied = isinstance(model, TiedAutoencoder)
    layers = [(model.weight, None, model.activation)] if tied else [
        (layer.weight, layer.bias, layer.activation) for layer in model.layers
    ]
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + struct.pack("<HBH", MODEL_VERSION, int(tied), len(layers)))
        for weight, bias, act in layers:
            _pack_layer(fh, weight, bias, act)


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0")
    try:
        version, tied, n_layers = struct.unpack("<HBH", data[4:9])
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header at byte 4") from exc
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version} at byte 4")
    pos = 9
    layers = []
    for i in range(n_layers):
        try:
            in_dim, out_dim, has_bias, kind, param = struct.unpack(
                "<IIBBd", data[pos:pos + 18]
            )
        except struct.error as exc:
            raise FormatError(f"{path}: truncated layer header at byte {pos}") from exc
        pos += 18
        nw = in_dim * out_dim * 8
        if len(data) < pos + nw + (out_dim * 8 if has_bias else 0):
            raise FormatError(f"{path}: truncated layer payload at byte {pos}")
        weight = np.frombuffer(data[pos:pos + nw], dtype="<f8").reshape(out_dim, in_dim).copy()
        pos += nw
        bias = None
        if has_bias:
            bias = np.frombuffer(data[pos:pos + out_dim * 8], dtype="<f8").copy()
            pos += out_dim * 8
        name = _ACT_NAMES[kind]
        act = Activation(name, param) if name is not None else None
        layers.append((weight, bias, act))
    if tied:
        weight, _, act = layers[0]
        return TiedAutoencoder(weight, act if act is not None else Activation())
    return AutoencoderModel([DenseLayer(w, b, a) for w, b, a in layers])
