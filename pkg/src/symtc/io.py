"""File formats: PGM images and masks, JSON documents, binary weights, dataset manifests."""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WEIGHTS_MAGIC = b"SYMTC001"


class FormatError(ValueError):
    """Malformed or truncated file; offset is the byte position where parsing failed."""

    def __init__(self, path, message: str, offset: int | None = None):
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{path}: {message}{where}")
        self.path = str(path)
        self.offset = offset


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- PGM ---------------------------------------------------------------------

def encode_pgm(arr: np.ndarray, maxval: int) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {arr.shape}")
    H, W = arr.shape
    header = f"P5\n{W} {H}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    return header + np.ascontiguousarray(arr, dtype=dtype).tobytes()


def decode_pgm(data: bytes, path="<bytes>") -> tuple[np.ndarray, int]:
    """Parse binary P5; returns (raw integer array, maxval)."""
    pos = 0
    tokens = []
    if data[:2] != b"P5":
        raise FormatError(path, "missing P5 magic", 0)
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tok = data[start:pos]
        if not tok.isdigit():
            raise FormatError(path, f"bad header token {tok!r}", start)
        tokens.append(int(tok))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError(path, "header not terminated by whitespace", pos)
    pos += 1
    W, H, maxval = tokens
    if W <= 0 or H <= 0 or not 0 < maxval < 65536:
        raise FormatError(path, f"bad dimensions/maxval {W}x{H}/{maxval}", pos)
    itemsize = 2 if maxval > 255 else 1
    need = W * H * itemsize
    if len(data) - pos < need:
        raise FormatError(path, f"truncated payload: {len(data) - pos} of {need} bytes", len(data))
    arr = np.frombuffer(data, dtype=">u2" if itemsize == 2 else "u1", count=W * H, offset=pos)
    return arr.reshape(H, W).astype(np.int64), maxval


def save_image(path, img: np.ndarray, bits: int = 8) -> None:
    """Intensities in [0, 1] quantized to 8 or 16 bits."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    img = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(img)) or img.min(initial=0) < 0 or img.max(initial=0) > 1:
        raise ValueError("image intensities must be finite and within [0, 1]")
    maxval = 255 if bits == 8 else 65535
    atomic_write_bytes(path, encode_pgm(np.rint(img * maxval), maxval))


def load_image(path) -> np.ndarray:
    raw, maxval = decode_pgm(Path(path).read_bytes(), path)
    return raw.astype(np.float64) / maxval


def save_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    if mask.min(initial=0) < 0 or mask.max(initial=0) > 255:
        raise ValueError("mask labels must fit in 8 bits")
    atomic_write_bytes(path, encode_pgm(mask, 255))


def load_mask(path, class_count: int | None = None) -> np.ndarray:
    raw, maxval = decode_pgm(Path(path).read_bytes(), path)
    if maxval > 255:
        raise FormatError(path, "masks must be 8-bit PGM")
    if class_count is not None:
        bad = np.argwhere(raw >= class_count)
        if len(bad):
            r, c = bad[0]
            raise FormatError(path, f"label {raw[r, c]} >= class_count {class_count} at pixel (row={r}, col={c});"
                                    f" {len(bad)} offending pixel(s)")
    return raw.astype(np.uint8)


# -- JSON --------------------------------------------------------------------

def save_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=False) + "\n")


def load_json(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON: {exc.msg}", len(text[:exc.pos].encode("utf-8"))) from None


def save_shape(path, shape) -> None:
    save_json(path, shape.to_dict())


def load_shape(path):
    from .shapes.shape import Shape
    try:
        return Shape.from_dict(load_json(path))
    except (KeyError, TypeError) as exc:
        raise FormatError(path, f"not a shape document ({exc})") from None


def save_ssm(path, model) -> None:
    save_json(path, model.to_dict())


def load_ssm(path):
    from .shapes.ssm import SsmModel
    try:
        return SsmModel.from_dict(load_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, f"not an SSM document ({exc})") from None


def save_config(path, cfg) -> None:
    save_json(path, cfg.to_dict())


def load_config(path):
    from .config import RunConfig
    return RunConfig.from_dict(load_json(path))


# -- weights -----------------------------------------------------------------

def encode_weights(state: dict[str, np.ndarray], metadata: dict | None = None) -> bytes:
    tensors, offset, chunks = {}, 0, []
    for name, arr in state.items():
        buf = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors[name] = {"shape": list(np.shape(arr)), "offset": offset}
        chunks.append(buf)
        offset += len(buf)
    header = json.dumps({"tensors": tensors, "metadata": metadata or {}}).encode("utf-8")
    return WEIGHTS_MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def decode_weights(data: bytes, path="<bytes>") -> tuple[dict[str, np.ndarray], dict]:
    if data[:8] != WEIGHTS_MAGIC:
        raise FormatError(path, "bad magic", 0)
    if len(data) < 16:
        raise FormatError(path, "truncated header length", len(data))
    (hlen,) = struct.unpack("<Q", data[8:16])
    if 16 + hlen > len(data):
        raise FormatError(path, f"header length {hlen} exceeds file", 8)
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        tensors = header["tensors"]
    except (ValueError, KeyError) as exc:
        raise FormatError(path, f"bad header ({exc})", 16) from None
    base = 16 + hlen
    state = {}
    for name, info in tensors.items():
        shape = tuple(info["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = base + int(info["offset"])
        if start + 4 * count > len(data):
            raise FormatError(path, f"truncated payload for {name!r}", len(data))
        state[name] = np.frombuffer(data, dtype="<f4", count=count, offset=start).reshape(shape).astype(np.float64)
    return state, header.get("metadata", {})


def save_weights(path, state: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    """Float32 little-endian payloads; values are narrowed from float64 on save."""
    atomic_write_bytes(path, encode_weights(state, metadata))


def load_weights(path) -> tuple[dict[str, np.ndarray], dict]:
    return decode_weights(Path(path).read_bytes(), path)


def save_model(path, model) -> None:
    save_weights(path, model.state_dict(), {"network": model.cfg.to_dict()})


def load_model(path):
    from .config import NetworkConfig
    from .network import SymTC
    state, meta = load_weights(path)
    if "network" not in meta:
        raise FormatError(path, "weights carry no network config")
    model = SymTC(NetworkConfig.from_dict(meta["network"]))
    model.load_state_dict(state)
    return model


# -- manifests ---------------------------------------------------------------

@dataclass
class SampleRecord:
    image: str
    mask: str
    shape: str | None = None
    provenance: dict = field(default_factory=dict)


@dataclass
class DatasetManifest:
    splits: dict[str, list[SampleRecord]]
    root: Path = Path(".")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def check(self) -> None:
        """Every referenced file must exist."""
        missing = [(split, path) for split, recs in self.splits.items() for r in recs
                   for path in (r.image, r.mask, r.shape) if path and not self.resolve(path).exists()]
        if missing:
            split, path = missing[0]
            raise FileNotFoundError(f"manifest split {split!r} references missing {path} ({len(missing)} missing)")

    def to_dict(self) -> dict:
        return {"splits": [{"name": n, "samples": [vars(r) for r in recs]} for n, recs in self.splits.items()]}

    @classmethod
    def from_dict(cls, d: dict, root=".") -> "DatasetManifest":
        splits = {}
        for s in d["splits"]:
            if s["name"] in splits:
                raise ValueError(f"duplicate split name {s['name']!r}")
            splits[s["name"]] = [SampleRecord(**r) for r in s["samples"]]
        return cls(splits, Path(root))

    def load_split(self, name: str, class_count: int | None = None):
        recs = self.splits[name]
        images = np.stack([load_image(self.resolve(r.image)) for r in recs])
        masks = np.stack([load_mask(self.resolve(r.mask), class_count) for r in recs])
        return images, masks


def save_manifest(path, manifest: DatasetManifest) -> None:
    save_json(path, manifest.to_dict())


def load_manifest(path, check: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        m = DatasetManifest.from_dict(load_json(path), path.parent)
    except (KeyError, TypeError) as exc:
        raise FormatError(path, f"not a manifest ({exc})") from None
    if check:
        m.check()
    return m
