"""
Binary checkpoint container.

Layout (all integers little-endian)::

    b"TMTL" | u32 version | u32 crc32(body) | u64 len(body) | body

    body   := section(config) section(vocab) section(tokens) section(state)
              u32 count, count * blob
    section:= u64 n | n bytes of UTF-8 JSON
    blob   := u32 name_len | name | u32 rank | rank * u32 dim | float32 data

Blobs are the model parameters followed by the Adam moments of every
trainable parameter, named ``adam.m/<param>`` and ``adam.v/<param>``.
"""
import errno
import json
import struct
import zlib

import numpy as np

from .config import ModelConfig
from .corpus import PretrainedEmbeddings, Vocab
from .errors import CorruptCheckpoint, DiskFull, VersionMismatch

MAGIC = b"TMTL"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


def encode_blob(name, array):
    raw = name.encode("utf-8")
    arr = np.ascontiguousarray(array, dtype="<f4")
    parts = [struct.pack("<I", len(raw)), raw, struct.pack("<I", arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if n < 0 or self.pos + n > len(self.data):
            raise CorruptCheckpoint("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def section(self):
        (n,) = self.unpack("<Q")
        try:
            return json.loads(self.take(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptCheckpoint(f"bad JSON section: {exc}") from None

    def blob(self):
        (n,) = self.unpack("<I")
        name = self.take(n).decode("utf-8", errors="strict")
        (rank,) = self.unpack("<I")
        dims = self.unpack(f"<{rank}I") if rank else ()
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(dims)
        return name, arr


def save_checkpoint(path, model, state=None, optimizer=None):
    """Write model parameters, vocab, config and training state."""
    blobs = [encode_blob(p.name, p.value) for p in model.parameters()]
    if optimizer is not None:
        for p in optimizer.params:
            blobs.append(encode_blob(f"adam.m/{p.name}", p.m))
            blobs.append(encode_blob(f"adam.v/{p.name}", p.v))

    def section(obj):
        raw = json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return struct.pack("<Q", len(raw)) + raw

    body = b"".join([
        section(model.config.to_dict()),
        section(model.vocab.to_dict()),
        section(model.embeddings.tokens),
        section(state.to_dict() if state is not None else {}),
        struct.pack("<I", len(blobs)),
        *blobs,
    ])
    header = _HEADER.pack(MAGIC, VERSION, zlib.crc32(body), len(body))
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(body)
    except OSError as exc:
        if exc.errno == errno.ENOSPC:
            raise DiskFull(f"no space left writing {path}") from exc
        raise


def read_checkpoint(path):
    """Parse a checkpoint into its raw parts: (config, vocab, tokens, state, blobs)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CorruptCheckpoint("checkpoint is truncated")
    magic, version, crc, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptCheckpoint(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    body = data[_HEADER.size:]
    if len(body) != length:
        raise CorruptCheckpoint(f"body length {len(body)} != recorded {length}")
    if zlib.crc32(body) != crc:
        raise CorruptCheckpoint("checksum mismatch")
    r = _Reader(body)
    config = r.section()
    vocab = r.section()
    tokens = r.section()
    state = r.section()
    (count,) = r.unpack("<I")
    blobs = dict(r.blob() for _ in range(count))
    if r.pos != len(body):
        raise CorruptCheckpoint("trailing bytes after last blob")
    return config, vocab, tokens, state, blobs


def load_checkpoint(path, dtype=np.float32):
    """Rebuild ``(model, state_dict, moments)`` from a checkpoint file."""
    from .model import DiacritizerModel

    config, vocab, tokens, state, blobs = read_checkpoint(path)
    config = ModelConfig.from_dict(config)
    vocab = Vocab.from_dict(vocab)
    table = blobs.get("pretrained")
    if table is None or table.shape[0] != len(tokens) + 1:
        raise CorruptCheckpoint("pretrained table missing or inconsistent with its token list")
    embeddings = PretrainedEmbeddings(dim=table.shape[1], tokens=list(tokens),
                                      vectors=np.array(table[1:], dtype=np.float32))
    model = DiacritizerModel(config, vocab, embeddings, dtype=dtype)
    for p in model.parameters():
        if p.name not in blobs:
            raise CorruptCheckpoint(f"parameter {p.name!r} missing")
        value = blobs[p.name]
        if value.shape != p.value.shape:
            raise CorruptCheckpoint(f"parameter {p.name!r} has shape {value.shape}, expected {p.value.shape}")
        p.value[...] = value
    moments = {k: v for k, v in blobs.items() if k.startswith("adam.")}
    return model, state, moments


def restore_moments(optimizer, moments):
    for p in optimizer.params:
        m = moments.get(f"adam.m/{p.name}")
        v = moments.get(f"adam.v/{p.name}")
        if m is not None and v is not None:
            p.m[...] = m
            p.v[...] = v
