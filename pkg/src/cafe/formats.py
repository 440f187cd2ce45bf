"""Little-endian binary containers with a magic tag and trailing CRC32.

* ``CAFE`` grouped source statistics (the only artifact carried from the
  source environment to the test environment)::

      "CAFE" | u32 version=1 | u32 d | u32 k
      k x ( u32 size | u32[size] dims | f64[size] mean
            | f64[size] eigenvalues | f64[size*size] eigenvectors row-major )
      u32 crc32

* ``CAFM`` model checkpoint::

      "CAFM" | u32 version=1 | u32 n_layers
      n_layers x ( u32 out | u32 in | u32 activation )  | u32 C | u32 d
      f64 parameters (W_1, b_1, ..., W_classifier, b_classifier) | u32 crc32

* ``CAFD`` labeled dataset::

      "CAFD" | u32 n | u32 dim | u32 C | f64[n*dim] features | u32[n] labels | u32 crc32

The CRC covers every byte that precedes it. Eigenvalues are written unclipped;
the floor is applied when loading.
"""

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .alignment import DEFAULT_EPSILON, GroupedSourceStats
from .errors import ChecksumError, FormatError, TruncatedFile, VersionMismatch
from .grouping import GroupPartition
from .model import ACTIVATIONS, Layer, ToyModel

STATS_MAGIC = b"CAFE"
MODEL_MAGIC = b"CAFM"
DATA_MAGIC = b"CAFD"
VERSION = 1


class _Reader:
    def __init__(self, buf, start):
        self.buf = buf
        self.pos = start

    def take(self, nbytes):
        if self.pos + nbytes > len(self.buf):
            raise TruncatedFile("file ends before the declared payload")
        out = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def u32(self, count=None):
        if count is None:
            return struct.unpack("<I", self.take(4))[0]
        return np.frombuffer(self.take(4 * count), dtype="<u4").astype(np.int64)

    def f64(self, count):
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def _seal(parts):
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def _open(buf, magic, versioned=True):
    if len(buf) < 4 or buf[:4] != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {bytes(buf[:4])!r}")
    if len(buf) < 8 + (4 if versioned else 0):
        raise TruncatedFile("file is shorter than its header")
    reader = _Reader(memoryview(buf)[:-4], 4)
    if versioned:
        version = reader.u32()
        if version != VERSION:
            raise VersionMismatch(f"unsupported format version {version} (expected {VERSION})")
    return reader


def _close(buf, reader):
    if reader.pos != len(buf) - 4:
        raise FormatError("trailing bytes after payload")
    (stored,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) & 0xFFFFFFFF != stored:
        raise ChecksumError("CRC32 mismatch")


def _f64(a):
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _u32(a):
    return np.ascontiguousarray(a, dtype="<u4").tobytes()


def stats_to_bytes(stats):
    parts = [STATS_MAGIC, struct.pack("<III", VERSION, stats.dim, stats.k)]
    for g, mu, lam, vec in zip(stats.partition.groups, stats.means, stats.raw_eigenvalues, stats.eigvecs):
        parts += [struct.pack("<I", g.size), _u32(g), _f64(mu), _f64(lam), _f64(vec)]
    return _seal(parts)


def stats_from_bytes(buf, epsilon=DEFAULT_EPSILON):
    r = _open(buf, STATS_MAGIC)
    d, k = r.u32(), r.u32()
    groups, means, lams, vecs = [], [], [], []
    for _ in range(k):
        m = r.u32()
        groups.append(r.u32(m))
        means.append(r.f64(m))
        lams.append(r.f64(m))
        vecs.append(r.f64(m * m).reshape(m, m))
    _close(buf, r)
    order = np.argsort([int(g.min()) for g in groups], kind="stable")
    partition = GroupPartition(tuple(groups[i] for i in order))
    if partition.dim != d:
        raise FormatError(f"header declares d={d} but groups cover {partition.dim} dims")
    # members are stored sorted, so canonical ordering only permutes whole groups
    return GroupedSourceStats(
        partition,
        tuple(means[i] for i in order),
        tuple(vecs[i] for i in order),
        tuple(lams[i] for i in order),
        float(epsilon),
    )


def stats_file_size(sizes):
    """Exact byte size of a stats file with the given group sizes."""
    return 4 + 12 + sum(4 + 4 * m + 8 * m + 8 * m + 8 * m * m for m in sizes) + 4


def save_stats(stats, path):
    with open(path, "wb") as fh:
        fh.write(stats_to_bytes(stats))


def load_stats(path, epsilon=DEFAULT_EPSILON):
    with open(path, "rb") as fh:
        return stats_from_bytes(fh.read(), epsilon)


def model_to_bytes(model):
    parts = [MODEL_MAGIC, struct.pack("<II", VERSION, len(model.layers))]
    for layer in model.layers:
        out_dim, in_dim = layer.weight.shape
        parts.append(struct.pack("<III", out_dim, in_dim, ACTIVATIONS.index(layer.activation)))
    parts.append(struct.pack("<II", *model.classifier_weight.shape))
    for layer in model.layers:
        parts += [_f64(layer.weight), _f64(layer.bias)]
    parts += [_f64(model.classifier_weight), _f64(model.classifier_bias)]
    return _seal(parts)


def model_from_bytes(buf):
    r = _open(buf, MODEL_MAGIC)
    n_layers = r.u32()
    shapes = []
    for _ in range(n_layers):
        out_dim, in_dim, act = r.u32(), r.u32(), r.u32()
        if act >= len(ACTIVATIONS):
            raise FormatError(f"unknown activation code {act}")
        shapes.append((out_dim, in_dim, ACTIVATIONS[act]))
    c, d = r.u32(), r.u32()
    layers = []
    for out_dim, in_dim, act in shapes:
        w = r.f64(out_dim * in_dim).reshape(out_dim, in_dim)
        layers.append(Layer(w, r.f64(out_dim), act))
    wc = r.f64(c * d).reshape(c, d)
    bc = r.f64(c)
    _close(buf, r)
    return ToyModel(layers, wc, bc)


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


@dataclass
class Dataset:
    """Feature matrix with integer labels (hidden from adaptation)."""

    inputs: np.ndarray
    labels: np.ndarray
    classes: int

    def __len__(self):
        return self.inputs.shape[0]


def dataset_to_bytes(data):
    n, dim = data.inputs.shape
    return _seal([DATA_MAGIC, struct.pack("<III", n, dim, data.classes), _f64(data.inputs), _u32(data.labels)])


def dataset_from_bytes(buf):
    r = _open(buf, DATA_MAGIC, versioned=False)
    n, dim, c = r.u32(), r.u32(), r.u32()
    x = r.f64(n * dim).reshape(n, dim)
    y = r.u32(n)
    _close(buf, r)
    return Dataset(x, y, int(c))


def save_dataset(data, path):
    with open(path, "wb") as fh:
        fh.write(dataset_to_bytes(data))


def load_dataset(path):
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())
