"""Dense float64 tensors with reverse-mode gradients, and their binary format.

A Tensor is a node in a dynamically built computation graph: it holds
row-major float64 data, an optional accumulated gradient, and a closure
that maps the upstream gradient to per-parent gradients. Ops (see ops.py)
attach analytic backward closures; `backward()` only composes them.
Finite differences never run inside the library, they live in the tests.

A Param is a long-lived leaf plus a trainable flag. Frozen params keep a
zero gradient buffer and are never touched by the optimizer.
"""

import hashlib
import struct

import numpy as np

from .errors import DimensionError, ParseError

MAGIC = b"VFPT"


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "vjp")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d scalars to 1-d
        self.data = np.ascontiguousarray(arr) if arr.ndim else arr
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self.parents = tuple(parents)
        self.vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def backward(root):
    """Reverse-mode sweep from a scalar root through the recorded graph."""
    if root.data.size != 1:
        raise DimensionError(f"backward needs a scalar root, got shape {root.data.shape}")
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))

    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        grads = node.vjp(node.grad)
        for parent, g in zip(node.parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g


class Param:
    """A leaf tensor, its gradient buffer, and whether the optimizer may move it."""

    __slots__ = ("value", "trainable")

    def __init__(self, data, trainable=True):
        self.value = Tensor(data, requires_grad=trainable)
        self.value.zero_grad()
        self.trainable = bool(trainable)

    @property
    def data(self):
        return self.value.data

    @property
    def grad(self):
        return self.value.grad

    @property
    def shape(self):
        return self.value.data.shape

    def zero_grad(self):
        self.value.zero_grad()

    def __repr__(self):
        return f"Param(shape={self.shape}, trainable={self.trainable})"


# ------------------------------------------------------------- serialization
#
# Flat binary tensor format: magic "VFPT", u32 rank, u32 extents, then the
# row-major float64 payload, everything little-endian.


def write_tensor(fh, arr):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim:
        arr = np.ascontiguousarray(arr)
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    for ext in arr.shape:
        fh.write(struct.pack("<I", ext))
    fh.write(arr.astype("<f8").tobytes())


def read_tensor(fh, path="<stream>"):
    start = fh.tell()
    magic = fh.read(4)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad tensor magic {magic!r} at byte {start}")
    raw = fh.read(4)
    if len(raw) < 4:
        raise ParseError(f"{path}: truncated rank field at byte {fh.tell()}")
    rank = struct.unpack("<I", raw)[0]
    shape = []
    for _ in range(rank):
        raw = fh.read(4)
        if len(raw) < 4:
            raise ParseError(f"{path}: truncated extent at byte {fh.tell()}")
        shape.append(struct.unpack("<I", raw)[0])
    count = int(np.prod(shape)) if shape else 1
    payload = fh.read(8 * count)
    if len(payload) < 8 * count:
        raise ParseError(f"{path}: truncated payload at byte {fh.tell()}")
    return np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)


def tensor_bytes(arr):
    import io

    buf = io.BytesIO()
    write_tensor(buf, arr)
    return buf.getvalue()


def hash_named_tensors(named):
    """SHA-256 over name-sorted serialized tensors; the freeze fingerprint."""
    h = hashlib.sha256()
    for name in sorted(named):
        h.update(name.encode("utf-8"))
        h.update(tensor_bytes(named[name]))
    return h.hexdigest()
