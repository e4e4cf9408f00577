"""ICRA v1: bit-exact read/write of the attention-dump binary format.

This file format is the sole contract between the engine and any model
adapter.  One dump holds, for a single forward pass over one prompt, the
total attention mass each document received from the query tokens, already
summed over heads, query tokens, and document tokens:

    M[l][d] = sum_h sum_{q in query} sum_{t in doc d} A_l,h[q -> t]

Layout (all integers little-endian):

    offset  size  content
    0       4     magic bytes "ICRA" (0x49 0x43 0x52 0x41)
    4       4     u32 version, must be 1
    8       4     u32 header length in bytes
    12      n     UTF-8 JSON header (keys listed in HEADER_KEYS)
    12+n    4*L*D payload, float32, layer-major row-major

Because each query token's attention row is a softmax distribution over the
whole prompt, the per-layer document mass can never exceed
num_heads * query_token_count; that bound is enforced on read and write.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

MAGIC = b"ICRA"
VERSION = 1
HEADER_KEYS = (
    "query_id",
    "doc_ids",
    "model",
    "num_layers",
    "num_heads",
    "query_token_count",
    "doc_token_counts",
    "calibration",
    "ordering",
)
# Relative slack on the per-layer mass bound: float32 rounding across
# thousands of summed softmax entries, never enough to hide a real violation.
_MASS_BOUND_RTOL = 1e-4


class DumpFormatError(ValueError):
    """Raised for malformed ICRA bytes or invariant-violating dumps."""


@dataclass(frozen=True, eq=False)
class AttentionDump:
    query_id: str
    doc_ids: tuple[str, ...]
    model_name: str
    num_layers: int
    num_heads: int
    query_token_count: int
    doc_token_counts: tuple[int, ...]
    calibration: bool
    matrix: np.ndarray = field(repr=False)
    ordering: str = "reversed"

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float32)
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))
        object.__setattr__(self, "doc_token_counts", tuple(int(c) for c in self.doc_token_counts))
        self.validate()

    @property
    def num_docs(self) -> int:
        return len(self.doc_ids)

    def validate(self) -> None:
        if self.num_layers < 1 or self.num_heads < 1 or self.query_token_count < 1:
            raise DumpFormatError("layer/head/query-token counts must be positive")
        if self.ordering != "reversed":
            raise DumpFormatError(f"unknown ordering {self.ordering!r}")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise DumpFormatError("duplicate doc_ids in dump")
        if len(self.doc_token_counts) != len(self.doc_ids):
            raise DumpFormatError("doc_token_counts length does not match doc_ids")
        if any(c < 0 for c in self.doc_token_counts):
            raise DumpFormatError("negative doc token count")
        if self.matrix.shape != (self.num_layers, len(self.doc_ids)):
            raise DumpFormatError(
                f"matrix shape {self.matrix.shape} does not match header "
                f"({self.num_layers}, {len(self.doc_ids)})"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise DumpFormatError("non-finite matrix entry")
        if np.any(self.matrix < 0):
            raise DumpFormatError("negative matrix entry")
        bound = float(self.num_heads) * float(self.query_token_count)
        layer_mass = self.matrix.sum(axis=1, dtype=np.float64)
        worst = int(np.argmax(layer_mass))
        if layer_mass[worst] > bound * (1.0 + _MASS_BOUND_RTOL):
            raise DumpFormatError(
                f"layer {worst} mass {layer_mass[worst]:.6g} exceeds "
                f"num_heads*query_token_count = {bound:.6g}"
            )

    def header_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "doc_ids": list(self.doc_ids),
            "model": self.model_name,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "query_token_count": self.query_token_count,
            "doc_token_counts": list(self.doc_token_counts),
            "calibration": self.calibration,
            "ordering": self.ordering,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AttentionDump):
            return NotImplemented
        return self.header_dict() == other.header_dict() and np.array_equal(
            self.matrix, other.matrix
        )

    def slice_docs(self, doc_ids: list[str] | tuple[str, ...]) -> "AttentionDump":
        """Restrict the dump to a subset of its documents, in the given order.

        Column slicing of the pre-reduced matrix; used as the engine-level
        stand-in when no per-subset dump exists on disk.
        """
        index = {d: i for i, d in enumerate(self.doc_ids)}
        missing = [d for d in doc_ids if d not in index]
        if missing:
            raise DumpFormatError(f"doc ids not in dump: {missing}")
        cols = [index[d] for d in doc_ids]
        return AttentionDump(
            query_id=self.query_id,
            doc_ids=tuple(doc_ids),
            model_name=self.model_name,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            query_token_count=self.query_token_count,
            doc_token_counts=tuple(self.doc_token_counts[i] for i in cols),
            calibration=self.calibration,
            matrix=self.matrix[:, cols],
            ordering=self.ordering,
        )


def write_dump(dump: AttentionDump, sink: BinaryIO) -> int:
    """Serialize a validated dump; returns the number of bytes written."""
    dump.validate()
    header = json.dumps(dump.header_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(dump.matrix, dtype="<f4").tobytes()
    n = 0
    n += sink.write(MAGIC)
    n += sink.write(struct.pack("<I", VERSION))
    n += sink.write(struct.pack("<I", len(header)))
    n += sink.write(header)
    n += sink.write(payload)
    return n


def read_dump(source: BinaryIO) -> AttentionDump:
    """Parse and validate one ICRA v1 dump from a byte stream."""
    magic = source.read(4)
    if magic != MAGIC:
        raise DumpFormatError("not an ICRA file")
    raw = source.read(8)
    if len(raw) != 8:
        raise DumpFormatError("truncated header")
    version, header_len = struct.unpack("<II", raw)
    if version != VERSION:
        raise DumpFormatError(f"unsupported version {version}")
    header_bytes = source.read(header_len)
    if len(header_bytes) != header_len:
        raise DumpFormatError("truncated header")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DumpFormatError(f"malformed header JSON: {exc}") from exc
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise DumpFormatError(f"header missing keys: {missing}")
    num_layers = int(header["num_layers"])
    num_docs = len(header["doc_ids"])
    expected = 4 * num_layers * num_docs
    payload = source.read(expected + 1)
    if len(payload) != expected:
        raise DumpFormatError("truncated payload")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(num_layers, num_docs)
    return AttentionDump(
        query_id=header["query_id"],
        doc_ids=tuple(header["doc_ids"]),
        model_name=header["model"],
        num_layers=num_layers,
        num_heads=int(header["num_heads"]),
        query_token_count=int(header["query_token_count"]),
        doc_token_counts=tuple(header["doc_token_counts"]),
        calibration=bool(header["calibration"]),
        matrix=matrix,
        ordering=header["ordering"],
    )


def validate_pair(real: AttentionDump, null: AttentionDump) -> None:
    """Check that a (real, content-free) dump pair is safe to calibrate.

    The null pass must cover the same documents in the same order and at the
    same depth; query token counts may differ ("N/A" is short).
    """
    if real.doc_ids != null.doc_ids:
        raise DumpFormatError("doc_ids mismatch between real and null dumps")
    if real.num_layers != null.num_layers:
        raise DumpFormatError(
            f"num_layers mismatch: real={real.num_layers} null={null.num_layers}"
        )
    if real.calibration:
        raise DumpFormatError("real dump flagged as calibration pass")
    if not null.calibration:
        raise DumpFormatError("null dump not flagged")


def subset_key(doc_ids: list[str] | tuple[str, ...]) -> str:
    """Stable 16-hex key for an ordered document subset."""
    h = hashlib.sha256("\x00".join(doc_ids).encode("utf-8"))
    return h.hexdigest()[:16]


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


class DumpStore:
    """Directory of ICRA files keyed by (query_id, ordered doc subset).

    File naming: ``<query_id>__<subset_key>.<real|null>.icra``.  Lookups that
    miss fall back to a header scan, so externally produced files with other
    names still resolve.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, query_id: str, doc_ids: tuple[str, ...], calibration: bool) -> Path:
        kind = "null" if calibration else "real"
        return self.root / f"{_safe(query_id)}__{subset_key(doc_ids)}.{kind}.icra"

    def save(self, dump: AttentionDump) -> Path:
        path = self._path(dump.query_id, dump.doc_ids, dump.calibration)
        with open(path, "wb") as fh:
            write_dump(dump, fh)
        return path

    def save_pair(self, real: AttentionDump, null: AttentionDump) -> tuple[Path, Path]:
        validate_pair(real, null)
        return self.save(real), self.save(null)

    def load(self, query_id: str, doc_ids: tuple[str, ...], calibration: bool,
             scan: bool = True) -> AttentionDump:
        """Load one dump by key; ``scan=False`` checks only the canonical
        filename (hot paths probe many subsets that do not exist)."""
        path = self._path(query_id, doc_ids, calibration)
        if path.exists():
            with open(path, "rb") as fh:
                return read_dump(fh)
        if scan:
            for dump in self.iter_dumps():
                if (
                    dump.query_id == query_id
                    and dump.doc_ids == tuple(doc_ids)
                    and dump.calibration == calibration
                ):
                    return dump
        raise FileNotFoundError(
            f"no {'null' if calibration else 'real'} dump for query {query_id!r} "
            f"subset {subset_key(doc_ids)} under {self.root}"
        )

    def iter_dumps(self) -> Iterator[AttentionDump]:
        for path in sorted(self.root.glob("*.icra")):
            with open(path, "rb") as fh:
                yield read_dump(fh)

    def iter_pairs(self) -> Iterator[tuple[AttentionDump, AttentionDump]]:
        """Yield (real, null) pairs grouped by (query_id, doc subset)."""
        real: dict[tuple[str, tuple[str, ...]], AttentionDump] = {}
        null: dict[tuple[str, tuple[str, ...]], AttentionDump] = {}
        for dump in self.iter_dumps():
            key = (dump.query_id, dump.doc_ids)
            (null if dump.calibration else real)[key] = dump
        for key in sorted(real):
            if key in null:
                yield real[key], null[key]

    def query_ids(self) -> list[str]:
        return sorted({d.query_id for d in self.iter_dumps()})
