"""Embedding matrices, qrels and run files.

Embeddings live in the EMB1 binary format::

    "EMB1" | u32 n | u32 p | n x ( u16 id_len | id (UTF-8) | p x f32 )

all little-endian with no padding. Qrels and runs use the usual TREC text
layouts (4 and 6 whitespace-separated columns).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")
_ID_LEN = struct.Struct("<H")
_F32 = np.dtype("<f4")


class EmbeddingFormatError(ValueError):
    """Base class for malformed EMB1 content."""


class BadMagicError(EmbeddingFormatError):
    pass


class TruncatedPayloadError(EmbeddingFormatError):
    def __init__(self, expected: int, actual: int, where: str):
        super().__init__(
            f"truncated EMB1 payload ({where}): expected at least {expected} bytes, got {actual}"
        )
        self.expected = expected
        self.actual = actual


class TrailingBytesError(EmbeddingFormatError):
    pass


class NonFiniteValueError(EmbeddingFormatError):
    def __init__(self, row: int, col: int, value: float):
        super().__init__(f"non-finite value {value!r} at (row={row}, col={col})")
        self.row = row
        self.col = col


class DuplicateIdError(EmbeddingFormatError):
    def __init__(self, ident: str):
        super().__init__(f"duplicate id {ident!r}")
        self.ident = ident


class QrelsFormatError(ValueError):
    pass


class RunFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Id-indexed ``n x p`` float32 matrix. Rows are read-only once built."""

    ids: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        rows = np.array(self.rows, dtype=np.float32, copy=True)
        if rows.ndim != 2:
            raise ValueError(f"rows must be 2-D, got shape {rows.shape}")
        if rows.shape[1] < 1:
            raise ValueError("embedding dimension must be positive")
        if len(ids) != rows.shape[0]:
            raise ValueError(f"{len(ids)} ids for {rows.shape[0]} rows")
        seen: set[str] = set()
        for ident in ids:
            if ident in seen:
                raise DuplicateIdError(ident)
            seen.add(ident)
        bad = np.argwhere(~np.isfinite(rows))
        if bad.size:
            r, c = (int(v) for v in bad[0])
            raise NonFiniteValueError(r, c, float(rows[r, c]))
        rows.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.n

    @cached_property
    def index(self) -> dict[str, int]:
        return {ident: i for i, ident in enumerate(self.ids)}

    def vector(self, ident: str) -> np.ndarray:
        return self.rows[self.index[ident]]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.rows.shape == other.rows.shape
            and self.rows.tobytes() == other.rows.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    data = Path(path).read_bytes()
    size = len(data)
    if size < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    if size < _HEADER.size:
        raise TruncatedPayloadError(_HEADER.size, size, "header")
    _, n, p = _HEADER.unpack_from(data, 0)
    if p == 0:
        raise EmbeddingFormatError(f"{path}: dimension p must be positive")
    row_bytes = 4 * p
    ids: list[str] = []
    rows = np.empty((n, p), dtype=np.float32)
    off = _HEADER.size
    for r in range(n):
        if off + _ID_LEN.size > size:
            raise TruncatedPayloadError(off + _ID_LEN.size, size, f"id length of record {r}")
        (id_len,) = _ID_LEN.unpack_from(data, off)
        off += _ID_LEN.size
        end = off + id_len + row_bytes
        if end > size:
            raise TruncatedPayloadError(end, size, f"record {r}")
        try:
            ids.append(data[off : off + id_len].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise EmbeddingFormatError(f"record {r}: id is not valid UTF-8") from exc
        off += id_len
        rows[r] = np.frombuffer(data, dtype=_F32, count=p, offset=off)
        off = end
    if off != size:
        raise TrailingBytesError(f"{path}: {size - off} unexpected bytes after {n} records")
    return EmbeddingMatrix(tuple(ids), rows)


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    buf = bytearray(_HEADER.pack(MAGIC, matrix.n, matrix.dim))
    payload = matrix.rows.astype(_F32, copy=False)
    for ident, row in zip(matrix.ids, payload):
        raw = ident.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise EmbeddingFormatError(f"id {ident[:32]!r}... longer than 65535 bytes")
        buf += _ID_LEN.pack(len(raw))
        buf += raw
        buf += row.tobytes()
    Path(path).write_bytes(bytes(buf))


@dataclass(frozen=True)
class Qrels:
    """Relevance judgments; unjudged pairs have grade 0."""

    judgments: Mapping[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        by_query: dict[str, dict[str, int]] = {}
        for (qid, did), grade in self.judgments.items():
            if int(grade) != grade or grade < 0:
                raise QrelsFormatError(f"invalid grade {grade!r} for ({qid}, {did})")
            by_query.setdefault(qid, {})[did] = int(grade)
        object.__setattr__(self, "_by_query", by_query)

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._by_query.get(query_id, {}).get(doc_id, 0)

    def for_query(self, query_id: str) -> dict[str, int]:
        return dict(self._by_query.get(query_id, {}))

    @property
    def query_ids(self) -> list[str]:
        return list(self._by_query)

    def __len__(self) -> int:
        return len(self.judgments)


def parse_qrels(text: str) -> Qrels:
    judgments: dict[tuple[str, str], int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise QrelsFormatError(f"line {lineno}: expected 4 columns, got {len(parts)}")
        qid, _, did, raw = parts
        try:
            grade = int(raw)
        except ValueError:
            raise QrelsFormatError(f"line {lineno}: grade {raw!r} is not an integer") from None
        if grade < 0:
            raise QrelsFormatError(f"line {lineno}: negative grade {grade}")
        judgments[(qid, did)] = grade
    return Qrels(judgments)


def load_qrels(path: str | Path) -> Qrels:
    return parse_qrels(Path(path).read_text(encoding="utf-8"))


class RunEntry(NamedTuple):
    doc_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RunRanking:
    """Ranked output for a single query."""

    query_id: str
    entries: tuple[RunEntry, ...]
    tag: str = "run"

    def __post_init__(self):
        entries = tuple(RunEntry(str(d), float(s), int(r)) for d, s, r in self.entries)
        seen: set[str] = set()
        for pos, e in enumerate(entries, start=1):
            if e.rank != pos:
                raise RunFormatError(f"{self.query_id}: rank {e.rank} at position {pos}")
            if e.doc_id in seen:
                raise RunFormatError(f"{self.query_id}: duplicate doc {e.doc_id!r}")
            seen.add(e.doc_id)
            if pos > 1 and e.score > entries[pos - 2].score:
                raise RunFormatError(f"{self.query_id}: score increases at rank {pos}")
        object.__setattr__(self, "entries", entries)

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def write_run(path: str | Path, rankings: Iterable[RunRanking], tag: str) -> None:
    lines = []
    for ranking in rankings:
        for e in ranking.entries:
            lines.append(f"{ranking.query_id} Q0 {e.doc_id} {e.rank} {e.score:.6f} {tag}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def parse_run(text: str, strict: bool = True) -> list[RunRanking]:
    """Parse TREC run text. Queries keep first-seen order.

    With ``strict=False`` entries are re-ordered by descending score and
    renumbered from 1, which tolerates third-party runs that start ranks at 0
    or skip ranks.
    """
    per_query: dict[str, list[RunEntry]] = {}
    tags: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise RunFormatError(f"line {lineno}: expected 6 columns, got {len(parts)}")
        qid, _, did, rank, score, tag = parts
        try:
            entry = RunEntry(did, float(score), int(rank))
        except ValueError:
            raise RunFormatError(f"line {lineno}: bad rank or score") from None
        per_query.setdefault(qid, []).append(entry)
        tags.setdefault(qid, tag)
    out = []
    for qid, entries in per_query.items():
        if strict:
            ordered = sorted(entries, key=lambda e: e.rank)
        else:
            ranked = sorted(entries, key=lambda e: (-e.score, e.rank))
            ordered = [RunEntry(e.doc_id, e.score, i) for i, e in enumerate(ranked, start=1)]
        out.append(RunRanking(qid, tuple(ordered), tags[qid]))
    return out


def read_run(path: str | Path, strict: bool = True) -> list[RunRanking]:
    return parse_run(Path(path).read_text(encoding="utf-8"), strict=strict)


def matrix_from_rows(ids: Sequence[str], rows) -> EmbeddingMatrix:
    return EmbeddingMatrix(tuple(ids), np.asarray(rows, dtype=np.float32))
