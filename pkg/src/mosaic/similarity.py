"""Pairwise painting similarity matrices and their on-disk formats.

Two kinds of matrix are supported: ``cosine`` matrices computed here from
ingested embedding vectors, and ``ingested-probability`` matrices produced
by an external matcher and loaded as-is (values must lie in [0, 1]).

On-disk formats are plain text:

``MOSAIC-EMB v1 <m> <dim>`` header, then one line per painting:
``<id> <f1> ... <fdim>``.

``MOSAIC-SIM v1 <m> <kind>`` header, a line of the m painting ids, then m
rows of m floats.  Ids are opaque strings without whitespace.  Values are
written with full float64 precision so a save/load round-trip is lossless.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from mosaic.dataset import Collection

KIND_COSINE = "cosine"
KIND_PROBABILITY = "ingested-probability"
_KINDS = (KIND_COSINE, KIND_PROBABILITY)

_FLOAT_FMT = "%.17g"


class FormatError(ValueError):
    """An embedding or matrix file violates its declared format."""


@dataclass(frozen=True)
class EmbeddingTable:
    """Per-painting latent feature vectors, all of one dimension."""

    dim: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"embedding dim must be positive, got {self.dim}")
        for pid, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise ValueError(
                    f"embedding for {pid!r} has shape {vec.shape}, expected ({self.dim},)"
                )
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"embedding for {pid!r} contains non-finite components")


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense m x m similarity matrix over an ordered id list."""

    ids: tuple[str, ...]
    values: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        m = len(self.ids)
        if len(set(self.ids)) != m:
            raise ValueError("similarity matrix ids must be unique")
        if self.values.shape != (m, m):
            raise ValueError(f"matrix shape {self.values.shape} does not match {m} ids")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("similarity matrix contains non-finite values")
        if self.kind == KIND_COSINE:
            if not np.allclose(self.values, self.values.T, atol=1e-9, rtol=0.0):
                raise ValueError("cosine matrix must be symmetric")
        else:
            if self.values.min() < 0.0 or self.values.max() > 1.0:
                raise ValueError("ingested-probability matrix values must lie in [0, 1]")

    @property
    def m(self) -> int:
        return len(self.ids)

    def index_of(self, painting_id: str) -> int:
        try:
            return self._index[painting_id]
        except AttributeError:
            index = {pid: i for i, pid in enumerate(self.ids)}
            object.__setattr__(self, "_index", index)
            return index[painting_id]

    def row(self, painting_id: str) -> np.ndarray:
        return self.values[self.index_of(painting_id)]


def cosine_similarity_matrix(embeddings: EmbeddingTable) -> SimilarityMatrix:
    """Cosine similarity of every painting pair.

    The result is exactly symmetric with a unit diagonal.  Zero-norm vectors
    are rejected, reported with their painting id.
    """
    ids = tuple(embeddings.vectors.keys())
    if not ids:
        raise ValueError("embedding table is empty")
    matrix = np.stack([embeddings.vectors[pid] for pid in ids]).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    dead = [ids[i] for i in np.nonzero(norms == 0.0)[0]]
    if dead:
        raise ValueError(f"zero-norm embedding for painting(s): {dead}")
    unit = matrix / norms[:, None]
    values = unit @ unit.T
    # enforce exact symmetry and unit diagonal against float round-off
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(ids=ids, values=values, kind=KIND_COSINE)


def _check_id(pid: str, where: str) -> str:
    if not pid or any(ch.isspace() for ch in pid):
        raise FormatError(f"{where}: id {pid!r} is empty or contains whitespace")
    return pid


def save_embeddings(table: EmbeddingTable, path: str) -> None:
    ids = list(table.vectors.keys())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"MOSAIC-EMB v1 {len(ids)} {table.dim}\n")
        for pid in ids:
            _check_id(pid, "save_embeddings")
            row = " ".join(_FLOAT_FMT % v for v in table.vectors[pid])
            fh.write(f"{pid} {row}\n")


def load_embeddings(path: str) -> EmbeddingTable:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "MOSAIC-EMB" or header[1] != "v1":
            raise FormatError(f"{path}: not a MOSAIC-EMB v1 file")
        try:
            m, dim = int(header[2]), int(header[3])
        except ValueError:
            raise FormatError(f"{path}: malformed MOSAIC-EMB header") from None
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            pid = parts[0]
            if pid in vectors:
                raise FormatError(f"{path}:{lineno}: duplicate id {pid!r}")
            if len(parts) - 1 != dim:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim} components for {pid!r}, got {len(parts) - 1}"
                )
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric component") from None
            vectors[pid] = vec
    if len(vectors) != m:
        raise FormatError(f"{path}: header promises {m} rows, found {len(vectors)}")
    try:
        return EmbeddingTable(dim=dim, vectors=vectors)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_similarity_matrix(matrix: SimilarityMatrix, path: str) -> None:
    for pid in matrix.ids:
        _check_id(pid, "save_similarity_matrix")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"MOSAIC-SIM v1 {matrix.m} {matrix.kind}\n")
        fh.write(" ".join(matrix.ids) + "\n")
        for row in matrix.values:
            fh.write(" ".join(_FLOAT_FMT % v for v in row) + "\n")


def load_similarity_matrix(path: str, collection: Collection | None = None) -> SimilarityMatrix:
    """Load a MOSAIC-SIM file, validating shape, range, and (optionally) ids.

    When ``collection`` is given, the matrix ids must cover the collection
    exactly; mismatches are reported with the offending ids.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "MOSAIC-SIM" or header[1] != "v1":
            raise FormatError(f"{path}: not a MOSAIC-SIM v1 file")
        try:
            m = int(header[2])
        except ValueError:
            raise FormatError(f"{path}: malformed MOSAIC-SIM header") from None
        kind = header[3]
        if kind not in _KINDS:
            raise FormatError(f"{path}: unknown matrix kind {kind!r}")
        ids = tuple(fh.readline().split())
        if len(ids) != m:
            raise FormatError(f"{path}: header promises {m} ids, found {len(ids)}")
        if len(set(ids)) != m:
            raise FormatError(f"{path}: duplicate painting ids in header")
        rows = []
        for lineno, line in enumerate(fh, start=3):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != m:
                raise FormatError(
                    f"{path}:{lineno}: non-square matrix, expected {m} values, got {len(parts)}"
                )
            try:
                rows.append(np.array([float(x) for x in parts], dtype=np.float64))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value") from None
    if len(rows) != m:
        raise FormatError(f"{path}: non-square matrix, expected {m} rows, found {len(rows)}")
    values = np.stack(rows) if rows else np.zeros((0, 0))
    if kind == KIND_PROBABILITY and rows:
        low, high = values.min(), values.max()
        if low < 0.0 or high > 1.0:
            raise FormatError(
                f"{path}: probability matrix values outside [0, 1] (min {low}, max {high})"
            )
    try:
        matrix = SimilarityMatrix(ids=ids, values=values, kind=kind)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if collection is not None:
        missing = [pid for pid in collection.ids if pid not in set(ids)]
        extra = [pid for pid in ids if pid not in collection]
        if missing or extra:
            raise FormatError(
                f"{path}: matrix ids do not match the collection"
                f" (missing {missing[:5]}, extra {extra[:5]})"
            )
    return matrix
