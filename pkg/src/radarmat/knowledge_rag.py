"""
Material knowledge base: document chunking, embedding, an exact cosine index
and top-k retrieval.
"""

import hashlib
import logging
import re
import struct
import threading
from importlib import resources
from pathlib import Path
from typing import Annotated, NamedTuple, Protocol, Sequence, runtime_checkable

import numpy as np
import pydantic
import requests
from pydantic import Field
from typing_extensions import Self

from .config_base import ConfigBase
from .errors import (
    DomainError,
    EmbedderMismatchError,
    EmptyIndexError,
    EndpointError,
    EndpointUnreachableError,
    IndexFormatError,
    InvalidConfigError,
    UnembeddableError,
)


logger = logging.getLogger(__name__)

INDEX_MAGIC = "RMKI"
INDEX_VERSION = 1
SCORE_DECIMALS = 12
SNAP_FRACTION = 0.1
DOCUMENT_SUFFIXES = (".md", ".txt")

_TOKEN = re.compile(r"[^\W_]+")
_U32 = struct.Struct("<I")
_SPAN = struct.Struct("<QQ")


class ChunkSettings(ConfigBase):
    chunk_size: Annotated[int, Field(ge=1, description="Chunk length, characters")] = 512
    overlap: Annotated[
        int, Field(ge=0, description="Characters shared by consecutive chunks")
    ] = 64

    @pydantic.model_validator(mode="after")
    def check_overlap(self) -> Self:
        if self.overlap >= self.chunk_size:
            raise ValueError(
                f"overlap ({self.overlap}) must be smaller than chunk_size ({self.chunk_size})"
            )
        return self


class Chunk(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    doc_id: str
    seq: Annotated[int, Field(ge=0)]
    text: Annotated[str, Field(min_length=1)]
    char_span: tuple[int, int]


class SearchHit(NamedTuple):
    chunk: Chunk
    score: float


def chunk_document(
    doc_id: str,
    text: str,
    chunk_size: int = 512,
    overlap: int = 64,
) -> list[Chunk]:
    """
    Split `text` greedily into chunks of at most `chunk_size` characters, each
    sharing exactly `overlap` characters with its successor.

    A chunk end is moved back to just after the last whitespace found within
    the final 10% of the chunk, provided the chunk stays longer than `overlap`.
    """
    if chunk_size < 1 or not 0 <= overlap < chunk_size:
        raise InvalidConfigError(
            f"need 0 <= overlap < chunk_size, got overlap={overlap}, chunk_size={chunk_size}"
        )
    if not text:
        raise DomainError(f"document {doc_id!r} is empty")

    snap_window = int(chunk_size * SNAP_FRACTION)
    chunks = []
    start = 0
    while True:
        end = min(start + chunk_size, len(text))
        if end < len(text):
            lowest = max(start + overlap, end - snap_window)
            for i in range(end - 1, lowest - 1, -1):
                if text[i].isspace():
                    end = i + 1
                    break
        chunks.append(
            Chunk(doc_id=doc_id, seq=len(chunks), text=text[start:end], char_span=(start, end))
        )
        if end >= len(text):
            return chunks
        start = end - overlap


@runtime_checkable
class Embedder(Protocol):
    embedder_id: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def _normalized(vector: np.ndarray, text: str) -> np.ndarray:
    norm = np.linalg.norm(vector)
    if norm == 0 or not np.isfinite(norm):
        raise UnembeddableError(f"text {text[:40]!r} maps to a zero vector")
    return vector / norm


class HashedBowEmbedder:
    """
    Signed feature hashing of lowercase alphanumeric tokens.

    Runs offline and is bit-for-bit deterministic across processes.
    """

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.embedder_id = f"hashed-bow-{dim}"

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim)
        for token in _TOKEN.findall(text.lower()):
            h = int.from_bytes(
                hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little"
            )
            vector[h % self.dim] += -1.0 if (h >> 8) & 1 else 1.0
        return _normalized(vector, text)


class HttpEmbedder:
    """Embeddings from an OpenAI-compatible `/embeddings` endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        *,
        api_key: str | None = None,
        timeout_s: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.embedder_id = f"http:{model}:{dim}"
        self.timeout_s = timeout_s
        self._session = session or requests.Session()
        self._headers = {"Content-Type": "application/json"}
        if api_key:
            self._headers["Authorization"] = f"Bearer {api_key}"

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise UnembeddableError("cannot embed blank text")
        url = f"{self.base_url}/embeddings"
        try:
            response = self._session.post(
                url,
                json={"model": self.model, "input": text},
                headers=self._headers,
                timeout=self.timeout_s,
            )
        except (
            requests.exceptions.InvalidSchema,
            requests.exceptions.MissingSchema,
            requests.exceptions.InvalidURL,
        ) as e:
            raise InvalidConfigError(f"invalid embedding endpoint URL {url!r}: {e}") from e
        except requests.RequestException as e:
            raise EndpointUnreachableError(f"{url}: {e}") from e
        if response.status_code != 200:
            raise EndpointError(response.status_code, response.text[:200])
        try:
            values = response.json()["data"][0]["embedding"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise EndpointError(response.status_code, f"malformed embedding response: {e}") from e
        vector = np.asarray(values, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise EmbedderMismatchError(
                f"{self.model} returned {vector.shape[0]} dimensions, expected {self.dim}"
            )
        return _normalized(vector, text)


class KnowledgeIndex:
    """
    An exact cosine-similarity index over embedded chunks.

    Readers work on a snapshot taken under the lock, so searches may run
    concurrently with each other; additions are exclusive.
    """

    def __init__(self, embedder_id: str, dim: int):
        if not embedder_id or any(c.isspace() for c in embedder_id):
            raise InvalidConfigError(f"invalid embedder id {embedder_id!r}")
        self.embedder_id = embedder_id
        self.dim = dim
        self._chunks: list[Chunk] = []
        self._vectors: list[np.ndarray] = []
        self._keys: set[tuple[str, int]] = set()
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._chunks)

    @classmethod
    def for_embedder(cls, embedder: Embedder) -> Self:
        return cls(embedder.embedder_id, embedder.dim)

    @property
    def entries(self) -> list[tuple[Chunk, np.ndarray]]:
        with self._lock:
            return list(zip(self._chunks, self._vectors))

    def add(self, chunk: Chunk, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise IndexFormatError(f"vector has shape {vector.shape}, index dim is {self.dim}")
        if abs(np.linalg.norm(vector) - 1.0) > 1e-9:
            raise IndexFormatError("index vectors must have unit norm")
        key = (chunk.doc_id, chunk.seq)
        with self._lock:
            if key in self._keys:
                raise IndexFormatError(f"chunk {key} is already indexed")
            self._keys.add(key)
            self._chunks.append(chunk)
            self._vectors.append(vector)

    def add_document(
        self,
        doc_id: str,
        text: str,
        embedder: Embedder,
        settings: ChunkSettings | None = None,
    ) -> list[Chunk]:
        self._check_embedder(embedder)
        settings = settings or ChunkSettings()
        chunks = chunk_document(doc_id, text, settings.chunk_size, settings.overlap)
        vectors = [embedder.embed(chunk.text) for chunk in chunks]
        with self._lock:
            for chunk, vector in zip(chunks, vectors):
                self.add(chunk, vector)
        return chunks

    def _check_embedder(self, embedder: Embedder) -> None:
        if embedder.embedder_id != self.embedder_id:
            raise EmbedderMismatchError(
                f"index was built with {self.embedder_id!r}, not {embedder.embedder_id!r}"
            )

    def search(self, query: str, k: int, embedder: Embedder) -> list[SearchHit]:
        """
        The `k` chunks most similar to `query`, best first.

        Scores are rounded to 12 decimals so that equal cosines tie exactly;
        ties go to the smaller (doc_id, seq).
        """
        if k < 1:
            raise DomainError(f"k must be at least 1, got {k}")
        self._check_embedder(embedder)
        with self._lock:
            chunks = list(self._chunks)
            matrix = np.array(self._vectors)
        if not chunks:
            raise EmptyIndexError("the knowledge index is empty")

        q = embedder.embed(query)
        scores = np.round(matrix @ q, SCORE_DECIMALS)
        doc_ids = np.array([c.doc_id for c in chunks])
        seqs = np.array([c.seq for c in chunks])
        order = np.lexsort((seqs, doc_ids, -scores))[:k]
        return [SearchHit(chunks[i], float(scores[i])) for i in order]

    def save(self, path: Path | str) -> None:
        with self._lock:
            entries = list(zip(self._chunks, self._vectors))
        with open(path, "wb") as f:
            header = f"{INDEX_MAGIC} {INDEX_VERSION} {self.embedder_id} {self.dim} {len(entries)}\n"
            f.write(header.encode("utf-8"))
            for chunk, vector in entries:
                doc_id = chunk.doc_id.encode("utf-8")
                text = chunk.text.encode("utf-8")
                f.write(_U32.pack(len(doc_id)) + doc_id)
                f.write(_U32.pack(chunk.seq))
                f.write(_SPAN.pack(*chunk.char_span))
                f.write(_U32.pack(len(text)) + text)
                f.write(vector.astype("<f8").tobytes())
        logger.debug("saved %d chunk(s) to %s", len(entries), path)

    @classmethod
    def load(cls, path: Path | str) -> Self:
        raw = Path(path).read_bytes()
        newline = raw.find(b"\n")
        if newline < 0 or not raw.startswith(INDEX_MAGIC.encode("ascii") + b" "):
            raise IndexFormatError(f"{path}: not a knowledge index")
        try:
            _, version, embedder_id, dim, count = raw[:newline].decode("utf-8").split(" ")
            version, dim, count = int(version), int(dim), int(count)
        except ValueError as e:
            raise IndexFormatError(f"{path}: malformed index header") from e
        if version != INDEX_VERSION:
            raise IndexFormatError(f"{path}: unsupported index version {version}")

        index = cls(embedder_id, dim)
        offset = newline + 1

        def take(n: int) -> bytes:
            nonlocal offset
            if offset + n > len(raw):
                raise IndexFormatError(f"{path}: truncated index")
            block = raw[offset : offset + n]
            offset += n
            return block

        for _ in range(count):
            doc_id = take(_U32.unpack(take(4))[0]).decode("utf-8")
            seq = _U32.unpack(take(4))[0]
            span = _SPAN.unpack(take(_SPAN.size))
            text = take(_U32.unpack(take(4))[0]).decode("utf-8")
            vector = np.frombuffer(take(8 * dim), dtype="<f8").astype(np.float64)
            index.add(Chunk(doc_id=doc_id, seq=seq, text=text, char_span=span), vector)
        if offset != len(raw):
            raise IndexFormatError(f"{path}: trailing bytes after {count} entries")
        return index


def search_topk(
    index: KnowledgeIndex,
    query: str,
    k: int,
    embedder: Embedder | None = None,
) -> list[SearchHit]:
    return index.search(query, k, embedder or HashedBowEmbedder())


def ingest_directory(
    index: KnowledgeIndex,
    directory: Path | str,
    embedder: Embedder,
    settings: ChunkSettings | None = None,
) -> dict[str, int]:
    """Index every Markdown and plain-text file under `directory`; returns chunks per document."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidConfigError(f"{directory} is not a directory")
    counts = {}
    paths = sorted(p for p in directory.rglob("*") if p.suffix.lower() in DOCUMENT_SUFFIXES)
    for path in paths:
        doc_id = path.relative_to(directory).as_posix()
        text = path.read_text(encoding="utf-8")
        if not text.strip():
            logger.warning("skipping empty document %s", doc_id)
            continue
        counts[doc_id] = len(index.add_document(doc_id, text, embedder, settings))
        logger.info("indexed %s: %d chunk(s)", doc_id, counts[doc_id])
    return counts


def packaged_knowledge_dir() -> Path:
    """The reference documents shipped with radarmat."""
    return Path(str(resources.files("radarmat") / "knowledge"))


def build_index(
    documents: Sequence[tuple[str, str]],
    embedder: Embedder | None = None,
    settings: ChunkSettings | None = None,
) -> KnowledgeIndex:
    """An index over in-memory `(doc_id, text)` pairs."""
    embedder = embedder or HashedBowEmbedder()
    index = KnowledgeIndex.for_embedder(embedder)
    for doc_id, text in documents:
        index.add_document(doc_id, text, embedder, settings)
    return index
