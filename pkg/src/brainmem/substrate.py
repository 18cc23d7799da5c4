"""Unified storage for every record kind, with canonical serialization.

All regions share one :class:`Substrate`. It owns id allocation, the frozen
flag, the single writer lock, and the ``.bma`` archive format: a zip whose
first member is ``manifest.json`` followed by one line-delimited JSON file per
store. Each record line is ``json.dumps(record, sort_keys=True,
separators=(",", ":"), ensure_ascii=False)``, so the same state always yields
the same bytes and the same :meth:`Substrate.state_digest`.
"""

from __future__ import annotations

import hashlib
import json
import threading
import zipfile
import zlib
from pathlib import Path
from typing import Callable, Iterator

from .config import EngineConfig
from .errors import ArchiveCorrupt, FrozenState, InvariantViolation, UnknownId, VersionMismatch
from .records import RECORD_TYPES, MemoryId, Record, WmItem

KINDS = ("episodic", "semantic", "timeline", "salience", "procedural")
ID_PREFIX = {"episodic": "ep", "semantic": "sf", "timeline": "tl", "salience": "sl", "procedural": "pp"}
FORMAT_VERSION = 1
MANIFEST = "manifest.json"
WM_FILE = "working_memory.jsonl"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def id_index(memory_id: MemoryId) -> int:
    return int(memory_id.rsplit("-", 1)[1])


def id_sort_key(memory_id: MemoryId) -> tuple[int, str]:
    return (id_index(memory_id), memory_id)


def canonical_line(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Substrate:
    """Record store shared by all memory regions.

    Mutating methods take ``lock`` and refuse to run when ``config.frozen``;
    readers that need a consistent multi-store view hold ``lock`` as well.
    """

    def __init__(self, config: EngineConfig | None = None):
        self.config = config or EngineConfig()
        self._stores: dict[str, dict[MemoryId, Record]] = {k: {} for k in KINDS}
        self.working_memory: list[WmItem] = []
        self.next_index = 0
        self.version = 0
        self.kind_version = {k: 0 for k in KINDS + ("working_memory",)}
        self.lock = threading.RLock()

    # -- write path -------------------------------------------------------

    def check_writable(self, operation: str = "write") -> None:
        if self.config.frozen:
            raise FrozenState(operation)

    def _bump(self, kind: str | None = None) -> None:
        self.version += 1
        if kind is not None:
            self.kind_version[kind] += 1

    def put_record(self, kind: str, record: Record) -> MemoryId:
        """Store ``record`` under a fresh id. Never enforces capacity."""
        with self.lock:
            self.check_writable(f"put_record({kind})")
            if kind not in self._stores:
                raise InvariantViolation("kind", f"unknown record kind {kind!r}")
            record.validate()
            memory_id = f"{ID_PREFIX[kind]}-{self.next_index}"
            record.id = memory_id
            self._stores[kind][memory_id] = record
            self.next_index += 1
            self._bump(kind)
            return memory_id

    def update(self, kind: str, memory_id: MemoryId, **changes) -> Record:
        with self.lock:
            self.check_writable(f"update({kind})")
            record = self.get(kind, memory_id)
            backup = {name: getattr(record, name) for name in changes}
            for name, value in changes.items():
                setattr(record, name, value)
            try:
                record.validate()
            except InvariantViolation:
                for name, value in backup.items():
                    setattr(record, name, value)
                raise
            self._bump(kind)
            return record

    def delete(self, kind: str, memory_id: MemoryId) -> Record:
        with self.lock:
            self.check_writable(f"delete({kind})")
            try:
                record = self._stores[kind].pop(memory_id)
            except KeyError:
                raise UnknownId(memory_id) from None
            self._bump(kind)
            return record

    def set_working_memory(self, items: list[WmItem]) -> None:
        with self.lock:
            self.check_writable("working memory write")
            for item in items:
                item.validate()
            self.working_memory = list(items)
            self._bump("working_memory")

    def freeze(self) -> None:
        with self.lock:
            self.config.frozen = True
            self._bump()

    # -- read path --------------------------------------------------------

    def get(self, kind: str, memory_id: MemoryId) -> Record:
        try:
            return self._stores[kind][memory_id]
        except KeyError:
            raise UnknownId(memory_id) from None

    def has(self, kind: str, memory_id: MemoryId) -> bool:
        return memory_id in self._stores[kind]

    def count(self, kind: str) -> int:
        return len(self._stores[kind])

    def records(self, kind: str) -> Iterator[Record]:
        return iter(list(self._stores[kind].values()))

    def scan(self, kind: str, where: Callable[[Record], bool] | None = None, **equals) -> list[Record]:
        """Records of ``kind`` in insertion order matching a predicate and/or field equalities."""
        out = []
        for record in self._stores[kind].values():
            if any(getattr(record, k) != v for k, v in equals.items()):
                continue
            if where is not None and not where(record):
                continue
            out.append(record)
        return out

    # -- canonical form ---------------------------------------------------

    def record_lines(self, kind: str) -> list[str]:
        if kind == "working_memory":
            return [canonical_line(item.to_dict()) for item in self.working_memory]
        return [canonical_line(r.to_dict()) for r in self._stores[kind].values()]

    def state_digest(self) -> str:
        h = hashlib.sha256()
        with self.lock:
            h.update(b"config\t" + canonical_line(self.config.to_dict()).encode() + b"\n")
            h.update(f"next_index\t{self.next_index}\n".encode())
            for kind in KINDS + ("working_memory",):
                h.update(f"#{kind}\n".encode())
                for line in self.record_lines(kind):
                    h.update(line.encode("utf-8") + b"\n")
        return h.hexdigest()

    # -- archives ---------------------------------------------------------

    def export_archive(self, path: str | Path) -> dict:
        """Write a ``.bma`` archive; returns the manifest."""
        with self.lock:
            files = {}
            payloads = {}
            for kind in KINDS + ("working_memory",):
                name = WM_FILE if kind == "working_memory" else f"{kind}.jsonl"
                lines = self.record_lines(kind)
                body = "".join(line + "\n" for line in lines).encode("utf-8")
                payloads[name] = body
                files[name] = {"sha256": hashlib.sha256(body).hexdigest(), "lines": len(lines)}
            manifest = {
                "format": "bma",
                "format_version": FORMAT_VERSION,
                "counts": {k: self.count(k) for k in KINDS} | {"working_memory": len(self.working_memory)},
                "config": self.config.to_dict(),
                "next_index": self.next_index,
                "files": files,
                "state_digest": self.state_digest(),
            }
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            _write_member(zf, MANIFEST, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
            for name, body in payloads.items():
                _write_member(zf, name, body)
        return manifest

    @classmethod
    def import_archive(cls, path: str | Path) -> "Substrate":
        """Load a ``.bma`` archive, verifying manifest, checksums, counts and digest."""
        try:
            with zipfile.ZipFile(path) as zf:
                names = zf.namelist()
                if MANIFEST not in names:
                    raise ArchiveCorrupt("manifest.json missing")
                manifest = json.loads(zf.read(MANIFEST).decode("utf-8"))
                if not isinstance(manifest, dict) or manifest.get("format") != "bma":
                    raise ArchiveCorrupt("manifest is not a bma manifest")
                if manifest.get("format_version") != FORMAT_VERSION:
                    raise VersionMismatch(
                        f"archive format {manifest.get('format_version')!r}, expected {FORMAT_VERSION}")
                bodies = {}
                for name, meta in manifest["files"].items():
                    if name not in names:
                        raise ArchiveCorrupt(f"{name} missing")
                    body = zf.read(name)
                    if hashlib.sha256(body).hexdigest() != meta["sha256"]:
                        raise ArchiveCorrupt(f"{name} checksum mismatch")
                    bodies[name] = body
        except (zipfile.BadZipFile, zlib.error, EOFError) as exc:
            raise ArchiveCorrupt(f"not a readable archive: {exc}") from exc
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ArchiveCorrupt(f"malformed manifest: {exc}") from exc

        try:
            store = cls(EngineConfig.from_dict(manifest["config"]))
            for kind in KINDS:
                record_type = RECORD_TYPES[kind]
                lines = _split_lines(bodies[f"{kind}.jsonl"])
                if len(lines) != manifest["counts"][kind] or len(lines) != manifest["files"][f"{kind}.jsonl"]["lines"]:
                    raise ArchiveCorrupt(f"{kind}.jsonl record count mismatch")
                for line in lines:
                    record = record_type.from_dict(json.loads(line))
                    record.validate()
                    store._stores[kind][record.id] = record
            wm_lines = _split_lines(bodies[WM_FILE])
            if len(wm_lines) != manifest["counts"]["working_memory"]:
                raise ArchiveCorrupt("working memory count mismatch")
            store.working_memory = [WmItem.from_dict(json.loads(line)) for line in wm_lines]
            store.next_index = int(manifest["next_index"])
        except ArchiveCorrupt:
            raise
        except Exception as exc:  # any decode/validation failure means a damaged archive
            raise ArchiveCorrupt(f"invalid record: {exc}") from exc

        if store.state_digest() != manifest.get("state_digest"):
            raise ArchiveCorrupt("state digest mismatch after import")
        return store


def _write_member(zf: zipfile.ZipFile, name: str, body: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, body)


def _split_lines(body: bytes) -> list[str]:
    text = body.decode("utf-8")
    if not text:
        return []
    if not text.endswith("\n"):
        raise ArchiveCorrupt("record file truncated (missing final newline)")
    return text[:-1].split("\n")
