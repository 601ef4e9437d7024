"""Categorized knowledge store (the MatSciKB).

Entries are key/value records hung on a category tree. The store supports
CRUD, bulk import from line-delimited record files, statistics, and a
save/load round trip (entries file + taxonomy document).
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .errors import KbError, KbImportError, TaxonomyError

log = logging.getLogger(__name__)

ROOT_LABEL = "Material Science"

# Top-level categories of the default tree, in canonical order.
DEFAULT_CATEGORIES = (
    "Miscellaneous",
    "Material testing",
    "Fluid",
    "Material characterization",
    "Magnetism",
    "Transport phenomena",
    "Material processing",
    "Electrical",
    "Phase transition",
    "Material Applications",
    "Material manufacturing",
    "Mechanical",
    "Atomic structure",
    "Thermodynamics",
    "Formula",
    "Fundamental_Science_Knowledge",
)

FALLBACK_CATEGORY = "Miscellaneous"


class SourceKind(str, Enum):
    ARXIV_PAPER = "arxiv_paper"
    WIKIPEDIA = "wikipedia"
    TEXTBOOK = "textbook"
    DATASET_SUPPORT = "dataset_support"
    FORMULA = "formula"
    GENERATED_EXAMPLE = "generated_example"


@dataclass(frozen=True)
class KbEntry:
    """One knowledge item: a short key, a body, a source kind, a category path."""

    id: str | None
    key: str
    value: str
    source_kind: SourceKind
    category: tuple[str, ...]

    def category_path(self) -> str:
        return "/".join(self.category)


@dataclass
class TaxonomyNode:
    label: str
    children: list["TaxonomyNode"] = field(default_factory=list)

    def child(self, label: str) -> "TaxonomyNode | None":
        for node in self.children:
            if node.label == label:
                return node
        return None


class Taxonomy:
    """Category tree with a single root; sibling labels are unique."""

    def __init__(self, root: TaxonomyNode):
        self._check_unique(root)
        self.root = root

    @staticmethod
    def _check_unique(node: TaxonomyNode) -> None:
        labels = [c.label for c in node.children]
        if len(labels) != len(set(labels)):
            raise TaxonomyError(f"duplicate sibling labels under {node.label!r}")
        for child in node.children:
            Taxonomy._check_unique(child)

    @classmethod
    def default(cls) -> "Taxonomy":
        root = TaxonomyNode(ROOT_LABEL, [TaxonomyNode(c) for c in DEFAULT_CATEGORIES])
        return cls(root)

    def resolve(self, path: tuple[str, ...] | list[str]) -> TaxonomyNode:
        """Walk a root-to-leaf label path; raise TaxonomyError if it falls off the tree.

        Entries must live strictly below the root so that every entry has a
        top-level category for the statistics breakdown.
        """
        path = tuple(path)
        if not path or path[0] != self.root.label:
            raise TaxonomyError(f"category path must start at {self.root.label!r}: "
                                f"{'/'.join(path) or '(empty)'}")
        if len(path) < 2:
            raise TaxonomyError("category path must name a node below the root")
        node = self.root
        for label in path[1:]:
            nxt = node.child(label)
            if nxt is None:
                raise TaxonomyError(f"unknown category path: {'/'.join(path)}")
            node = nxt
        return node

    def to_doc(self) -> dict:
        def render(node: TaxonomyNode) -> dict:
            return {"Children": {c.label: render(c) for c in node.children}}

        return {self.root.label: render(self.root)}

    @classmethod
    def from_doc(cls, doc: dict) -> "Taxonomy":
        if not isinstance(doc, dict) or len(doc) != 1:
            raise TaxonomyError("taxonomy document must have exactly one root label")

        def parse(label: str, body: dict) -> TaxonomyNode:
            children = body.get("Children", {}) if isinstance(body, dict) else {}
            return TaxonomyNode(label, [parse(k, v) for k, v in children.items()])

        root_label, body = next(iter(doc.items()))
        return cls(parse(root_label, body))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_doc(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Taxonomy":
        return cls.from_doc(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class KbStats:
    total: int
    per_source: dict[str, int]
    per_category: dict[str, int]


@dataclass
class ImportReport:
    imported: int
    diagnostics: list[tuple[int, str]] = field(default_factory=list)


def stats_from_manifest(path: str | Path) -> KbStats:
    """Build KbStats from a manifest of per-source / per-category counts.

    Used for corpora too large to ship: the manifest carries the counts and
    this checks the internal consistency (total equals both breakdowns).
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    per_source = {str(k): int(v) for k, v in doc.get("per_source", {}).items()}
    per_category = {str(k): int(v) for k, v in doc.get("per_category", {}).items()}
    if not per_source:
        raise KbError(f"manifest {path} has no per_source counts")
    total = sum(per_source.values())
    if per_category and sum(per_category.values()) != total:
        raise KbError(f"manifest {path}: per_category sums to "
                      f"{sum(per_category.values())}, per_source to {total}")
    return KbStats(total=total, per_source=per_source, per_category=per_category)


_ID_SUFFIX = re.compile(r"-(\d+)$")

ENTRIES_FILENAME = "entries.jsonl"
TAXONOMY_FILENAME = "taxonomy.json"


class KnowledgeBase:
    """Mutable entry store over a fixed taxonomy.

    Safe to share across threads: mutations and reads are serialized on an
    internal lock, which satisfies the many-readers-or-one-writer contract.
    Index builds should work from ``snapshot()``.
    """

    def __init__(self, taxonomy: Taxonomy | None = None, id_prefix: str = "kb"):
        self.taxonomy = taxonomy or Taxonomy.default()
        self.id_prefix = id_prefix
        self._entries: dict[str, KbEntry] = {}
        self._counter = 0
        self._lock = threading.RLock()

    # -- CRUD ---------------------------------------------------------------

    def put_entry(self, entry: KbEntry) -> str:
        """Create (no id) or fully replace (existing id) an entry; returns its id."""
        self._validate(entry)
        with self._lock:
            if entry.id:
                entry_id = entry.id
            else:
                self._counter += 1
                entry_id = f"{self.id_prefix}-{self._counter:06d}"
                entry = replace(entry, id=entry_id)
            self._entries[entry_id] = replace(entry, id=entry_id)
            return entry_id

    def get_entry(self, entry_id: str) -> KbEntry | None:
        with self._lock:
            return self._entries.get(entry_id)

    def delete_entry(self, entry_id: str) -> bool:
        with self._lock:
            return self._entries.pop(entry_id, None) is not None

    def _validate(self, entry: KbEntry) -> None:
        if not entry.key:
            raise KbError("entry key must be non-empty")
        if not isinstance(entry.source_kind, SourceKind):
            raise KbError(f"unknown source kind: {entry.source_kind!r}")
        if not entry.value and entry.source_kind is not SourceKind.DATASET_SUPPORT:
            raise KbError(f"empty value only allowed for "
                          f"{SourceKind.DATASET_SUPPORT.value} entries")
        self.taxonomy.resolve(entry.category)

    # -- bulk import --------------------------------------------------------

    def import_corpus(self, path: str | Path,
                      source_kind: SourceKind | None = None) -> ImportReport:
        """Import a line-delimited record file.

        Malformed lines are collected with their line numbers and skipped;
        the import continues. ``source_kind`` fills records that carry none.
        Raises KbImportError on an unreadable file or zero valid records.
        """
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise KbImportError(f"cannot read corpus file {path}: {exc}") from exc

        report = ImportReport(imported=0)
        staged: list[KbEntry] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = self._parse_record(line, source_kind)
                self._validate(entry)
                staged.append(entry)
            except (KbError, ValueError) as exc:
                report.diagnostics.append((lineno, str(exc)))
        if not staged:
            raise KbImportError(f"zero valid records in {path}")
        for entry in staged:
            self.put_entry(entry)
            report.imported += 1
        for lineno, msg in report.diagnostics:
            log.warning("import %s line %d: %s", path, lineno, msg)
        return report

    def _parse_record(self, line: str, default_kind: SourceKind | None) -> KbEntry:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise KbError(f"invalid record: {exc}") from exc
        if not isinstance(rec, dict):
            raise KbError("record must be an object")
        key = rec.get("key")
        if not key or not isinstance(key, str):
            raise KbError("record missing non-empty 'key'")
        kind_raw = rec.get("source_kind")
        if kind_raw is None:
            if default_kind is None:
                raise KbError("record missing 'source_kind' and no default given")
            kind = default_kind
        else:
            try:
                kind = SourceKind(kind_raw)
            except ValueError as exc:
                raise KbError(f"unknown source_kind {kind_raw!r}") from exc
        category = rec.get("category")
        if category is None:
            path = (ROOT_LABEL, FALLBACK_CATEGORY)
        elif isinstance(category, str):
            path = tuple(p for p in category.split("/") if p)
        elif isinstance(category, list):
            path = tuple(str(p) for p in category)
        else:
            raise KbError("category must be a path string or label list")
        return KbEntry(id=rec.get("id") or None, key=key,
                       value=str(rec.get("value", "")), source_kind=kind,
                       category=path)

    # -- statistics ---------------------------------------------------------

    def stats(self) -> KbStats:
        with self._lock:
            per_source: dict[str, int] = {}
            per_category: dict[str, int] = {}
            for entry in self._entries.values():
                per_source[entry.source_kind.value] = \
                    per_source.get(entry.source_kind.value, 0) + 1
                top = entry.category[1]
                per_category[top] = per_category.get(top, 0) + 1
            return KbStats(total=len(self._entries),
                           per_source=per_source, per_category=per_category)

    # -- snapshots and persistence ------------------------------------------

    def snapshot(self) -> dict[str, KbEntry]:
        """Point-in-time copy of the entry map, for index builds."""
        with self._lock:
            return dict(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def ids(self) -> list[str]:
        with self._lock:
            return sorted(self._entries)

    def save(self, store_dir: str | Path) -> None:
        store = Path(store_dir)
        store.mkdir(parents=True, exist_ok=True)
        with self._lock:
            lines = []
            for entry_id in sorted(self._entries):
                entry = self._entries[entry_id]
                lines.append(json.dumps({
                    "id": entry.id,
                    "key": entry.key,
                    "value": entry.value,
                    "source_kind": entry.source_kind.value,
                    "category": entry.category_path(),
                }, ensure_ascii=False, sort_keys=True))
            (store / ENTRIES_FILENAME).write_text(
                "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
            self.taxonomy.save(store / TAXONOMY_FILENAME)

    @classmethod
    def load(cls, store_dir: str | Path, id_prefix: str = "kb") -> "KnowledgeBase":
        store = Path(store_dir)
        taxonomy = Taxonomy.load(store / TAXONOMY_FILENAME)
        kb = cls(taxonomy=taxonomy, id_prefix=id_prefix)
        entries_file = store / ENTRIES_FILENAME
        if entries_file.exists() and entries_file.read_text(encoding="utf-8").strip():
            kb.import_corpus(entries_file)
        # resume id assignment after the highest id this store handed out
        for entry_id in kb.ids():
            if entry_id.startswith(f"{id_prefix}-"):
                m = _ID_SUFFIX.search(entry_id)
                if m:
                    kb._counter = max(kb._counter, int(m.group(1)))
        return kb
