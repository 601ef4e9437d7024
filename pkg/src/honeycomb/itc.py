"""Inductive tool construction: from computational questions to a registry
of reusable atomic functions.

The pipeline splits a question set, asks the provider to write one solver
function per training question, holds every function for human review, and
decomposes only approved functions into atomic functions. Atoms merge into
the registry by normalized signature so equivalent tools from different
questions collapse into one, with provenance accumulating. Every stage
appends to an audit log.
"""

from __future__ import annotations

import ast
import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ItcError, ToolHubError
from .llm_gateway import Gateway
from .tool_hub import (
    KIND_DOMAIN_ATOMIC,
    ParamSpec,
    SemType,
    ToolSpec,
    parse_sem_type,
)

log = logging.getLogger(__name__)

STATUS_PENDING = "pending"
STATUS_APPROVED = "approved"
STATUS_REJECTED = "rejected"

VERDICT_APPROVE = "approve"
VERDICT_REJECT = "reject"

_SIGNATURE_RE = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*->\s*(.+?)\s*$")
_CODE_FENCE_RE = re.compile(r"```(?:python)?\s*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class Question:
    id: str
    text: str


@dataclass(frozen=True)
class TrainSplit:
    train: tuple[Question, ...]
    test: tuple[Question, ...]


@dataclass(frozen=True)
class SignatureInfo:
    name: str
    params: tuple[tuple[str, SemType], ...]
    returns: SemType

    def render(self) -> str:
        body = ", ".join(f"{n}: {t.value}" for n, t in self.params)
        return f"{self.name}({body}) -> {self.returns.value}"


@dataclass(frozen=True)
class GeneratedFunction:
    id: str
    question_id: str
    signature: str
    code: str
    status: str = STATUS_PENDING


@dataclass(frozen=True)
class AtomicFunction:
    name: str
    signature: SignatureInfo
    code: str
    provenance: tuple[str, ...] = ()


class AuditLog:
    """Append-only JSONL event log for the pipeline."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, stage: str, event: str, **fields) -> None:
        record = {"stage": stage, "event": event, **fields}
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    def events(self) -> list[dict]:
        if not self.path.exists():
            return []
        return [json.loads(line)
                for line in self.path.read_text(encoding="utf-8").splitlines()
                if line.strip()]


# -- stage 1: dataset split -------------------------------------------------

def split_dataset(questions: list[Question], ratio: float,
                  seed: int) -> TrainSplit:
    """Seeded shuffle, then the first round(ratio * n) questions train."""
    if not 0.0 <= ratio <= 1.0:
        raise ItcError(f"split ratio must be within [0, 1], got {ratio}")
    ids = [q.id for q in questions]
    if len(set(ids)) != len(ids):
        raise ItcError("duplicate question ids in split input")
    shuffled = list(questions)
    random.Random(seed).shuffle(shuffled)
    n_train = round(ratio * len(shuffled))
    return TrainSplit(train=tuple(shuffled[:n_train]),
                      test=tuple(shuffled[n_train:]))


# -- stage 2: function generation -------------------------------------------

def parse_signature(text: str) -> SignatureInfo:
    match = _SIGNATURE_RE.match(text.strip())
    if not match:
        raise ItcError(f"unparseable signature {text!r}")
    name, params_text, returns_text = match.groups()
    params = []
    if params_text.strip():
        for part in params_text.split(","):
            if ":" not in part:
                raise ItcError(f"parameter {part.strip()!r} lacks a type "
                               f"annotation in signature {text!r}")
            pname, ptype = part.split(":", 1)
            ptype = ptype.split("=", 1)[0]
            try:
                params.append((pname.strip(), parse_sem_type(ptype)))
            except ToolHubError as exc:
                raise ItcError(f"signature {text!r}: {exc}") from exc
    try:
        returns = parse_sem_type(returns_text)
    except ToolHubError as exc:
        raise ItcError(f"signature {text!r}: {exc}") from exc
    return SignatureInfo(name=name, params=tuple(params), returns=returns)


def _extract_block(raw: str, label: str) -> tuple[str, str]:
    lines = raw.splitlines()
    signature = None
    for line in lines:
        if line.strip().startswith(label):
            signature = line.strip()[len(label):].strip()
            break
    if not signature:
        raise ItcError(f"provider output has no {label} line")
    fence = _CODE_FENCE_RE.search(raw)
    if not fence:
        raise ItcError("provider output has no fenced code block")
    code = fence.group(1).strip()
    if not code:
        raise ItcError("provider output has an empty code block")
    return signature, code


def generate_function(gateway: Gateway, question: Question) -> GeneratedFunction:
    """One provider call produces one pending solver function."""
    raw = gateway.run_template("itc_generate", {
        "question_id": question.id, "question": question.text})
    signature, code = _extract_block(raw, "Signature:")
    parse_signature(signature)
    try:
        ast.parse(code)
    except SyntaxError as exc:
        raise ItcError(
            f"generated code for {question.id} is not valid Python: {exc}") from exc
    return GeneratedFunction(id=f"fn-{question.id}", question_id=question.id,
                             signature=signature, code=code,
                             status=STATUS_PENDING)


def code_digest(code: str) -> str:
    return hashlib.sha256(code.encode("utf-8")).hexdigest()[:12]


# -- stage 3: human review --------------------------------------------------

@dataclass(frozen=True)
class ReviewReport:
    approved: tuple[str, ...]
    rejected: tuple[str, ...]
    unknown_ids: tuple[str, ...]
    skipped: tuple[str, ...]


def load_verdicts(path: str | Path) -> list[tuple[str, str]]:
    """Read a review file of {function_id, verdict} lines; strict verdicts."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ItcError(f"cannot read review file {path}: {exc}") from exc
    verdicts = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ItcError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        fid = doc.get("function_id")
        verdict = doc.get("verdict")
        if not fid or verdict not in (VERDICT_APPROVE, VERDICT_REJECT):
            raise ItcError(
                f"{path}:{lineno}: verdict must be "
                f"{VERDICT_APPROVE!r} or {VERDICT_REJECT!r}, got {verdict!r}")
        verdicts.append((str(fid), verdict))
    return verdicts


def apply_review(functions: list[GeneratedFunction], review_path: str | Path,
                 audit: AuditLog | None = None
                 ) -> tuple[list[GeneratedFunction], ReviewReport]:
    """Apply verdicts; only pending functions change status."""
    verdicts = load_verdicts(review_path)
    by_id = {fn.id: fn for fn in functions}
    approved, rejected, unknown, skipped = [], [], [], []
    for fid, verdict in verdicts:
        fn = by_id.get(fid)
        if fn is None:
            unknown.append(fid)
            continue
        if fn.status != STATUS_PENDING:
            skipped.append(fid)
            continue
        status = STATUS_APPROVED if verdict == VERDICT_APPROVE else STATUS_REJECTED
        by_id[fid] = replace(fn, status=status)
        (approved if verdict == VERDICT_APPROVE else rejected).append(fid)
        if audit:
            audit.append("review", verdict, function_id=fid,
                         code_digest=code_digest(fn.code))
    report = ReviewReport(approved=tuple(approved), rejected=tuple(rejected),
                          unknown_ids=tuple(unknown), skipped=tuple(skipped))
    return [by_id[fn.id] for fn in functions], report


# -- stage 4: decomposition -------------------------------------------------

def decompose_function(gateway: Gateway, fn: GeneratedFunction,
                       audit: AuditLog | None = None) -> list[AtomicFunction]:
    """Break one approved function into atomic functions.

    Refuses anything not explicitly approved, so rejected or unreviewed code
    can never reach the registry.
    """
    if fn.status != STATUS_APPROVED:
        raise ItcError(
            f"function {fn.id} is {fn.status}; only approved functions "
            "may be decomposed")
    raw = gateway.run_template("itc_decompose", {"code": fn.code})
    atoms = []
    blocks = re.split(r"(?=^\s*Atomic:)", raw, flags=re.MULTILINE)
    for block in blocks:
        if not block.strip().startswith("Atomic:"):
            continue
        signature_text, code = _extract_block(block, "Atomic:")
        info = parse_signature(signature_text)
        try:
            ast.parse(code)
        except SyntaxError as exc:
            raise ItcError(f"atomic code for {fn.id} is not valid Python: "
                           f"{exc}") from exc
        atoms.append(AtomicFunction(name=info.name, signature=info,
                                    code=code, provenance=(fn.id,)))
    if not atoms:
        raise ItcError(f"decomposition of {fn.id} produced no atomic blocks")
    if audit:
        audit.append("decompose", "produced_atoms", function_id=fn.id,
                     atoms=[a.name for a in atoms])
    return atoms


# -- stage 5: merge ---------------------------------------------------------

def normalized_key(info: SignatureInfo) -> tuple:
    """Merge identity: lowercase name plus ordered parameter types.

    Parameter names are deliberately ignored, so density(m: real, v: real)
    and density(mass: real, volume: real) collapse.
    """
    return (info.name.lower(), tuple(t.value for _, t in info.params))


def merge_atoms(existing: list[AtomicFunction],
                new: list[AtomicFunction]) -> list[AtomicFunction]:
    """Set-style merge; first occurrence wins, provenance accumulates."""
    merged = list(existing)
    index = {normalized_key(a.signature): i for i, a in enumerate(merged)}
    if len(index) != len(merged):
        raise ItcError("existing atom list already contains duplicate signatures")
    for atom in new:
        key = normalized_key(atom.signature)
        if key in index:
            keeper = merged[index[key]]
            extra = tuple(p for p in atom.provenance
                          if p not in keeper.provenance)
            if extra:
                merged[index[key]] = replace(
                    keeper, provenance=keeper.provenance + extra)
        else:
            index[key] = len(merged)
            merged.append(atom)
    return merged


def _docstring_or_default(atom: AtomicFunction) -> str:
    try:
        module = ast.parse(atom.code)
        for node in module.body:
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                doc = ast.get_docstring(node)
                if doc:
                    return doc.strip().splitlines()[0]
    except SyntaxError:
        pass
    return (f"Domain atomic function {atom.signature.render()} distilled "
            "from reviewed solver code.")


def atoms_to_toolspecs(atoms: list[AtomicFunction]) -> list[ToolSpec]:
    specs = []
    for atom in atoms:
        params = tuple(ParamSpec(name=n, type=t)
                       for n, t in atom.signature.params)
        specs.append(ToolSpec(name=atom.name, params=params,
                              returns=atom.signature.returns,
                              metadata=_docstring_or_default(atom),
                              kind=KIND_DOMAIN_ATOMIC))
    return specs


# -- persistence ------------------------------------------------------------

def load_questions(path: str | Path) -> list[Question]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ItcError(f"cannot read question file {path}: {exc}") from exc
    questions = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            questions.append(Question(id=str(doc["id"]), text=str(doc["text"])))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ItcError(f"{path}:{lineno}: bad question record: {exc}") from exc
    if not questions:
        raise ItcError(f"question file {path} is empty")
    return questions


def save_questions(questions: list[Question], path: str | Path) -> None:
    lines = [json.dumps({"id": q.id, "text": q.text},
                        sort_keys=True, ensure_ascii=False) for q in questions]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def save_functions(functions: list[GeneratedFunction], path: str | Path) -> None:
    lines = [json.dumps(
        {"id": fn.id, "question_id": fn.question_id, "signature": fn.signature,
         "code": fn.code, "status": fn.status},
        sort_keys=True, ensure_ascii=False) for fn in functions]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def load_functions(path: str | Path) -> list[GeneratedFunction]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ItcError(f"cannot read function file {path}: {exc}") from exc
    functions = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            functions.append(GeneratedFunction(
                id=doc["id"], question_id=doc["question_id"],
                signature=doc["signature"], code=doc["code"],
                status=doc.get("status", STATUS_PENDING)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ItcError(f"{path}:{lineno}: bad function record: {exc}") from exc
    return functions


def save_atoms(atoms: list[AtomicFunction], path: str | Path) -> None:
    lines = [json.dumps(
        {"name": a.name, "signature": a.signature.render(), "code": a.code,
         "provenance": list(a.provenance)},
        sort_keys=True, ensure_ascii=False) for a in atoms]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def load_atoms(path: str | Path) -> list[AtomicFunction]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ItcError(f"cannot read atom file {path}: {exc}") from exc
    atoms = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            atoms.append(AtomicFunction(
                name=doc["name"], signature=parse_signature(doc["signature"]),
                code=doc["code"], provenance=tuple(doc.get("provenance", ()))))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ItcError(f"{path}:{lineno}: bad atom record: {exc}") from exc
    return atoms


def write_atomic_bundle(atoms: list[AtomicFunction], path: str | Path) -> None:
    """Source bundle the compute runtime loads its domain atomics from."""
    doc = {"atomics": [
        {"name": a.name,
         "params": [{"name": n, "type": t.value} for n, t in a.signature.params],
         "returns": a.signature.returns.value,
         "code": a.code,
         "provenance": list(a.provenance)}
        for a in atoms]}
    Path(path).write_text(json.dumps(doc, sort_keys=True, ensure_ascii=False,
                                     indent=2) + "\n", encoding="utf-8")
