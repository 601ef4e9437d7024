"""The question-answering agent: tool assessment, stepwise execution,
and answer consolidation.

The assessor retrieves candidate tools and asks the provider to pick a
subset. The executor then works in labeled Thought / Action / Action Input /
Observation rounds against the tool registry, can decompose a question into
subquestions, and stops on a Final Answer or at its iteration cap. The final
answer reranks the executor's preliminary solution against knowledge-base
hits and synthesizes from what survives.

Both retrieval sources can be ablated independently; with both off, a query
costs exactly one bare provider call. Traces serialize deterministically for
golden-file comparison.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .errors import AgentError, ProviderError, RetrieverError
from .knowledge_base import KnowledgeBase
from .llm_gateway import Gateway
from .retriever import (
    SOURCE_KB,
    SOURCE_TOOLS,
    RetrievalHit,
    Retriever,
    rank_texts,
)
from .tool_hub import ToolRegistry, ToolResult

log = logging.getLogger(__name__)

ACTION_FINAL = "final_answer"
ACTION_DECOMPOSE = "decompose"
ACTION_INVALID = "invalid"

TERMINATED_FINAL = "final_answer"
TERMINATED_MAX_ITERATIONS = "max_iterations"
TERMINATED_PROVIDER_ERROR = "provider_error"

OBSERVATION_ELLIPSIS = " ...[truncated]"
INVALID_FORMAT_OBSERVATION = (
    "invalid action format; reply with Thought / Action / Action Input "
    "lines or a Final Answer line")

PRELIMINARY_LABEL = "preliminary_solution"

_NAME_LIST_RE = re.compile(r"\[([^\]]*)\]")


@dataclass(frozen=True)
class AgentConfig:
    max_iterations: int = 8
    max_depth: int = 2
    max_subquestions: int = 4
    max_tools: int = 4
    observation_limit: int = 2000

    def __post_init__(self):
        for name in ("max_iterations", "max_depth", "max_subquestions",
                     "max_tools", "observation_limit"):
            if getattr(self, name) < 1:
                raise AgentError(f"{name} must be at least 1")


@dataclass(frozen=True)
class AblationConfig:
    kb: bool = True
    tools: bool = True

    def label(self) -> str:
        if self.kb and self.tools:
            return "kb,tools"
        if self.kb:
            return "kb"
        if self.tools:
            return "tools"
        return "none"

    @classmethod
    def from_label(cls, label: str) -> "AblationConfig":
        parts = {p.strip() for p in label.split(",") if p.strip()}
        if label.strip() == "none" or not parts:
            return cls(kb=False, tools=False)
        unknown = parts - {"kb", "tools"}
        if unknown:
            raise AgentError(f"unknown ablation flags: {sorted(unknown)}")
        return cls(kb="kb" in parts, tools="tools" in parts)


@dataclass(frozen=True)
class Assessment:
    query: str
    selected_tools: tuple[str, ...]
    rationale: str


@dataclass(frozen=True)
class ParsedStep:
    thought: str
    action: str
    action_input: object


@dataclass(frozen=True)
class ParseFailure:
    reason: str
    raw: str


@dataclass
class Step:
    thought: str
    action: str
    action_input: object
    observation: str
    sub_traces: list["ExecutorTrace"] = field(default_factory=list)


@dataclass
class ExecutorTrace:
    query: str
    steps: list[Step] = field(default_factory=list)
    preliminary_solution: str = ""
    terminated_by: str = TERMINATED_MAX_ITERATIONS


@dataclass
class Answer:
    final: str
    kb_hits: list[RetrievalHit] = field(default_factory=list)
    trace: ExecutorTrace | None = None


# -- provider output parsing ------------------------------------------------

_LABELS = ("Thought:", "Action:", "Action Input:", "Final Answer:",
           "Observation:")


def _is_label_line(line: str) -> str | None:
    stripped = line.lstrip()
    for label in _LABELS:
        if stripped.startswith(label):
            return label
    return None


def _collect(lines: list[str], start: int, first_chunk: str) -> str:
    chunks = [first_chunk] if first_chunk else []
    for line in lines[start:]:
        if _is_label_line(line):
            break
        chunks.append(line)
    return "\n".join(chunks).strip()


def parse_step(raw: str) -> ParsedStep | ParseFailure:
    """Parse one executor reply into a step or a labeled failure.

    Accepts either a Final Answer line or a Thought / Action / Action Input
    block with the labels spelled exactly; anything else is a failure whose
    reason feeds the corrective observation.
    """
    lines = raw.splitlines()
    thought = ""
    action = None
    action_input_text = None
    for i, line in enumerate(lines):
        label = _is_label_line(line)
        if label is None:
            continue
        tail = line.lstrip()[len(label):].strip()
        if label == "Final Answer:":
            answer = _collect(lines, i + 1, tail)
            if not answer:
                return ParseFailure("empty final answer", raw)
            return ParsedStep(thought=thought, action=ACTION_FINAL,
                              action_input=answer)
        if label == "Thought:" and not thought:
            thought = _collect(lines, i + 1, tail)
        elif label == "Action:" and action is None:
            action = tail
        elif label == "Action Input:" and action_input_text is None:
            action_input_text = _collect(lines, i + 1, tail)
    if action is None:
        return ParseFailure("no Action or Final Answer line found", raw)
    if not action:
        return ParseFailure("empty Action line", raw)
    if action_input_text is None or not action_input_text:
        return ParseFailure(f"Action {action!r} has no Action Input", raw)
    try:
        action_input = json.loads(action_input_text)
    except json.JSONDecodeError as exc:
        return ParseFailure(f"Action Input is not valid JSON: {exc}", raw)
    if action == ACTION_DECOMPOSE:
        if (not isinstance(action_input, list) or not action_input
                or not all(isinstance(q, str) and q.strip() for q in action_input)):
            return ParseFailure(
                "decompose needs a JSON list of subquestion strings", raw)
        return ParsedStep(thought=thought, action=action, action_input=action_input)
    if not isinstance(action_input, dict):
        return ParseFailure("Action Input must be a JSON object", raw)
    return ParsedStep(thought=thought, action=action, action_input=action_input)


def parse_tool_names(raw: str) -> list[str]:
    """Pull an ordered, deduplicated tool-name list out of assessor output."""
    match = _NAME_LIST_RE.search(raw)
    body = match.group(1) if match else raw
    names = []
    for part in re.split(r"[,\n]", body):
        name = part.strip().strip("'\"`")
        if name and re.fullmatch(r"\w+", name) and name not in names:
            names.append(name)
    return names


def truncate_observation(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    return text[: limit - len(OBSERVATION_ELLIPSIS)] + OBSERVATION_ELLIPSIS


def render_tool_result(result: ToolResult) -> str:
    if result.status == "ok":
        return str(result.value)
    return f"[{result.status}] {result.diagnostics}"


# -- trace serialization ----------------------------------------------------

def step_to_dict(step: Step) -> dict:
    return {"thought": step.thought, "action": step.action,
            "action_input": step.action_input, "observation": step.observation,
            "sub_traces": [trace_to_dict(t) for t in step.sub_traces]}


def trace_to_dict(trace: ExecutorTrace) -> dict:
    return {"query": trace.query,
            "preliminary_solution": trace.preliminary_solution,
            "terminated_by": trace.terminated_by,
            "steps": [step_to_dict(s) for s in trace.steps]}


def serialize_trace(trace: ExecutorTrace) -> str:
    """Stable line-delimited form: a header line, then one line per step.

    No timestamps and sorted keys, so identical runs serialize to identical
    bytes.
    """
    doc = trace_to_dict(trace)
    steps = doc.pop("steps")
    doc["type"] = "trace"
    doc["n_steps"] = len(steps)
    lines = [json.dumps(doc, sort_keys=True, ensure_ascii=False)]
    for i, step in enumerate(steps):
        record = {"type": "step", "index": i, **step}
        lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False))
    return "\n".join(lines) + "\n"


# -- the agent --------------------------------------------------------------

class Agent:
    def __init__(self, gateway: Gateway, registry: ToolRegistry,
                 retriever: Retriever, kb: KnowledgeBase,
                 config: AgentConfig | None = None):
        self.gateway = gateway
        self.registry = registry
        self.retriever = retriever
        self.kb = kb
        self.config = config or AgentConfig()

    # -- assessment ---------------------------------------------------------

    def assess(self, query: str) -> Assessment:
        if not len(self.registry):
            raise AgentError("cannot assess tools: registry is empty")
        candidates = self._candidate_names(query)
        rendered = "\n\n".join(self.registry.describe_tool(n) for n in candidates)
        raw = self.gateway.run_template("assessor", {
            "query": query,
            "tool_candidates": rendered,
            "max_tools": self.config.max_tools,
        })
        selected = []
        for name in parse_tool_names(raw):
            if name in self.registry.names():
                selected.append(name)
            else:
                log.warning("assessor picked unregistered tool %r; dropped", name)
            if len(selected) == self.config.max_tools:
                break
        return Assessment(query=query, selected_tools=tuple(selected),
                          rationale=raw.strip())

    def _candidate_names(self, query: str) -> list[str]:
        if self.retriever.tool_index is None:
            self.retriever.build_tool_index(self.registry.tool_index_docs())
        try:
            context = self.retriever.retrieve_context(query,
                                                      sources={SOURCE_TOOLS})
            hits = context.tool_hits
        except RetrieverError:
            hits = []
        if not hits:
            # No lexical overlap with any tool description: show them all.
            return self.registry.names()
        return [h.target_id for h in hits]

    # -- execution ----------------------------------------------------------

    def execute(self, query: str, assessment: Assessment,
                depth: int = 0) -> ExecutorTrace:
        trace = ExecutorTrace(query=query)
        tools_text = self._tools_block(assessment)
        for _ in range(self.config.max_iterations):
            prompt_slots = {"query": query, "tools": tools_text,
                            "steps": self._steps_block(trace.steps)}
            try:
                raw = self.gateway.run_template("executor", prompt_slots)
            except ProviderError as exc:
                log.warning("executor provider failure: %s", exc)
                trace.terminated_by = TERMINATED_PROVIDER_ERROR
                return trace
            parsed = parse_step(raw)
            if isinstance(parsed, ParseFailure):
                trace.steps.append(Step(
                    thought="", action=ACTION_INVALID, action_input=parsed.reason,
                    observation=INVALID_FORMAT_OBSERVATION))
                continue
            if parsed.action == ACTION_FINAL:
                trace.steps.append(Step(
                    thought=parsed.thought, action=ACTION_FINAL,
                    action_input=parsed.action_input, observation=""))
                trace.preliminary_solution = parsed.action_input
                trace.terminated_by = TERMINATED_FINAL
                return trace
            if parsed.action == ACTION_DECOMPOSE:
                trace.steps.append(self._run_decompose(parsed, assessment, depth))
                continue
            result = self.registry.invoke_tool(parsed.action, parsed.action_input)
            observation = truncate_observation(render_tool_result(result),
                                               self.config.observation_limit)
            trace.steps.append(Step(
                thought=parsed.thought, action=parsed.action,
                action_input=parsed.action_input, observation=observation))
        trace.terminated_by = TERMINATED_MAX_ITERATIONS
        return trace

    def _run_decompose(self, parsed: ParsedStep, assessment: Assessment,
                       depth: int) -> Step:
        subquestions = [q.strip() for q in parsed.action_input]
        if depth + 1 > self.config.max_depth:
            return Step(thought=parsed.thought, action=ACTION_DECOMPOSE,
                        action_input=subquestions,
                        observation="decomposition depth limit reached; "
                                    "answer directly or use a tool")
        kept = subquestions[: self.config.max_subquestions]
        sub_traces = [self.execute(q, assessment, depth + 1) for q in kept]
        summary = "\n".join(
            f"{q}: {t.preliminary_solution or '(no answer)'}"
            for q, t in zip(kept, sub_traces))
        return Step(thought=parsed.thought, action=ACTION_DECOMPOSE,
                    action_input=kept,
                    observation=truncate_observation(
                        summary, self.config.observation_limit),
                    sub_traces=sub_traces)

    def _tools_block(self, assessment: Assessment) -> str:
        names = assessment.selected_tools or tuple(self.registry.names())
        return "\n\n".join(self.registry.describe_tool(n) for n in names)

    def _steps_block(self, steps: list[Step]) -> str:
        lines = []
        for step in steps:
            if step.thought:
                lines.append(f"Thought: {step.thought}")
            lines.append(f"Action: {step.action}")
            lines.append("Action Input: "
                         + json.dumps(step.action_input, ensure_ascii=False))
            lines.append(f"Observation: {step.observation}")
        return "\n".join(lines)

    # -- consolidation ------------------------------------------------------

    def answer(self, query: str,
               ablation: AblationConfig | None = None) -> Answer:
        ablation = ablation or AblationConfig()
        if not ablation.kb and not ablation.tools:
            # Bare baseline: the query goes straight to the provider, once.
            return Answer(final=self.gateway.complete_prompt(query))

        trace = None
        preliminary = ""
        if ablation.tools:
            assessment = self.assess(query)
            trace = self.execute(query, assessment)
            preliminary = trace.preliminary_solution

        kb_hits: list[RetrievalHit] = []
        if ablation.kb:
            context = self.retriever.retrieve_context(query, sources={SOURCE_KB})
            kb_hits = list(context.kb_hits)

        items: list[tuple[str, str]] = []
        if preliminary:
            items.append((PRELIMINARY_LABEL, preliminary))
        hit_text = {}
        for hit in kb_hits:
            entry = self.kb.get_entry(hit.target_id)
            if entry is None:
                raise AgentError(
                    f"retrieval hit {hit.target_id} is missing from the KB")
            hit_text[hit.target_id] = f"{entry.key}: {entry.value}"
            items.append((hit.target_id, hit_text[hit.target_id]))

        kept: list[tuple[str, str]] = []
        if items:
            k = min(self.retriever.config.k_final, len(items))
            ranked = rank_texts(self.retriever.embedder, query, items, k)
            kept = [(label, text) for label, text, _ in ranked]
        kept_ids = {label for label, _ in kept}
        final_hits = [h for h in kb_hits if h.target_id in kept_ids]

        context_text = "\n\n".join(f"[{label}] {text}" for label, text in kept)
        final = self.gateway.run_template("synthesis", {
            "query": query,
            "context": context_text or "(no context retrieved)",
        })
        return Answer(final=final.strip(), kb_hits=final_hits, trace=trace)
