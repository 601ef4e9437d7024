"""Retrieval-augmented agent framework for materials-science QA.

Public surface: the knowledge base with its taxonomy, the two-stage
retriever, the tool hub with general tools, the LLM gateway, the
question-answering agent, the tool-construction pipeline, and the
evaluation harness. The ``honeycomb`` CLI fronts all of it.
"""

from .agent import AblationConfig, Agent, AgentConfig, Answer, ExecutorTrace
from .errors import HoneycombError
from .knowledge_base import KbEntry, KnowledgeBase, SourceKind, Taxonomy
from .llm_gateway import Gateway, ScriptedProvider, make_provider
from .retriever import HashEmbedder, Retriever, RetrieverConfig
from .tool_hub import ToolRegistry, ToolResult, ToolSpec

__version__ = "0.1.0"

__all__ = [
    "AblationConfig", "Agent", "AgentConfig", "Answer", "ExecutorTrace",
    "Gateway", "HashEmbedder", "HoneycombError", "KbEntry", "KnowledgeBase",
    "Retriever", "RetrieverConfig", "ScriptedProvider", "SourceKind",
    "Taxonomy", "ToolRegistry", "ToolResult", "ToolSpec", "make_provider",
    "__version__",
]
