"""Shared test scaffolding: a small KB corpus, tool cassettes, scripted agents."""

from __future__ import annotations

from honeycomb.agent import Agent, AgentConfig
from honeycomb.general_tools import record_cassette
from honeycomb.knowledge_base import ROOT_LABEL, KbEntry, KnowledgeBase, SourceKind
from honeycomb.llm_gateway import Gateway, ScriptedProvider
from honeycomb.retriever import HashEmbedder, Retriever, RetrieverConfig


def kb_fixture_entries() -> list[KbEntry]:
    def entry(key, value, kind, category):
        return KbEntry(id=None, key=key, value=value, source_kind=kind,
                       category=(ROOT_LABEL, category))

    return [
        entry("Density of water",
              "Liquid water has a density close to 1000 kg/m3 at 4 Celsius.",
              SourceKind.WIKIPEDIA, "Fluid"),
        entry("Mass flow rate formula",
              "Mass flow rate equals density times cross-sectional area "
              "times flow velocity.",
              SourceKind.FORMULA, "Formula"),
        entry("Young's modulus of aluminum",
              "Aluminum has a Young's modulus of about 69 GPa.",
              SourceKind.TEXTBOOK, "Mechanical"),
        entry("Perovskite structure",
              "Perovskites share the ABX3 crystal structure of calcium "
              "titanate.",
              SourceKind.WIKIPEDIA, "Atomic structure"),
        entry("Curie temperature of iron",
              "Iron loses ferromagnetic order above 1043 K.",
              SourceKind.TEXTBOOK, "Magnetism"),
        entry("Bandgap of silicon",
              "Silicon has an indirect bandgap of 1.12 eV at room temperature.",
              SourceKind.TEXTBOOK, "Electrical"),
        entry("Heat capacity of copper",
              "Copper has a specific heat capacity near 385 J per kg K.",
              SourceKind.TEXTBOOK, "Thermodynamics"),
        entry("Martensite transformation",
              "Martensite forms by a diffusionless phase transition in "
              "quenched steels.",
              SourceKind.ARXIV_PAPER, "Phase transition"),
        entry("Benchmark sample question", "",
              SourceKind.DATASET_SUPPORT, "Miscellaneous"),
        entry("Reynolds number",
              "The Reynolds number is the ratio of inertial to viscous "
              "forces in a flow.",
              SourceKind.FORMULA, "Fluid"),
        entry("XRD analysis",
              "X-ray diffraction identifies crystalline phases from "
              "characteristic reflection angles.",
              SourceKind.WIKIPEDIA, "Material characterization"),
        entry("Sintering",
              "Sintering consolidates powder compacts below the melting "
              "point.",
              SourceKind.GENERATED_EXAMPLE, "Material processing"),
    ]


def fixture_kb() -> KnowledgeBase:
    store = KnowledgeBase()
    for entry in kb_fixture_entries():
        store.put_entry(entry)
    return store


SNIPPET_MASS_FLOW = "result = 1000 * 0.01 * 2"


def record_scenario_cassettes(cassettes):
    """Record the tool payloads the hermetic agent scenarios rely on."""
    record_cassette(cassettes, "code_repl",
                    {"code": SNIPPET_MASS_FLOW, "timeout": 30}, "20.0")
    record_cassette(cassettes, "wikipedia_search",
                    {"topic": "Density of water", "summarize": True},
                    "Water has a density of about 1000 kg/m3 near 4 C.")
    record_cassette(cassettes, "wikipedia_search",
                    {"topic": "Perovskite", "summarize": True},
                    "A perovskite is any material with the ABX3 crystal "
                    "structure of calcium titanate.")
    record_cassette(cassettes, "google_search",
                    {"query": "perovskite solar cell efficiency", "timeout": 30},
                    [{"title": "Perovskite solar cells",
                      "url": "https://example.org/psc",
                      "snippet": "Record efficiencies above 26 percent."}])
    return cassettes


def make_agent(kb, registry, responses,
               agent_config: AgentConfig | None = None,
               retriever_config: RetrieverConfig | None = None):
    """Agent wired to a queue-scripted provider over the fixture KB and tools."""
    provider = ScriptedProvider(responses=list(responses))
    gateway = Gateway(provider)
    retriever = Retriever(HashEmbedder(), retriever_config or RetrieverConfig())
    retriever.build_kb_index(kb.snapshot().values())
    retriever.build_tool_index(registry.tool_index_docs())
    agent = Agent(gateway, registry, retriever, kb,
                  agent_config or AgentConfig())
    return agent, gateway, retriever


# Provider queue for the mass-flow scenario: assess, decompose, a wikipedia
# lookup with its answer, a direct sub-answer, a compute call, the final
# answer, and the synthesis call. Eight completions in all.
MASS_FLOW_RESPONSES = [
    "[wikipedia_search, code_repl]",
    'Thought: Split the problem into the quantities I need.\n'
    'Action: decompose\n'
    'Action Input: ["What is the density of water?", '
    '"What is the cross-sectional area of the pipe?"]',
    "Thought: Look the density up.\n"
    "Action: wikipedia_search\n"
    'Action Input: {"topic": "Density of water"}',
    "Final Answer: 1000 kg/m3",
    "Final Answer: 0.01 m2",
    "Thought: Multiply density, area, and velocity.\n"
    "Action: code_repl\n"
    'Action Input: {"code": "' + SNIPPET_MASS_FLOW + '"}',
    "Final Answer: 20.0 kg/s",
    "The mass flow rate is 20.0 kilograms per second.",
]

MASS_FLOW_QUERY = ("What is the mass flow rate of water with density 1000 "
                   "kg/m3 through a pipe of cross-sectional area 0.01 m2 "
                   "at a flow velocity of 2 m/s?")
