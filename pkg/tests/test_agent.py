"""Agent: step parsing, assessment, the executor loop, consolidation."""

from __future__ import annotations

import json
import random

import pytest

from helpers import MASS_FLOW_QUERY, MASS_FLOW_RESPONSES, make_agent
from honeycomb.agent import (
    ACTION_DECOMPOSE,
    ACTION_FINAL,
    ACTION_INVALID,
    INVALID_FORMAT_OBSERVATION,
    TERMINATED_FINAL,
    TERMINATED_MAX_ITERATIONS,
    TERMINATED_PROVIDER_ERROR,
    AblationConfig,
    Agent,
    AgentConfig,
    ParseFailure,
    ParsedStep,
    parse_step,
    parse_tool_names,
    serialize_trace,
    trace_to_dict,
    truncate_observation,
)
from honeycomb.errors import AgentError
from honeycomb.knowledge_base import KnowledgeBase
from honeycomb.llm_gateway import Gateway, ScriptedProvider
from honeycomb.retriever import HashEmbedder, Retriever
from honeycomb.tool_hub import ToolRegistry


class TestParseStep:
    def test_tool_step(self):
        parsed = parse_step("Thought: look it up\n"
                            "Action: wikipedia_search\n"
                            'Action Input: {"topic": "Mica"}')
        assert isinstance(parsed, ParsedStep)
        assert parsed.thought == "look it up"
        assert parsed.action == "wikipedia_search"
        assert parsed.action_input == {"topic": "Mica"}

    def test_final_answer(self):
        parsed = parse_step("Thought: done\nFinal Answer: 42 GPa")
        assert parsed.action == ACTION_FINAL
        assert parsed.action_input == "42 GPa"

    def test_multiline_final_answer(self):
        parsed = parse_step("Final Answer: first line\nsecond line")
        assert parsed.action_input == "first line\nsecond line"

    def test_decompose_step(self):
        parsed = parse_step("Action: decompose\n"
                            'Action Input: ["sub one", "sub two"]')
        assert parsed.action == ACTION_DECOMPOSE
        assert parsed.action_input == ["sub one", "sub two"]

    def test_decompose_needs_string_list(self):
        parsed = parse_step("Action: decompose\nAction Input: {\"a\": 1}")
        assert isinstance(parsed, ParseFailure)

    def test_invalid_json_input(self):
        parsed = parse_step("Action: t\nAction Input: {broken")
        assert isinstance(parsed, ParseFailure)
        assert "JSON" in parsed.reason

    def test_missing_action(self):
        parsed = parse_step("I think the answer is B.")
        assert isinstance(parsed, ParseFailure)

    def test_missing_action_input(self):
        parsed = parse_step("Action: wikipedia_search")
        assert isinstance(parsed, ParseFailure)

    def test_tool_input_must_be_object(self):
        parsed = parse_step("Action: t\nAction Input: [1, 2]")
        assert isinstance(parsed, ParseFailure)

    def test_labels_are_exact(self):
        parsed = parse_step("action: t\naction input: {}")
        assert isinstance(parsed, ParseFailure)

    def test_multiline_json_input(self):
        parsed = parse_step('Action: t\nAction Input: {\n  "a": 1\n}')
        assert isinstance(parsed, ParsedStep)
        assert parsed.action_input == {"a": 1}


class TestParseToolNames:
    def test_bracketed_list(self):
        assert parse_tool_names("[google_search, code_repl]") == \
            ["google_search", "code_repl"]

    def test_dedupes_preserving_order(self):
        assert parse_tool_names("[a_tool, b_tool, a_tool]") == \
            ["a_tool", "b_tool"]

    def test_prose_fallback(self):
        assert parse_tool_names("arxiv_search, wikipedia_search") == \
            ["arxiv_search", "wikipedia_search"]

    def test_empty(self):
        assert parse_tool_names("[]") == []


class TestTruncation:
    def test_short_text_untouched(self):
        assert truncate_observation("short", 2000) == "short"

    def test_long_text_capped_with_marker(self):
        text = "x" * 3000
        out = truncate_observation(text, 2000)
        assert len(out) == 2000
        assert out.endswith("...[truncated]")


class TestAssess:
    def test_selects_registered_tools_only(self, kb, registry):
        agent, gateway, _ = make_agent(
            kb, registry, ["[wikipedia_search, imaginary_tool, code_repl]"])
        assessment = agent.assess("What is the density of water?")
        assert assessment.selected_tools == ("wikipedia_search", "code_repl")
        assert gateway.calls == 1

    def test_caps_at_max_tools(self, kb, registry):
        agent, _, _ = make_agent(
            kb, registry,
            ["[google_search, google_scholar_search, arxiv_search, "
             "wikipedia_search, youtube_search, code_repl]"])
        assessment = agent.assess("search broadly for everything")
        assert len(assessment.selected_tools) == 4

    def test_empty_registry_is_a_precondition_failure(self, kb):
        agent, _, _ = make_agent(kb, ToolRegistry(), ["[x]"])
        with pytest.raises(AgentError):
            agent.assess("anything")

    def test_rationale_keeps_raw_output(self, kb, registry):
        agent, _, _ = make_agent(kb, registry, ["[code_repl]"])
        assert agent.assess("compute").rationale == "[code_repl]"


class TestExecute:
    def test_tool_call_then_final(self, kb, registry):
        agent, gateway, _ = make_agent(kb, registry, [
            "Thought: check the encyclopedia\n"
            "Action: wikipedia_search\n"
            'Action Input: {"topic": "Perovskite"}',
            "Final Answer: ABX3 structure",
        ])
        from honeycomb.agent import Assessment
        trace = agent.execute("What structure do perovskites share?",
                              Assessment(query="q",
                                         selected_tools=("wikipedia_search",),
                                         rationale=""))
        assert trace.terminated_by == TERMINATED_FINAL
        assert trace.preliminary_solution == "ABX3 structure"
        assert len(trace.steps) == 2
        assert trace.steps[0].action == "wikipedia_search"
        assert "ABX3" in trace.steps[0].observation
        assert trace.steps[1].action == ACTION_FINAL

    def test_observation_feeds_next_prompt(self, kb, registry):
        prompts = []

        class Probe:
            def complete(self, request):
                prompts.append(request.prompt)
                if len(prompts) == 1:
                    return ("Action: wikipedia_search\n"
                            'Action Input: {"topic": "Perovskite"}')
                return "Final Answer: done"

        from honeycomb.agent import Assessment
        retriever = Retriever(HashEmbedder())
        retriever.build_tool_index(registry.tool_index_docs())
        agent = Agent(Gateway(Probe()), registry, retriever, kb)
        agent.execute("q", Assessment(query="q",
                                      selected_tools=("wikipedia_search",),
                                      rationale=""))
        assert "Observation:" in prompts[1]
        assert "ABX3" in prompts[1]

    def test_invalid_output_gets_corrective_observation(self, kb, registry):
        from honeycomb.agent import Assessment
        agent, _, _ = make_agent(kb, registry, [
            "The answer is probably fine without any labels.",
            "Final Answer: recovered",
        ])
        trace = agent.execute("q", Assessment(query="q", selected_tools=(),
                                              rationale=""))
        assert trace.steps[0].action == ACTION_INVALID
        assert trace.steps[0].observation == INVALID_FORMAT_OBSERVATION
        assert trace.terminated_by == TERMINATED_FINAL

    def test_corrective_observation_reaches_the_provider(self, kb, registry):
        prompts = []

        class Probe:
            def complete(self, request):
                prompts.append(request.prompt)
                if len(prompts) == 1:
                    return "no labels here"
                return "Final Answer: ok"

        from honeycomb.agent import Assessment
        retriever = Retriever(HashEmbedder())
        retriever.build_tool_index(registry.tool_index_docs())
        agent = Agent(Gateway(Probe()), registry, retriever, kb)
        agent.execute("q", Assessment(query="q", selected_tools=(),
                                      rationale=""))
        assert INVALID_FORMAT_OBSERVATION in prompts[1]

    def test_max_iterations_bound(self, kb, registry):
        from honeycomb.agent import Assessment
        agent, gateway, _ = make_agent(
            kb, registry, ["garbage with no labels"] * 20)
        trace = agent.execute("q", Assessment(query="q", selected_tools=(),
                                              rationale=""))
        assert trace.terminated_by == TERMINATED_MAX_ITERATIONS
        assert len(trace.steps) == 8
        assert gateway.calls == 8

    def test_provider_error_terminates_with_classification(self, kb, registry):
        from honeycomb.agent import Assessment
        agent, _, _ = make_agent(kb, registry, [])  # immediately exhausted
        trace = agent.execute("q", Assessment(query="q", selected_tools=(),
                                              rationale=""))
        assert trace.terminated_by == TERMINATED_PROVIDER_ERROR
        assert trace.steps == []

    def test_decompose_runs_subquestions_and_summarizes(self, kb, registry):
        from honeycomb.agent import Assessment
        agent, _, _ = make_agent(kb, registry, [
            'Action: decompose\nAction Input: ["density?", "area?"]',
            "Final Answer: 1000 kg/m3",
            "Final Answer: 0.01 m2",
            "Final Answer: combined",
        ])
        trace = agent.execute("q", Assessment(query="q", selected_tools=(),
                                              rationale=""))
        step = trace.steps[0]
        assert step.action == ACTION_DECOMPOSE
        assert len(step.sub_traces) == 2
        assert "density?: 1000 kg/m3" in step.observation
        assert "area?: 0.01 m2" in step.observation
        assert trace.preliminary_solution == "combined"

    def test_subquestion_cap(self, kb, registry):
        from honeycomb.agent import Assessment
        subqs = json.dumps([f"sub {i}" for i in range(7)])
        agent, _, _ = make_agent(kb, registry, [
            f"Action: decompose\nAction Input: {subqs}",
            "Final Answer: s0", "Final Answer: s1",
            "Final Answer: s2", "Final Answer: s3",
            "Final Answer: top",
        ])
        trace = agent.execute("q", Assessment(query="q", selected_tools=(),
                                              rationale=""))
        assert len(trace.steps[0].sub_traces) == 4
        assert trace.steps[0].action_input == [f"sub {i}" for i in range(4)]

    def test_depth_limit_blocks_nested_decomposition(self, kb, registry):
        from honeycomb.agent import Assessment
        agent, _, _ = make_agent(kb, registry, [
            'Action: decompose\nAction Input: ["level one"]',
            'Action: decompose\nAction Input: ["level two"]',
            'Action: decompose\nAction Input: ["level three"]',
            "Final Answer: deepest",
            "Final Answer: level-two answer",
            "Final Answer: level-one answer",
            "Final Answer: top answer",
        ], agent_config=AgentConfig(max_depth=2))
        trace = agent.execute("q", Assessment(query="q", selected_tools=(),
                                              rationale=""))
        level_one = trace.steps[0].sub_traces[0]
        level_two = level_one.steps[0].sub_traces[0]
        blocked = level_two.steps[0]
        assert blocked.action == ACTION_DECOMPOSE
        assert blocked.sub_traces == []
        assert "depth limit" in blocked.observation

    def test_unknown_tool_becomes_error_observation(self, kb, registry):
        from honeycomb.agent import Assessment
        agent, _, _ = make_agent(kb, registry, [
            'Action: crystal_ball\nAction Input: {"q": "x"}',
            "Final Answer: fallback",
        ])
        trace = agent.execute("q", Assessment(query="q", selected_tools=(),
                                              rationale=""))
        assert "[error]" in trace.steps[0].observation
        assert "unknown tool" in trace.steps[0].observation

    def test_observation_truncated_at_limit(self, kb, registry, tmp_path):
        from honeycomb.agent import Assessment
        from honeycomb.general_tools import ReplayTransport, record_cassette, \
            register_general_tools
        record_cassette(tmp_path, "wikipedia_search",
                        {"topic": "Long", "summarize": True}, "y" * 5000)
        long_registry = ToolRegistry()
        register_general_tools(long_registry, ReplayTransport(tmp_path))
        agent, _, _ = make_agent(kb, long_registry, [
            'Action: wikipedia_search\nAction Input: {"topic": "Long"}',
            "Final Answer: done",
        ])
        trace = agent.execute("q", Assessment(query="q", selected_tools=(),
                                              rationale=""))
        assert len(trace.steps[0].observation) == 2000
        assert trace.steps[0].observation.endswith("...[truncated]")


class TestTerminationFuzz:
    """Randomized provider outputs must never hang or escape the loop caps."""

    OUTPUT_SHAPES = (
        lambda rng: "complete nonsense " + str(rng.random()),
        lambda rng: "Action: wikipedia_search\n"
                    'Action Input: {"topic": "T%d"}' % rng.randrange(5),
        lambda rng: "Action: no_such_tool\nAction Input: {}",
        lambda rng: "Action: decompose\nAction Input: "
                    + json.dumps([f"sub {i}" for i in range(rng.randint(1, 6))]),
        lambda rng: "Action: decompose\nAction Input: \"not a list\"",
        lambda rng: "Final Answer: done %d" % rng.randrange(100),
        lambda rng: "Action: wikipedia_search\nAction Input: {broken",
        lambda rng: "Thought: only a thought",
    )

    def test_hundred_random_providers_terminate_classified(self, kb, registry):
        from honeycomb.agent import Assessment
        outcomes = set()
        for provider_index in range(100):
            rng = random.Random(42000 + provider_index)
            responses = [rng.choice(self.OUTPUT_SHAPES)(rng)
                         for _ in range(rng.randint(0, 30))]
            agent, gateway, _ = make_agent(kb, registry, responses)
            trace = agent.execute(
                "fuzzed question", Assessment(query="q", selected_tools=(),
                                              rationale=""))
            assert trace.terminated_by in (TERMINATED_FINAL,
                                           TERMINATED_MAX_ITERATIONS,
                                           TERMINATED_PROVIDER_ERROR)
            assert len(trace.steps) <= agent.config.max_iterations
            for step in trace.steps:
                for sub in step.sub_traces:
                    assert len(sub.steps) <= agent.config.max_iterations
            outcomes.add(trace.terminated_by)
        assert outcomes == {TERMINATED_FINAL, TERMINATED_MAX_ITERATIONS,
                            TERMINATED_PROVIDER_ERROR}


class TestAnswerAndAblation:
    def test_full_pipeline_mass_flow(self, kb, registry):
        agent, gateway, retriever = make_agent(kb, registry,
                                               MASS_FLOW_RESPONSES)
        answer = agent.answer(MASS_FLOW_QUERY, AblationConfig())
        assert answer.final == "The mass flow rate is 20.0 kilograms per second."
        assert answer.trace is not None
        assert answer.trace.terminated_by == TERMINATED_FINAL
        assert gateway.calls == len(MASS_FLOW_RESPONSES)
        for hit in answer.kb_hits:
            assert kb.get_entry(hit.target_id) is not None

    def test_bare_ablation_is_one_provider_call_zero_retrievals(self, kb, registry):
        agent, gateway, retriever = make_agent(kb, registry, ["direct answer"])
        answer = agent.answer("any question",
                              AblationConfig(kb=False, tools=False))
        assert answer.final == "direct answer"
        assert answer.trace is None
        assert answer.kb_hits == []
        assert gateway.calls == 1
        assert retriever.retrieval_count == 0
        assert registry.invocation_count == 0

    def test_kb_only_skips_assessor_and_executor(self, kb, registry):
        agent, gateway, retriever = make_agent(kb, registry,
                                               ["synthesized from notes"])
        answer = agent.answer("What is the density of water?",
                              AblationConfig(kb=True, tools=False))
        assert answer.final == "synthesized from notes"
        assert answer.trace is None
        assert len(answer.kb_hits) >= 1
        # one provider call (synthesis), one retrieval (kb), no tools
        assert gateway.calls == 1
        assert retriever.retrieval_count == 1
        assert registry.invocation_count == 0

    def test_tools_only_skips_kb_retrieval(self, kb, registry):
        agent, gateway, retriever = make_agent(kb, registry, [
            "[code_repl]",
            "Thought: compute\nAction: code_repl\n"
            'Action Input: {"code": "result = 1000 * 0.01 * 2"}',
            "Final Answer: 20.0",
            "synthesized: 20.0 kg/s",
        ])
        answer = agent.answer("mass flow rate of water in the pipe?",
                              AblationConfig(kb=False, tools=True))
        assert answer.kb_hits == []
        assert answer.trace is not None
        assert registry.invocation_count == 1
        # exactly one retrieval: assessor candidates over tool metadata
        assert retriever.retrieval_count == 1
        assert gateway.calls == 4

    def test_ablation_labels(self):
        assert AblationConfig().label() == "kb,tools"
        assert AblationConfig(kb=True, tools=False).label() == "kb"
        assert AblationConfig(kb=False, tools=True).label() == "tools"
        assert AblationConfig(kb=False, tools=False).label() == "none"

    def test_ablation_from_label_round_trip(self):
        for label in ("kb,tools", "kb", "tools", "none"):
            assert AblationConfig.from_label(label).label() == label
        with pytest.raises(AgentError):
            AblationConfig.from_label("kb,web")

    def test_consolidation_reranks_to_k_final(self, kb, registry):
        # preliminary + 3 kb hits enter consolidation; k_final caps what
        # survives into the synthesis context
        agent, gateway, _ = make_agent(kb, registry, MASS_FLOW_RESPONSES)
        answer = agent.answer(MASS_FLOW_QUERY, AblationConfig())
        assert len(answer.kb_hits) <= agent.retriever.config.k_final


class TestTraceSerialization:
    def run_once(self, kb, registry):
        agent, _, _ = make_agent(kb, registry, MASS_FLOW_RESPONSES)
        answer = agent.answer(MASS_FLOW_QUERY, AblationConfig())
        return serialize_trace(answer.trace)

    def test_three_runs_serialize_identically(self, kb, registry):
        first = self.run_once(kb, registry)
        second = self.run_once(kb, registry)
        third = self.run_once(kb, registry)
        assert first == second == third

    def test_serialization_has_no_timestamps_and_sorted_keys(self, kb, registry):
        text = self.run_once(kb, registry)
        for line in text.splitlines():
            doc = json.loads(line)
            assert list(doc) == sorted(doc)
            assert "time" not in text.lower() or "timestamp" not in doc

    def test_nested_sub_traces_serialize(self, kb, registry):
        text = self.run_once(kb, registry)
        lines = [json.loads(line) for line in text.splitlines()]
        assert lines[0]["type"] == "trace"
        assert lines[0]["n_steps"] == len(lines) - 1
        decompose_lines = [l for l in lines if l.get("action") == "decompose"]
        assert decompose_lines
        assert decompose_lines[0]["sub_traces"][0]["steps"]

    def test_trace_dict_round_trips_through_json(self, kb, registry):
        agent, _, _ = make_agent(kb, registry, MASS_FLOW_RESPONSES)
        answer = agent.answer(MASS_FLOW_QUERY, AblationConfig())
        doc = trace_to_dict(answer.trace)
        assert json.loads(json.dumps(doc)) == doc


class TestGoldenTrace:
    """The serialized mass-flow run must match the frozen fixture, byte for
    byte, across repeated runs. Regenerate deliberately with
    tests/make_golden_trace.py if the trace format changes."""

    def test_three_runs_match_the_frozen_fixture(self, kb, registry):
        import pathlib
        golden = (pathlib.Path(__file__).parent / "fixtures" /
                  "golden_trace.jsonl").read_text(encoding="utf-8")
        runs = []
        for _ in range(3):
            agent, _, _ = make_agent(kb, registry, MASS_FLOW_RESPONSES)
            answer = agent.answer(MASS_FLOW_QUERY, AblationConfig())
            runs.append(serialize_trace(answer.trace))
        assert runs[0] == runs[1] == runs[2]
        assert runs[0] == golden
