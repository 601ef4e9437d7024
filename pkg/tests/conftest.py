"""Fixtures shared across the suite; the substance lives in helpers.py."""

from __future__ import annotations

import pytest

from honeycomb.general_tools import ReplayTransport, register_general_tools
from honeycomb.knowledge_base import KnowledgeBase
from honeycomb.tool_hub import ToolRegistry

from helpers import fixture_kb, record_scenario_cassettes


@pytest.fixture()
def kb() -> KnowledgeBase:
    return fixture_kb()


@pytest.fixture()
def cassette_dir(tmp_path):
    return record_scenario_cassettes(tmp_path / "cassettes")


@pytest.fixture()
def registry(cassette_dir) -> ToolRegistry:
    reg = ToolRegistry()
    register_general_tools(reg, ReplayTransport(cassette_dir))
    return reg
