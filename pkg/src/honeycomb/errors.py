"""Exception types shared across the framework."""


class HoneycombError(Exception):
    """Base class for all framework errors."""


class KbError(HoneycombError):
    """Knowledge-base validation or lookup failure."""


class KbImportError(KbError):
    """Corpus import could not produce any valid entries."""


class TaxonomyError(KbError):
    """Category path does not resolve to a taxonomy node."""


class RetrieverError(HoneycombError):
    """Index construction or search failure."""


class ToolHubError(HoneycombError):
    """Tool registration or lookup failure."""


class ReplayMiss(ToolHubError):
    """A replayed tool request has no recorded fixture.

    Raised instead of silently falling through to the network.
    """


class AgentError(HoneycombError):
    """Agent precondition or internal consistency failure."""


class ProviderError(HoneycombError):
    """Language-model provider failure (remote error, exhausted script)."""


class ScriptExhausted(ProviderError):
    """A scripted provider ran out of queued responses."""


class TemplateError(HoneycombError):
    """Unknown prompt template or missing slot."""


class ItcError(HoneycombError):
    """Inductive tool construction pipeline failure."""


class EvalError(HoneycombError):
    """Evaluation dataset or report failure."""


class ComputeError(HoneycombError):
    """Compute worker protocol failure."""


class ConfigError(HoneycombError):
    """Bad configuration file or flag value."""
