"""Domain errors raised across the pipeline."""


class FacetForgeError(Exception):
    """Base class for every pipeline error."""


# ========== corpus ==========


class MalformedXml(FacetForgeError):
    """Article XML could not be parsed."""


class NoBody(FacetForgeError):
    """Article XML has no extractable body paragraphs."""


class SchemaError(FacetForgeError):
    """A record in an input file does not match the expected schema."""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class BadRatios(FacetForgeError):
    pass


class DuplicateIds(FacetForgeError):
    pass


class EmptyCorpus(FacetForgeError):
    pass


class MissingCorpus(FacetForgeError):
    pass


# ========== splitting ==========


class MissingHeaderMap(FacetForgeError):
    pass


class LlmUnavailable(FacetForgeError):
    """The sentence classifier could not reach the LLM and rule fallback is disabled."""


# ========== prompts ==========


class MissingEntities(FacetForgeError):
    pass


class MissingStage1(FacetForgeError):
    pass


class UnparseableReply(FacetForgeError):
    """No rung of the JSON repair ladder produced a usable object."""


class EmptyDraft(FacetForgeError):
    pass


# ========== llm client ==========


class LlmTransportError(FacetForgeError):
    """Base for failures to obtain a reply from any backend."""


class Unreachable(LlmTransportError):
    """HTTP endpoint failed after all retries."""


class CassetteMiss(LlmTransportError):
    pass


class ScriptMiss(LlmTransportError):
    pass


class CassetteWriteError(FacetForgeError):
    pass


# ========== entities ==========


class EmptyText(FacetForgeError):
    pass


class EmptyLexicon(FacetForgeError):
    pass


# ========== summarizer ==========


class AlreadyFallback(FacetForgeError):
    pass


class SplitFailed(FacetForgeError):
    pass


# ========== metrics / stats ==========


class EmptySummary(FacetForgeError):
    pass


class EmptyReference(FacetForgeError):
    pass


class NoOverlap(FacetForgeError):
    pass


class TooFewPairs(FacetForgeError):
    pass


# ========== cli ==========


class ConfigError(FacetForgeError):
    """Invalid combination of options; maps to exit status 2."""
