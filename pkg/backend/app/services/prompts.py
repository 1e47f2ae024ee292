"""Prompt templates and JSON reply parsing.

Templates live under app/data/prompts/<strategy>/ as plain text with
<placeholder> markers; they are never edited in code.
"""

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional

from app.config import ASSETS_DIR
from app.exceptions import EmptyDraft, MissingEntities, MissingStage1, UnparseableReply
from app.schemas.facets import FacetLabel
from app.schemas.llm import ChatMessage, ChatMessages, GuidelineVariant, LlmJsonReply, PromptStrategy
from app.services.assets import read_tsv

PROMPTS_DIR = ASSETS_DIR / "prompts"

# strategy -> (system file, user file[, second user file])
_TEMPLATE_FILES: dict[PromptStrategy, tuple[str, ...]] = {
    PromptStrategy.BC: ("bc/system.txt", "bc/user.txt"),
    PromptStrategy.DI: ("di/system.txt", "di/user.txt"),
    PromptStrategy.SI: ("si/system.txt", "si/user.txt"),
    PromptStrategy.BC_NS: ("bc/system.txt", "bc_ns/user.txt"),
    PromptStrategy.BC_TRUMLS: ("bc_trumls/system.txt", "bc_trumls/user.txt"),
    PromptStrategy.DI_TRUMLS: ("di/system.txt", "di_trumls/user.txt"),
    PromptStrategy.SI_COT_STAGE1: ("si_cot/system.txt", "si_cot/user.txt"),
    PromptStrategy.SI_COT_STAGE2: ("si_cot/system.txt", "si_cot/user.txt", "si_cot/user2.txt"),
    PromptStrategy.REFINE: ("refine/system.txt", "refine/user.txt"),
    PromptStrategy.CLASSIFY: ("classify/system.txt", "classify/user.txt"),
}

_ENTITY_STRATEGIES = (PromptStrategy.BC_TRUMLS, PromptStrategy.DI_TRUMLS)
_DETAILED_STRATEGIES = (PromptStrategy.DI, PromptStrategy.DI_TRUMLS)

_PLACEHOLDER = re.compile(r"<(facet_type|facet_guide|facet_text|top_entities|draft_abstract)>")
_FENCE = re.compile(r"```[A-Za-z]*\s*(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class PromptTemplate:
    system: str
    users: tuple[str, ...]


@dataclass(frozen=True)
class GuidelineTable:
    variant: GuidelineVariant
    entries: dict[str, str]

    def guide(self, facet: FacetLabel) -> str:
        return self.entries[facet.display_name]


def _read_asset(relative: str) -> str:
    text = (PROMPTS_DIR / relative).read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


@lru_cache(maxsize=None)
def load_template(strategy: PromptStrategy) -> PromptTemplate:
    system, *users = _TEMPLATE_FILES[strategy]
    return PromptTemplate(system=_read_asset(system), users=tuple(_read_asset(u) for u in users))


@lru_cache(maxsize=None)
def load_guidelines(variant: GuidelineVariant) -> GuidelineTable:
    frame = read_tsv(ASSETS_DIR / f"guidelines_{variant.value}.tsv", ["facet", "guideline"])
    table = GuidelineTable(variant=variant, entries=dict(zip(frame["facet"], frame["guideline"])))
    missing = [f.display_name for f in FacetLabel if f.display_name not in table.entries]
    if missing:
        raise ValueError(f"{variant.value} guideline table lacks {missing}")
    return table


def fill(template: str, values: dict[str, str]) -> str:
    """Substitute placeholders in one pass, so substituted text is never re-scanned."""
    return _PLACEHOLDER.sub(lambda m: values.get(m.group(1), m.group(0)), template)


# ========== Rendering ==========

def render(
    strategy: PromptStrategy,
    facet_type: Optional[FacetLabel],
    facet_text: str,
    entities: Optional[list[str]] = None,
    stage1_reply: Optional[str] = None,
) -> ChatMessages:
    """Build the chat messages for one facet (or one sentence for CLASSIFY).

    Args:
        strategy: template pair to use.
        facet_type: facet label; unused by BC_NS and CLASSIFY.
        facet_text: text placed at <facet_text>.
        entities: top entities, required for the TR-UMLS strategies.
        stage1_reply: assistant reply of the extraction stage, required for SI_COT_STAGE2.
    """
    if not facet_text.strip():
        raise ValueError("facet_text must not be empty")
    if strategy in _ENTITY_STRATEGIES and entities is None:
        raise MissingEntities(f"{strategy.value} needs top entities")
    if strategy is PromptStrategy.SI_COT_STAGE2 and stage1_reply is None:
        raise MissingStage1("stage 2 needs the stage 1 reply")

    variant = GuidelineVariant.DETAILED if strategy in _DETAILED_STRATEGIES else GuidelineVariant.CONCISE
    values = {
        "facet_type": facet_type.display_name if facet_type else "",
        "facet_guide": load_guidelines(variant).guide(facet_type) if facet_type else "",
        "facet_text": facet_text,
        "top_entities": ", ".join(entities or []),
    }

    template = load_template(strategy)
    messages = [
        ChatMessage(role="system", content=fill(template.system, values)),
        ChatMessage(role="user", content=fill(template.users[0], values)),
    ]
    if strategy is PromptStrategy.SI_COT_STAGE2:
        messages.append(ChatMessage(role="assistant", content=stage1_reply))
        messages.append(ChatMessage(role="user", content=fill(template.users[1], values)))
    return messages


def render_refine(draft: str) -> ChatMessages:
    if not draft.strip():
        raise EmptyDraft("draft abstract is empty")
    template = load_template(PromptStrategy.REFINE)
    return [
        ChatMessage(role="system", content=template.system),
        ChatMessage(role="user", content=fill(template.users[0], {"draft_abstract": draft})),
    ]


# ========== Reply parsing ==========

def _balanced_objects(text: str) -> Iterator[str]:
    """Yield every balanced {...} substring, string literals respected, in order of opening brace."""
    for start, ch in enumerate(text):
        if ch != "{":
            continue
        depth, in_string, escaped = 0, False, False
        for end in range(start, len(text)):
            c = text[end]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
            elif c == '"':
                in_string = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    yield text[start:end + 1]
                    break


def _to_reply(candidate: str, key: str, raw: str) -> Optional[LlmJsonReply]:
    try:
        obj = json.loads(candidate)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict) or not isinstance(obj.get(key), str):
        return None
    reasoning = obj.get("reasoning", "")
    if not isinstance(reasoning, str):
        reasoning = json.dumps(reasoning, ensure_ascii=False)
    return LlmJsonReply(summary=obj[key].strip(), reasoning=reasoning, raw=raw)


def parse_llm_json(raw: str, key: str = "summary") -> LlmJsonReply:
    """Extract the JSON reply object.

    Ladder: direct parse, then fenced code blocks, then the first balanced
    {...} that carries `key`.

    Raises:
        UnparseableReply: every rung failed.
    """
    candidates = [raw.strip()]
    candidates.extend(block.strip() for block in _FENCE.findall(raw))
    for candidate in candidates:
        reply = _to_reply(candidate, key, raw)
        if reply is not None:
            return reply

    for candidate in _balanced_objects(raw):
        reply = _to_reply(candidate, key, raw)
        if reply is not None:
            return reply

    raise UnparseableReply(f"no JSON object with a {key!r} string in reply: {raw[:120]!r}")
