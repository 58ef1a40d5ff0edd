"""System/user prompt pair handed to a reporting model."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from ..errors import ReportError
from .bundle import ReportBundle

SYSTEM_PROMPT_FILE = "system_prompt.md"
SYSTEM_PROMPT_SHA256 = "13e19f6aeec5c7223272efcadf5bf571f80db5cb99be5b34f295a38284915b5b"
REPORT_TITLE_LINE = '- Start with: `Title: "Fairness Decomposition Report"`'


@lru_cache(maxsize=1)
def system_prompt() -> str:
    """The stored instructions, verified against their digest."""
    try:
        raw = resources.files(__package__).joinpath(SYSTEM_PROMPT_FILE).read_bytes()
    except FileNotFoundError:
        raise ReportError("system prompt fixture is missing") from None
    if hashlib.sha256(raw).hexdigest() != SYSTEM_PROMPT_SHA256:
        raise ReportError("system prompt fixture does not match its recorded digest")
    return raw.decode("utf-8")


@dataclass(frozen=True)
class PromptPair:
    system: str
    user: str

    def to_dict(self) -> dict[str, str]:
        return {"system": self.system, "user": self.user}

    def messages(self) -> list[dict[str, str]]:
        return [{"role": "system", "content": self.system}, {"role": "user", "content": self.user}]


def assemble_prompts(b: ReportBundle) -> PromptPair:
    """System text verbatim plus the serialized bundle; nothing else is sent."""
    return PromptPair(system_prompt(), b.to_json())
