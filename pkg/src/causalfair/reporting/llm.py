"""Optional narrative report from a chat-completions style HTTP endpoint."""

from __future__ import annotations

import json
import logging
import os
import re
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import httpx

from ..errors import (
    ConfigError,
    EndpointNetworkError,
    EndpointStatusError,
    EndpointTimeoutError,
    LLMError,
    MissingCredentialError,
)
from .prompt import PromptPair

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 120.0


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = DEFAULT_TIMEOUT
    reasoning_effort: str | None = "high"
    enabled: bool = False

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> LlmConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown llm config fields {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path: str | Path) -> LlmConfig:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read llm config: {exc}") from None
        return cls.from_dict(raw.get("llm", raw))


@dataclass(frozen=True)
class ParsedReport:
    text_section: str | None
    latex_section: str | None
    raw: str
    structure_violation: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "text_section": self.text_section,
            "latex_section": self.latex_section,
            "raw": self.raw,
            "structure_violation": self.structure_violation,
        }


_LABEL = re.compile(r"^\s*(?:\d+\)\s*)?[`*#\s]*(TEXT|LATEX):[`*]*\s*(.*)$")


def parse_report(raw: str) -> ParsedReport:
    """Split a reply into its ``TEXT:`` and ``LATEX:`` sections.

    Anything other than exactly one of each, in that order, is flagged as a
    structure violation and the raw reply is kept.
    """
    labels: list[tuple[str, int, str]] = []
    lines = raw.splitlines()
    for i, line in enumerate(lines):
        m = _LABEL.match(line)
        if m:
            labels.append((m.group(1), i, m.group(2)))
    if [lab for lab, _, _ in labels] != ["TEXT", "LATEX"]:
        return ParsedReport(None, None, raw, True)
    (_, ti, trest), (_, li, lrest) = labels
    text = "\n".join(([trest] if trest else []) + lines[ti + 1 : li]).strip()
    latex = "\n".join(([lrest] if lrest else []) + lines[li + 1 :]).strip()
    ok = bool(text) and latex.startswith("\\documentclass")
    return ParsedReport(text, latex, raw, not ok)


def request_body(cfg: LlmConfig, p: PromptPair) -> dict[str, Any]:
    body: dict[str, Any] = {"model": cfg.model, "messages": p.messages()}
    if cfg.reasoning_effort:
        body["reasoning_effort"] = cfg.reasoning_effort
    return body


def request_report(
    cfg: LlmConfig, p: PromptPair, transport: httpx.BaseTransport | None = None
) -> ParsedReport:
    """POST the prompt pair and parse the reply.

    ``transport`` lets tests replay recorded responses without a network.
    """
    if not cfg.endpoint or not cfg.model:
        raise ConfigError("llm config needs both endpoint and model")
    key = os.environ.get(cfg.api_key_env)
    if not key and transport is not None:
        key = "replay"  # recorded replies need no credential
    if not key:
        raise MissingCredentialError(f"environment variable {cfg.api_key_env} is not set")
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    try:
        with httpx.Client(timeout=cfg.timeout, transport=transport) as client:
            resp = client.post(cfg.endpoint, json=request_body(cfg, p), headers=headers)
    except httpx.TimeoutException as exc:
        raise EndpointTimeoutError(f"no reply within {cfg.timeout} s") from exc
    except httpx.TransportError as exc:
        raise EndpointNetworkError(f"request failed: {exc}") from exc
    if not 200 <= resp.status_code < 300:
        raise EndpointStatusError(resp.status_code, resp.text[:2000])
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise LLMError(f"unexpected response shape: {exc}") from None
    report = parse_report(content)
    if report.structure_violation:
        log.warning("model reply does not follow the two-section layout")
    return report
