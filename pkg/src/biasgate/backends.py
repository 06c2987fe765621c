"""Chat-completion backends for the detector.

RemoteChatBackend talks to any endpoint speaking the common chat JSON
shape. MockRuleBackend is a deterministic offline judge used by tests,
benchmarks, and air-gapped deployments: it answers exactly in the
expected template, declaring a sentence biased iff some knowledge-base
statement occurs verbatim (modulo span normalization) inside it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

from ._wire import RetryPolicy, auth_headers, post_json
from .errors import BackendUnavailable
from .knowledge import BiasEntry, KnowledgeBase
from .labels import GoldLabel
from .prompting import PromptBundle, render_gold_answer
from .templates import TemplateSet, default_templates
from .verdict import normalize_span


@runtime_checkable
class ChatBackend(Protocol):
    ident: str

    def complete(self, bundle: PromptBundle) -> str: ...


@dataclass(frozen=True)
class RemoteChatConfig:
    url: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 30.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    api_key: str | None = None
    api_key_header: str = "Authorization"

    @classmethod
    def from_env(cls, **overrides) -> RemoteChatConfig:
        env = os.environ
        params = {
            "url": env.get("BIASGATE_CHAT_URL", ""),
            "model": env.get("BIASGATE_CHAT_MODEL", ""),
            "api_key": env.get("BIASGATE_API_KEY"),
            "api_key_header": env.get("BIASGATE_API_KEY_HEADER", "Authorization"),
        }
        params.update(overrides)
        return cls(**params)


class RemoteChatBackend:
    """Client for a chat-completions endpoint.

    Request:  {"model", "messages": [{"role", "content"}], "temperature",
               "max_tokens"}
    Response: {"choices": [{"message": {"content": str}}]}
    """

    def __init__(self, config: RemoteChatConfig):
        self.config = config
        self.ident = f"remote:{config.model}"

    def complete(self, bundle: PromptBundle) -> str:
        return self.complete_messages(bundle.messages)

    def generate(self, prompt: str) -> str:
        """Plain single-turn generation, used by the gateway's upstream."""
        return self.complete_messages([{"role": "user", "content": prompt}])

    def complete_messages(self, messages: list[dict[str, str]]) -> str:
        body = post_json(
            self.config.url,
            {
                "model": self.config.model,
                "messages": messages,
                "temperature": self.config.temperature,
                "max_tokens": self.config.max_tokens,
            },
            timeout=self.config.timeout,
            policy=self.config.retry,
            headers=auth_headers(self.config.api_key, self.config.api_key_header),
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendUnavailable("chat backend returned a malformed completion") from None
        if not isinstance(content, str):
            raise BackendUnavailable("chat backend returned non-text content")
        return content


class MockRuleBackend:
    """Deterministic judge: verbatim knowledge-base match, template answer.

    The first matching statement in ascending id order decides the verdict.
    The group is the statement's first two whitespace tokens and the
    attribute is the remainder; statements shorter than three tokens fall
    back to the full statement as the attribute so the answer always
    renders.
    """

    ident = "mock-rule"

    def __init__(self, kb: KnowledgeBase, templates: TemplateSet | None = None):
        self.kb = kb
        self.templates = templates or default_templates()
        quotes = self.templates.quote_chars
        self._normalized = [
            (entry, normalize_span(entry.statement, quotes)) for entry in kb.entries
        ]

    def complete(self, bundle: PromptBundle) -> str:
        sentence = normalize_span(bundle.sentence, self.templates.quote_chars)
        for entry, statement in self._normalized:
            if statement and statement in sentence:
                return self._biased_answer(entry)
        return self.templates.section("answer_unbiased")

    def _biased_answer(self, entry: BiasEntry) -> str:
        tokens = entry.statement.split()
        label = GoldLabel(
            biased=True,
            bias_type=entry.bias_type,
            group=" ".join(tokens[:2]),
            attribute=" ".join(tokens[2:]) or entry.statement,
        )
        return render_gold_answer(label, self.templates)


def mock_complete(
    bundle: PromptBundle, kb: KnowledgeBase, templates: TemplateSet | None = None
) -> str:
    """One-shot convenience wrapper around MockRuleBackend."""
    return MockRuleBackend(kb, templates).complete(bundle)
