from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

log = logging.getLogger(__name__)

# Line breaks and trailing spaces are part of the template.
PROMPT_TEMPLATE = (
    "\n"
    "You are a friendly chatbot who responds to the user's question by \n"
    "looking into context.</s>\n"
    "Context: \n"
    "{context}\n"
    "</s>\n"
    "Question: {question}</s>\n"
)


@dataclass(frozen=True)
class PromptBundle:
    filtered_prompt: str
    original_prompt: str
    question: str
    context_token_estimate: int
    original_token_estimate: int


def build_prompt(docs: Sequence[str], question: str) -> str:
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    if not docs:
        log.warning("building a prompt with an empty context")
    return PROMPT_TEMPLATE.format(context="\n".join(docs), question=question)


def token_estimate(docs: Sequence[str]) -> int:
    """Whitespace-token count of the joined context."""
    return len("\n".join(docs).split())


def build_prompt_bundle(filtered_docs: Sequence[str], original_docs: Sequence[str], question: str) -> PromptBundle:
    return PromptBundle(
        filtered_prompt=build_prompt(filtered_docs, question),
        original_prompt=build_prompt(original_docs, question),
        question=question,
        context_token_estimate=token_estimate(filtered_docs),
        original_token_estimate=token_estimate(original_docs),
    )
