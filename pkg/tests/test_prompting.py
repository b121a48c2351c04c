from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ragprune.prompting import build_prompt, build_prompt_bundle, token_estimate

FIXTURE = Path(__file__).parent / "fixtures" / "prompt_ab.txt"


def test_matches_fixture_bytes():
    assert build_prompt(["A", "B"], "Q?").encode("utf-8") == FIXTURE.read_bytes()


def test_three_terminators_and_question_once():
    p = build_prompt(["first doc", "second doc"], "What happened in 1973?")
    assert p.count("</s>") == 3
    assert p.count("What happened in 1973?") == 1
    assert "Context: \nfirst doc\nsecond doc\n</s>\n" in p
    assert p.endswith("Question: What happened in 1973?</s>\n")


def test_empty_docs_warns(caplog):
    p = build_prompt([], "Q?")
    assert "Context: \n\n</s>" in p
    assert "empty context" in caplog.text


def test_empty_question():
    with pytest.raises(ValueError):
        build_prompt(["A"], "  ")


def test_braces_in_docs_are_literal():
    assert "{question}" in build_prompt(["{question}"], "Q?")


@given(st.lists(st.text(max_size=30), max_size=20), st.integers(0, 20))
def test_filtered_context_no_larger(docs, cut):
    filtered = docs[:cut]
    bundle = build_prompt_bundle(filtered, docs[: len(filtered)], "q")
    assert bundle.context_token_estimate <= token_estimate(docs)
    assert build_prompt(docs, "q") == build_prompt(list(docs), "q")
