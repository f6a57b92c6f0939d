"""Target-image verification through a yes/no visual judge."""

from __future__ import annotations

import string
from typing import Protocol, runtime_checkable

from .pairs import Verdict

QUERY_TEMPLATE = "What {} does the {} appear to be? {}? Answer yes or no."


def format_verification_query(
    attribute_kind: str, subject: str, descriptor: str
) -> str:
    """The verification question put to the judge.

    Placeholders are filled in order: attribute kind, subject name,
    target descriptor.
    """
    for name, value in (
        ("attribute_kind", attribute_kind),
        ("subject", subject),
        ("descriptor", descriptor),
    ):
        if not value:
            raise ValueError(f"{name} must be nonempty")
    return QUERY_TEMPLATE.format(attribute_kind, subject, descriptor)


@runtime_checkable
class VisualJudge(Protocol):
    """Answers a yes/no question about an image."""

    def answer(self, image_ref: str, query: str) -> str: ...


def normalize_answer(raw: str) -> str:
    return raw.strip().strip(string.punctuation + string.whitespace).casefold()


def judge_target(judge: VisualJudge, image_ref: str, query: str) -> Verdict:
    """Pass iff the normalized answer is "yes"; judge failure is pending.

    A transport or availability failure never silently passes: the
    verdict stays pending with the error recorded for retry.
    """
    try:
        raw = judge.answer(image_ref, query)
    except Exception as exc:
        return Verdict(
            "pending",
            {"query": query, "error": f"{type(exc).__name__}: {exc}", "retryable": True},
        )
    normalized = normalize_answer(raw)
    status = "pass" if normalized == "yes" else "fail"
    return Verdict(status, {"query": query, "raw_answer": raw, "normalized": normalized})
