"""Prompt annotation: locating attribute-descriptor tokens.

Descriptor matching normalizes tokens by case-folding and stripping
surrounding punctuation; a multi-word descriptor matches a consecutive
token run and its span covers all constituent tokens.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .errors import DescriptorNotFoundError

Tokenizer = Callable[[str], list[str]]

_PUNCT = string.punctuation


def normalize_token(token: str) -> str:
    return token.casefold().strip(_PUNCT)


@dataclass(frozen=True)
class AttributeSpan:
    """Token indices (consecutive) covered by one descriptor occurrence."""

    token_indices: tuple[int, ...]
    descriptor: str

    @property
    def start(self) -> int:
        return self.token_indices[0]


@dataclass(frozen=True)
class AnnotatedPrompt:
    text: str
    tokens: tuple[str, ...]
    attribute_spans: tuple[AttributeSpan, ...]
    subject_span: Optional[tuple[int, int]] = None

    def __post_init__(self):
        for span in self.attribute_spans:
            desc_tokens = [normalize_token(t) for t in span.descriptor.split()]
            for offset, idx in enumerate(span.token_indices):
                if not 0 <= idx < len(self.tokens):
                    raise ValueError(
                        f"span index {idx} out of range for "
                        f"{len(self.tokens)} tokens"
                    )
                if normalize_token(self.tokens[idx]) != desc_tokens[offset]:
                    raise ValueError(
                        f"token {self.tokens[idx]!r} at index {idx} does not "
                        f"match descriptor {span.descriptor!r}"
                    )

    @property
    def attribute_token_indices(self) -> tuple[int, ...]:
        """Flat, sorted, de-duplicated token indices across all spans."""
        seen: set[int] = set()
        for span in self.attribute_spans:
            seen.update(span.token_indices)
        return tuple(sorted(seen))


def locate_attribute_tokens(
    prompt_text: str,
    attrs: Sequence[str],
    tokenizer: Tokenizer,
) -> AnnotatedPrompt:
    """Find every occurrence of every descriptor in the tokenized prompt.

    Raises DescriptorNotFoundError naming the first descriptor with no
    occurrence.  Deterministic given the tokenizer.
    """
    if not attrs:
        raise ValueError("attrs must be nonempty")
    tokens = tuple(tokenizer(prompt_text))
    norm = [normalize_token(t) for t in tokens]
    spans: list[AttributeSpan] = []
    for descriptor in attrs:
        desc_tokens = [normalize_token(t) for t in tokenizer(descriptor)]
        if not desc_tokens:
            raise DescriptorNotFoundError(descriptor, prompt_text)
        found = False
        for i in range(0, len(norm) - len(desc_tokens) + 1):
            if norm[i : i + len(desc_tokens)] == desc_tokens:
                spans.append(
                    AttributeSpan(tuple(range(i, i + len(desc_tokens))), descriptor)
                )
                found = True
        if not found:
            raise DescriptorNotFoundError(descriptor, prompt_text)
    spans.sort(key=lambda s: (s.start, s.descriptor))
    return AnnotatedPrompt(text=prompt_text, tokens=tokens, attribute_spans=tuple(spans))
