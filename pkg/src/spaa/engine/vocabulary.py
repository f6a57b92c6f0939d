"""Attribute vocabularies and source-prompt templates.

The color and material lists are fixed (43 and 14 names); subjects are
caller configuration.  Each prompt template carries a ``{descriptor}``
and a ``{subject}`` slot; rendering with an empty descriptor (and
whitespace cleanup) yields the source prompt, rendering with the target
descriptor yields the target prompt, so both branches share phrasing.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..colors import COLORS, MATERIALS

DEFAULT_PROMPT_TEMPLATES: tuple[str, ...] = (
    "a photo of a {descriptor} {subject}",
    "a {descriptor} {subject} on a wooden table",
    "a close-up photo of a {descriptor} {subject}",
    "a studio photograph of a {descriptor} {subject}",
    "a {descriptor} {subject} in a living room",
    "a professional product photo of a {descriptor} {subject}",
    "a {descriptor} {subject} on a white background",
    "an outdoor photo of a {descriptor} {subject}",
    "a high-resolution image of a {descriptor} {subject}",
    "a {descriptor} {subject} under soft studio lighting",
    "a {descriptor} {subject} placed on a shelf",
    "a photograph of a {descriptor} {subject} at golden hour",
    "a {descriptor} {subject} against a plain gray backdrop",
    "a detailed photo of a {descriptor} {subject} indoors",
    "a {descriptor} {subject} on a kitchen counter",
    "a wide shot of a {descriptor} {subject} in a garden",
    "a {descriptor} {subject} next to a window",
    "a minimalist photo of a {descriptor} {subject}",
    "a {descriptor} {subject} centered in the frame",
)


def render_prompt(template: str, subject: str, descriptor: str | None) -> str:
    """Fill a template; a missing descriptor collapses cleanly."""
    text = template.format(descriptor=descriptor or "", subject=subject)
    return " ".join(text.split())


@dataclass(frozen=True)
class AttributeVocabulary:
    subjects: tuple[str, ...] = ()
    prompt_templates: tuple[str, ...] = DEFAULT_PROMPT_TEMPLATES
    colors: tuple[str, ...] = COLORS
    materials: tuple[str, ...] = MATERIALS

    def descriptors_for(self, attribute_kind: str) -> tuple[str, ...]:
        if attribute_kind == "color":
            return self.colors
        if attribute_kind == "material":
            return self.materials
        raise ValueError(
            f"attribute_kind must be 'color' or 'material', got {attribute_kind!r}"
        )
