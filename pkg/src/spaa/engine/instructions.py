"""Editing-instruction templates and rendering.

Three categories: (a) transform the source image into the target,
(b) generate the same object with a different attribute, and, for
colors only, (c) adjust shade within the same hue family.  The banks
are a version-controlled artifact; an LLM client with the same
category contract can replace them through ``render_instruction``'s
``bank`` argument.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from ..colors import hue_group, same_hue
from ..errors import CategoryError

CATEGORY_TRANSFORM = "transform_a"
CATEGORY_CROSS_ATTRIBUTE = "cross_attribute_b"
CATEGORY_SAME_HUE = "same_hue_c"

CATEGORIES = (CATEGORY_TRANSFORM, CATEGORY_CROSS_ATTRIBUTE, CATEGORY_SAME_HUE)

# Placeholders: {subject}, {kind}, {target}, {source} (optional), {hue}.
TEMPLATE_BANK: dict[str, tuple[str, ...]] = {
    CATEGORY_TRANSFORM: (
        "Change the {kind} of the {subject} to {target}.",
        "Turn the {subject}'s {kind} into {target}.",
        "Make the {subject} {target}.",
        "Set the {kind} of the {subject} to {target}.",
        "Give the {subject} a {target} {kind}.",
        "Alter the {subject} so its {kind} becomes {target}.",
        "Transform the {kind} of the {subject} from {source} to {target}.",
        "Replace the {subject}'s {source} {kind} with {target}.",
        "Swap the {kind} of the {subject} from {source} to {target}.",
    ),
    CATEGORY_CROSS_ATTRIBUTE: (
        "Generate the same {subject} but with a {target} {kind}.",
        "Produce an identical {subject} whose {kind} is {target}.",
        "Create a version of this {subject} with a {target} {kind}.",
        "Render the {subject} again, this time with {target} as its {kind}.",
        "Show the same {subject} with its {kind} changed to {target}.",
        "Make an identical copy of the {subject} where the {kind} is {target}.",
        "Reproduce the {subject} exactly, but give it a {target} {kind}.",
        "Generate this {subject} with a different {kind}: {target}.",
    ),
    CATEGORY_SAME_HUE: (
        "Adjust the {subject} to a {target} tone while keeping the same hue.",
        "Shift the {subject}'s color to {target} without leaving its {hue} hue.",
        "Make the {subject} {target}, staying within the same {hue} hue.",
        "Fine-tune the {subject}'s color to {target}, preserving its {hue} hue.",
        "Re-shade the {subject} to {target} within the {hue} family.",
        "Adjust brightness and saturation to make the {subject} {target}.",
        "Keep the {subject}'s hue but adjust its shade to {target}.",
        "Tune the {subject} toward {target} while holding the {hue} hue fixed.",
    ),
}


@dataclass(frozen=True)
class InstructionFields:
    subject: str
    target_descriptor: str
    attribute_kind: str
    source_descriptor: Optional[str] = None


def eligible_categories(fields: InstructionFields) -> tuple[str, ...]:
    """Categories compatible with the pair's attribute metadata.

    Same-hue instructions require a color pair whose source descriptor
    (when known) shares the target's hue family.
    """
    cats = [CATEGORY_TRANSFORM, CATEGORY_CROSS_ATTRIBUTE]
    if fields.attribute_kind == "color" and (
        fields.source_descriptor is None
        or same_hue(fields.source_descriptor, fields.target_descriptor)
    ):
        cats.append(CATEGORY_SAME_HUE)
    return tuple(cats)


def render_instruction(
    category: str,
    fields: InstructionFields,
    rng: random.Random,
    bank: Optional[dict[str, tuple[str, ...]]] = None,
) -> str:
    """Pick a template uniformly from the category bank and substitute.

    Templates needing a source descriptor are skipped when none is
    known.  Deterministic given the rng state.
    """
    if category not in CATEGORIES:
        raise CategoryError(f"unknown category {category!r}")
    if category == CATEGORY_SAME_HUE:
        if fields.attribute_kind != "color":
            raise CategoryError(
                f"category {category!r} applies to color pairs only, "
                f"got kind {fields.attribute_kind!r}"
            )
        if fields.source_descriptor is not None and not same_hue(
            fields.source_descriptor, fields.target_descriptor
        ):
            raise CategoryError(
                f"{fields.source_descriptor!r} and {fields.target_descriptor!r} "
                f"are in different hue families"
            )
    templates = (bank or TEMPLATE_BANK)[category]
    if fields.source_descriptor is None:
        templates = tuple(t for t in templates if "{source}" not in t)
    template = templates[rng.randrange(len(templates))]
    hue = hue_group(fields.target_descriptor) if fields.attribute_kind == "color" else ""
    return template.format(
        subject=fields.subject,
        kind=fields.attribute_kind,
        target=fields.target_descriptor,
        source=fields.source_descriptor or "",
        hue=hue,
    )
