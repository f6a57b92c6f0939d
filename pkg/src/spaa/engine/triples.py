"""Instruction-tuning triples: (input image, instruction, output image).

One triple per accepted pair; the category and template are drawn with
a seeded RNG so corpus builds reproduce exactly.  Triples serialize to
JSONL, one UTF-8 object per line.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

from ..errors import DanglingImageRefError
from .instructions import (
    InstructionFields,
    eligible_categories,
    render_instruction,
)
from .pairs import AttributePair

JSONL_FIELDS = (
    "pair_id",
    "input_image",
    "instruction",
    "output_image",
    "category",
    "subject",
    "attribute_kind",
    "source_descriptor",
    "target_descriptor",
    "seed",
)


@dataclass(frozen=True)
class TripleRecord:
    pair_id: str
    input_image: str
    instruction: str
    output_image: str
    category: str
    subject: str
    attribute_kind: str
    source_descriptor: Optional[str]
    target_descriptor: str
    seed: int

    def __post_init__(self):
        if not self.instruction:
            raise ValueError("instruction must be nonempty")


def build_triples(
    accepted_pairs: Iterable[AttributePair], rng_seed: int
) -> list[TripleRecord]:
    """One seeded-random (category, template) draw per accepted pair.

    Every pair must have passed all three gates.  Pairs are processed
    in pair_id order so the output is independent of input ordering.
    """
    rng = random.Random(rng_seed)
    triples = []
    for pair in sorted(accepted_pairs, key=lambda p: p.pair_id):
        if not pair.accepted:
            raise ValueError(
                f"pair {pair.pair_id!r} has not passed all gates; "
                f"triples are built from accepted pairs only"
            )
        fields = InstructionFields(
            subject=pair.subject,
            target_descriptor=pair.target_descriptor,
            attribute_kind=pair.attribute_kind,
            source_descriptor=pair.source_descriptor,
        )
        categories = eligible_categories(fields)
        category = categories[rng.randrange(len(categories))]
        instruction = render_instruction(category, fields, rng)
        triples.append(
            TripleRecord(
                pair_id=pair.pair_id,
                input_image=pair.source_image,
                instruction=instruction,
                output_image=pair.target_image,
                category=category,
                subject=pair.subject,
                attribute_kind=pair.attribute_kind,
                source_descriptor=pair.source_descriptor,
                target_descriptor=pair.target_descriptor,
                seed=pair.seed,
            )
        )
    return triples


def write_triples(
    triples: Iterable[TripleRecord],
    path: Path | str,
    image_root: Optional[Path | str] = None,
) -> Path:
    """Write JSONL; image refs must resolve (relative to ``image_root``,
    default: the output file's directory)."""
    path = Path(path)
    root = Path(image_root) if image_root is not None else path.parent
    lines = []
    for t in triples:
        for ref in (t.input_image, t.output_image):
            target = Path(ref)
            if not target.is_absolute():
                target = root / target
            if not target.exists():
                raise DanglingImageRefError(
                    f"triple {t.pair_id!r} references missing image {ref!r}"
                )
        record = asdict(t)
        lines.append(json.dumps({k: record[k] for k in JSONL_FIELDS}))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def read_triples(path: Path | str) -> list[TripleRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        out.append(TripleRecord(**json.loads(line)))
    return out
