"""Object-attribute dataset engine: generation, gating, templating, triples."""

from .vocabulary import AttributeVocabulary, DEFAULT_PROMPT_TEMPLATES
from .pairs import AttributePair, Verdict
from .verification import format_verification_query, judge_target
from .gating import background_mask, leakage_count, leakage_threshold, similarity_gate
from .instructions import InstructionFields, render_instruction
from .triples import TripleRecord, build_triples, read_triples, write_triples

__all__ = [
    "AttributeVocabulary",
    "DEFAULT_PROMPT_TEMPLATES",
    "AttributePair",
    "Verdict",
    "format_verification_query",
    "judge_target",
    "background_mask",
    "leakage_count",
    "leakage_threshold",
    "similarity_gate",
    "InstructionFields",
    "render_instruction",
    "TripleRecord",
    "build_triples",
    "read_triples",
    "write_triples",
]
