"""Source/target pair records and gate verdicts."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

GATE_ORDER = ("judge", "similarity", "leakage")


@dataclass
class Verdict:
    status: str  # "pass" | "fail" | "pending"
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class AttributePair:
    """One generated source/target pair plus its filter verdicts.

    Image fields are path references relative to the run directory so a
    run stays relocatable.  Verdicts are recorded in gate order (judge,
    then similarity, then leakage); a pair is accepted only when all
    three passed.
    """

    pair_id: str
    subject: str
    attribute_kind: str
    target_descriptor: str
    seed: int
    source_prompt: str
    target_prompt: str
    source_image: str
    target_image: str
    source_descriptor: Optional[str] = None
    template_index: int = 0
    verdicts: dict[str, Verdict] = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return all(
            gate in self.verdicts and self.verdicts[gate].passed
            for gate in GATE_ORDER
        )

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["verdicts"] = {
            name: {"status": v.status, "detail": v.detail}
            for name, v in self.verdicts.items()
        }
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "AttributePair":
        verdicts = {
            name: Verdict(status=v["status"], detail=dict(v.get("detail", {})))
            for name, v in d.get("verdicts", {}).items()
        }
        fields = {k: v for k, v in d.items() if k != "verdicts"}
        return cls(**fields, verdicts=verdicts)
