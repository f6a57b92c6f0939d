"""Pair generation and the three-gate filter pipeline.

Gate order is fixed: judge, then similarity, then leakage.  A failing
or pending gate short-circuits the rest, so a judge-rejected pair never
invokes the similarity scorer or the leakage filter.  Per-pair work is
independent; a bounded thread pool parallelizes it with results merged
in pair order.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..backend import DiffusionBackend
from ..errors import DetectionMissError
from ..images import chw_to_hwc, float_to_u8, load_png, save_mask_png, save_png
from ..intervention import spaa_denoise_pair
from ..metrics import PairScorer
from ..schedule import AmplificationSchedule, InterventionConfig
from .gating import (
    GroundedDetector,
    Segmenter,
    background_mask,
    leakage_count,
    leakage_threshold,
    leakage_verdict,
    similarity_gate,
)
from .pairs import AttributePair, Verdict
from .vocabulary import render_prompt
from .verification import VisualJudge, format_verification_query, judge_target


def pair_slug(subject: str, descriptor: str, template_index: int, seed: int) -> str:
    raw = f"{subject}-{descriptor}-t{template_index}-s{seed:04d}"
    return re.sub(r"[^A-Za-z0-9._-]+", "_", raw)


@dataclass
class GenerationSpec:
    """One pair to synthesize on the backend."""

    pair_id: str
    subject: str
    attribute_kind: str
    target_descriptor: str
    source_descriptor: Optional[str]
    template: str
    template_index: int
    seed: int

    @property
    def source_prompt(self) -> str:
        return render_prompt(self.template, self.subject, self.source_descriptor)

    @property
    def target_prompt(self) -> str:
        return render_prompt(self.template, self.subject, self.target_descriptor)


def enumerate_generation_grid(
    subjects: list[str],
    attribute_kind: str,
    descriptors: list[str],
    seeds: list[int],
    templates: list[str],
    template_indices: list[int],
    source_descriptor: Optional[str] = None,
) -> list[GenerationSpec]:
    specs = []
    for subject in subjects:
        for descriptor in descriptors:
            for t_idx in template_indices:
                for seed in seeds:
                    specs.append(
                        GenerationSpec(
                            pair_id=pair_slug(subject, descriptor, t_idx, seed),
                            subject=subject,
                            attribute_kind=attribute_kind,
                            target_descriptor=descriptor,
                            source_descriptor=source_descriptor,
                            template=templates[t_idx],
                            template_index=t_idx,
                            seed=seed,
                        )
                    )
    return specs


def generate_pair(
    backend: DiffusionBackend,
    spec: GenerationSpec,
    schedule: AmplificationSchedule,
    resolution_gate: int,
    steps: int,
    out_dir: Path,
    source_store=None,
) -> AttributePair:
    """Run the dual-branch generation for one spec and write its artifacts."""
    config = InterventionConfig(schedule=schedule, resolution_gate=resolution_gate)
    src_img, tgt_img = spaa_denoise_pair(
        backend,
        spec.source_prompt,
        spec.target_prompt,
        attrs=[spec.target_descriptor],
        seed=spec.seed,
        config=config,
        steps=steps,
        source_store=source_store,
    )
    src_name = f"{spec.pair_id}_src.png"
    tgt_name = f"{spec.pair_id}_tgt.png"
    save_png(out_dir / src_name, float_to_u8(chw_to_hwc(src_img)))
    save_png(out_dir / tgt_name, float_to_u8(chw_to_hwc(tgt_img)))
    pair = AttributePair(
        pair_id=spec.pair_id,
        subject=spec.subject,
        attribute_kind=spec.attribute_kind,
        target_descriptor=spec.target_descriptor,
        source_descriptor=spec.source_descriptor,
        seed=spec.seed,
        source_prompt=spec.source_prompt,
        target_prompt=spec.target_prompt,
        source_image=src_name,
        target_image=tgt_name,
        template_index=spec.template_index,
    )
    manifest = {
        "pair_id": spec.pair_id,
        "seed": spec.seed,
        "source_prompt": spec.source_prompt,
        "target_prompt": spec.target_prompt,
        "attrs": [spec.target_descriptor],
        "schedule": {
            "kind": schedule.attribute_kind,
            "R": float(schedule.initial_ratio),
            "delta": float(schedule.decrement_per_step),
            "floor": float(schedule.floor),
        },
        "resolution_gate": resolution_gate,
        "steps": steps,
        "backend_id": backend.backend_id,
    }
    (out_dir / f"{spec.pair_id}.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return pair


@dataclass
class FilterAdapters:
    judge: VisualJudge
    scorer: PairScorer
    detector: GroundedDetector
    segmenter: Segmenter


@dataclass
class FilterSettings:
    similarity_thresholds: Optional[dict[str, float]] = None
    leakage_base_threshold: int = 50
    leakage_scale_with_area: bool = True
    pixel_tolerance: int = 0


def filter_pair(
    pair: AttributePair,
    adapters: FilterAdapters,
    settings: FilterSettings,
    image_root: Path,
    mask_dir: Optional[Path] = None,
) -> AttributePair:
    """Run the gates in order on one pair, short-circuiting on failure."""
    query = format_verification_query(
        pair.attribute_kind, pair.subject, pair.target_descriptor
    )
    pair.verdicts["judge"] = judge_target(
        adapters.judge, str(image_root / pair.target_image), query
    )
    if not pair.verdicts["judge"].passed:
        return pair

    src = load_png(image_root / pair.source_image)
    tgt = load_png(image_root / pair.target_image)
    pair.verdicts["similarity"] = similarity_gate(
        adapters.scorer,
        src.astype(np.float64) / 255.0,
        tgt.astype(np.float64) / 255.0,
        pair.attribute_kind,
        settings.similarity_thresholds,
    )
    if not pair.verdicts["similarity"].passed:
        return pair

    try:
        bg = background_mask(adapters.detector, adapters.segmenter, src, pair.subject)
    except DetectionMissError as exc:
        pair.verdicts["leakage"] = Verdict(
            "pending", {"error": str(exc), "needs_triage": True}
        )
        return pair
    if mask_dir is not None:
        save_mask_png(mask_dir / f"{pair.pair_id}_mask.png", ~bg)
    threshold = leakage_threshold(
        src.shape,
        settings.leakage_base_threshold,
        settings.leakage_scale_with_area,
    )
    count = leakage_count(src, tgt, bg, settings.pixel_tolerance)
    pair.verdicts["leakage"] = leakage_verdict(count, threshold)
    return pair


def filter_pairs(
    pairs: list[AttributePair],
    adapters: FilterAdapters,
    settings: FilterSettings,
    image_root: Path,
    mask_dir: Optional[Path] = None,
    workers: int = 1,
) -> list[AttributePair]:
    """Filter pairs (optionally in parallel); output keeps input order."""
    if workers <= 1:
        return [
            filter_pair(p, adapters, settings, image_root, mask_dir) for p in pairs
        ]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(filter_pair, p, adapters, settings, image_root, mask_dir)
            for p in pairs
        ]
        return [f.result() for f in futures]


def write_pairs_jsonl(pairs: list[AttributePair], path: Path) -> None:
    lines = [json.dumps(p.to_json_dict(), sort_keys=True) for p in pairs]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_pairs_jsonl(path: Path) -> list[AttributePair]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(AttributePair.from_json_dict(json.loads(line)))
    return out
