"""Config-driven batch commands for generation, filtering, templating,
attention analysis, and evaluation.

Every command resolves its config, derives a deterministic run id from
the resolved parameters and inputs, writes outputs plus a resolved
snapshot under ``<output_dir>/<run_id>/``, and is idempotent: re-running
with identical config and inputs reproduces identical bytes.  Logs are
structured JSONL on stderr so output directories stay content-stable.
"""

from __future__ import annotations

import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import click

import functools

from . import config as config_mod
from .adapters import build_adapter, build_backend
from .analysis import principal_components, render_heatmaps, write_singular_value_report
from .attention import AttentionStore, capture_self_at_most, mean_map_over_timesteps
from .engine.pipeline import (
    FilterAdapters,
    FilterSettings,
    enumerate_generation_grid,
    filter_pairs,
    generate_pair,
    read_pairs_jsonl,
    write_pairs_jsonl,
)
from .engine.triples import build_triples, write_triples
from .engine.vocabulary import AttributeVocabulary
from .errors import (
    AttentionStoreMiss,
    ConfigValidationError,
    DanglingImageRefError,
    DescriptorNotFoundError,
    InjectionMissError,
    ScorerUnavailableError,
    ShapeMismatchError,
    VocabularyError,
)
from .images import load_mask_png, load_png, u8_to_float
from .metrics import MetricReport, hue_l1, score_with, ssim
from .schedule import AmplificationSchedule
from .store_io import load_store, save_store
from .toy_backend import ToyDenoiser

logger = logging.getLogger("spaa")


class _JsonLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {"level": record.levelname, "event": record.getMessage()}
        if record.args and isinstance(record.args, dict):
            payload.update(record.args)
        return json.dumps(payload, sort_keys=True)


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLogFormatter())
    logging.basicConfig(level=level, handlers=[handler], force=True)


def _load_config(path: Optional[str], overrides: dict) -> dict:
    try:
        cfg = config_mod.load_config(path)
        if overrides:
            cfg = config_mod.resolve_config(config_mod.deep_merge(cfg, overrides))
    except ConfigValidationError as exc:
        # machine-readable summary on stderr, human-readable via click
        print(
            json.dumps({"error": "config-validation", "violations": exc.violations}),
            file=sys.stderr,
        )
        raise click.ClickException(str(exc)) from exc
    _setup_logging(cfg["global"]["log_level"])
    return cfg


def _start_run(cfg: dict, command: str, inputs: dict[str, str], output_dir: Optional[str]):
    root = Path(output_dir or cfg["global"]["output_dir"])
    run_id = config_mod.run_id_for(command, cfg, inputs)
    run_dir = root / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    config_mod.write_snapshot(run_dir, command, cfg, inputs)
    logger.info("run started", {"command": command, "run_dir": str(run_dir)})
    return run_dir


def _build_backend(gen_cfg: dict):
    try:
        return build_backend(gen_cfg)
    except (ScorerUnavailableError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc


_REPORTABLE_ERRORS = (
    AttentionStoreMiss,
    DanglingImageRefError,
    DescriptorNotFoundError,
    InjectionMissError,
    ScorerUnavailableError,
    ShapeMismatchError,
    VocabularyError,
    FileNotFoundError,
)


def _json_errors(fn):
    """Known failures exit nonzero with a machine-readable summary line."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _REPORTABLE_ERRORS as exc:
            print(
                json.dumps(
                    {"error": type(exc).__name__, "message": str(exc)},
                    sort_keys=True,
                ),
                file=sys.stderr,
            )
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _schedule_from(gen_cfg: dict, kind: str) -> AmplificationSchedule:
    entry = gen_cfg["schedules"][kind]
    return AmplificationSchedule(kind, entry["R"], entry["delta"], entry["floor"])


@click.group()
def main() -> None:
    """Attribute-variation generation, dataset filtering, and evaluation."""


@main.command("generate-pairs")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", "seed_override", type=int, default=None, help="Replace the seed list.")
@click.option("--output-dir", type=click.Path(), default=None)
@_json_errors
def generate_pairs_cmd(config_path, seed_override, output_dir) -> None:
    """Synthesize source/target image pairs over the configured grid."""
    overrides = {}
    if seed_override is not None:
        overrides = {"generation": {"seeds": [seed_override]}}
    cfg = _load_config(config_path, overrides)
    gen = cfg["generation"]
    run_dir = _start_run(cfg, "generate-pairs", {}, output_dir)

    vocab = AttributeVocabulary(subjects=tuple(gen["subjects"]))
    kind = gen["attribute_kind"]
    descriptors = gen["descriptors"] or list(vocab.descriptors_for(kind))
    specs = enumerate_generation_grid(
        subjects=gen["subjects"],
        attribute_kind=kind,
        descriptors=descriptors,
        seeds=gen["seeds"],
        templates=list(vocab.prompt_templates),
        template_indices=gen["template_indices"],
        source_descriptor=gen["source_descriptor"],
    )
    backend = _build_backend(gen)
    schedule = _schedule_from(gen, kind)
    dump_cfg = gen["attention_dump"]
    pairs = []
    for spec in specs:
        store = None
        if dump_cfg["enabled"]:
            store = AttentionStore(
                capture_policy=capture_self_at_most(dump_cfg["max_resolution"])
            )
        pair = generate_pair(
            backend,
            spec,
            schedule,
            gen["resolution_gate"],
            gen["steps"],
            run_dir,
            source_store=store,
        )
        if store is not None:
            save_store(store, run_dir / f"{spec.pair_id}_attn")
        pairs.append(pair)
        logger.info("pair generated", {"pair_id": spec.pair_id})
    write_pairs_jsonl(pairs, run_dir / "pairs.jsonl")
    click.echo(str(run_dir))


@main.command("filter")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True,
              help="pairs.jsonl from generate-pairs (or its run directory).")
@click.option("--output-dir", type=click.Path(), default=None)
@_json_errors
def filter_cmd(config_path, pairs_path, output_dir) -> None:
    """Run the judge, similarity, and leakage gates over generated pairs."""
    cfg = _load_config(config_path, {})
    pairs_file = Path(pairs_path)
    if pairs_file.is_dir():
        pairs_file = pairs_file / "pairs.jsonl"
    run_dir = _start_run(cfg, "filter", {"pairs": str(pairs_path)}, output_dir)

    pipe = cfg["pipeline"]
    adapters = FilterAdapters(
        judge=build_adapter("judge", pipe["adapters"]["judge"]),
        scorer=build_adapter("scorer", pipe["adapters"]["scorer"]),
        detector=build_adapter("detector", pipe["adapters"]["detector"]),
        segmenter=build_adapter("segmenter", pipe["adapters"]["segmenter"]),
    )
    thr = pipe["thresholds"]
    settings = FilterSettings(
        similarity_thresholds={
            "color": thr["color_sim"],
            "material": thr["material_sim"],
        },
        leakage_base_threshold=thr["leakage_count"],
        leakage_scale_with_area=thr["leakage_scale_with_area"],
        pixel_tolerance=thr["pixel_tolerance"],
    )
    pairs = read_pairs_jsonl(pairs_file)
    mask_dir = run_dir / "masks"
    mask_dir.mkdir(exist_ok=True)
    filtered = filter_pairs(
        pairs,
        adapters,
        settings,
        image_root=pairs_file.parent,
        mask_dir=mask_dir,
        workers=cfg["global"]["worker_count"],
    )
    write_pairs_jsonl(filtered, run_dir / "filtered.jsonl")
    accepted = [p for p in filtered if p.accepted]
    write_pairs_jsonl(accepted, run_dir / "accepted.jsonl")
    logger.info(
        "filter finished",
        {"total": len(filtered), "accepted": len(accepted)},
    )
    click.echo(str(run_dir))


@main.command("make-instructions")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--accepted", "accepted_path", type=click.Path(exists=True), required=True,
              help="accepted.jsonl from filter (or its run directory).")
@click.option("--output-dir", type=click.Path(), default=None)
@_json_errors
def make_instructions_cmd(config_path, accepted_path, output_dir) -> None:
    """Render one editing instruction per accepted pair into a triples file."""
    cfg = _load_config(config_path, {})
    accepted_file = Path(accepted_path)
    if accepted_file.is_dir():
        accepted_file = accepted_file / "accepted.jsonl"
    run_dir = _start_run(cfg, "make-instructions", {"accepted": str(accepted_path)}, output_dir)
    pairs = read_pairs_jsonl(accepted_file)
    triples = build_triples(pairs, cfg["pipeline"]["triples_seed"])
    # image refs are relative to the generation run; resolve against the
    # snapshot recorded beside the accepted list
    image_root = _find_image_root(accepted_file)
    write_triples(triples, run_dir / "triples.jsonl", image_root=image_root)
    logger.info("triples written", {"count": len(triples)})
    click.echo(str(run_dir))


def _find_image_root(accepted_file: Path) -> Path:
    snapshot = accepted_file.parent / "resolved_config.json"
    if snapshot.exists():
        snap = config_mod.read_snapshot(snapshot)
        src = snap.get("inputs", {}).get("pairs")
        if src:
            root = Path(src)
            if root.is_file():
                root = root.parent
            if root.exists():
                return root
    return accepted_file.parent


@main.command("analyze-attn")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--store", "store_dir", type=click.Path(exists=True), required=True)
@click.option("--layer", "layer_id", type=str, required=True)
@click.option("--top-k", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_json_errors
def analyze_attn_cmd(config_path, store_dir, layer_id, top_k, out_dir) -> None:
    """Render SVD component heatmaps of a layer's mean self-attention map."""
    cfg = _load_config(config_path, {})
    ana = cfg["analysis"]
    k = top_k if top_k is not None else ana["top_k"]
    store = load_store(store_dir)
    mean_map = mean_map_over_timesteps(store, layer_id)
    components = principal_components(
        mean_map.numpy(), k, layer_id=layer_id, side=ana["side"]
    )
    out = Path(out_dir)
    render_heatmaps(components, out_size=512, mode=ana["mode"], out_dir=out)
    write_singular_value_report(components, out / "singular_values.json")
    click.echo(str(out))


@main.command("evaluate")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--masks", "masks_dir", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_json_errors
def evaluate_cmd(config_path, pairs_path, masks_dir, out_path) -> None:
    """Compute the metric report (SSIM, hue distance, configured scorers)."""
    cfg = _load_config(config_path, {})
    pairs_file = Path(pairs_path)
    if pairs_file.is_dir():
        pairs_file = pairs_file / "pairs.jsonl"
    pairs = read_pairs_jsonl(pairs_file)
    image_root = pairs_file.parent
    scorer_cfg = cfg["evaluation"]["scorers"]
    scorers = {}
    for role in ("dino_gray", "clip", "lpips"):
        if role in scorer_cfg:
            try:
                scorers[role] = build_adapter(role, scorer_cfg[role])
            except ScorerUnavailableError as exc:
                logger.warning("scorer unavailable", {"role": role, "reason": str(exc)})
    reports = []
    for pair in sorted(pairs, key=lambda p: p.pair_id):
        src = u8_to_float(load_png(image_root / pair.source_image))
        tgt = u8_to_float(load_png(image_root / pair.target_image))
        skipped: dict[str, str] = {}
        mask = None
        if masks_dir is not None:
            mask_path = Path(masks_dir) / f"{pair.pair_id}_mask.png"
            if mask_path.exists():
                mask = load_mask_png(mask_path)
        report = MetricReport(pair_id=pair.pair_id, ssim=ssim(src, tgt))
        if pair.attribute_kind == "color":
            if mask is not None and mask.any():
                report.hue_l1 = hue_l1(tgt, mask, pair.target_descriptor)
                report.masks_used = str(mask_path)
            else:
                skipped["hue_l1"] = "no object mask available"
        if "dino_gray" in scorers:
            report.dino_gray = score_with(scorers["dino_gray"], src, tgt)
        else:
            skipped.setdefault("dino_gray", "no adapter configured")
        if "clip" in scorers:
            report.clip_score = score_with(scorers["clip"], tgt, pair.target_prompt)
        else:
            skipped.setdefault("clip_score", "no adapter configured")
        if "lpips" in scorers and mask is not None:
            report.lpips_bg = score_with(scorers["lpips"], src, tgt, ~mask)
        elif "lpips" in scorers:
            skipped["lpips_bg"] = "no object mask available"
        else:
            skipped.setdefault("lpips_bg", "no adapter configured")
        if skipped:
            report.skipped = skipped
        reports.append(report)
    out_file = Path(out_path)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in reports]
    out_file.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    click.echo(str(out_file))


@main.command("rerun")
@click.option("--snapshot", "snapshot_path", type=click.Path(exists=True), required=True)
@click.option("--output-dir", type=click.Path(), default=None)
@click.pass_context
@_json_errors
def rerun_cmd(ctx, snapshot_path, output_dir) -> None:
    """Re-execute a command from its resolved snapshot."""
    snap = config_mod.read_snapshot(snapshot_path)
    command = snap["command"]
    inputs = snap.get("inputs", {})
    if command == "generate-pairs":
        ctx.invoke(generate_pairs_cmd, config_path=snapshot_path, seed_override=None,
                   output_dir=output_dir)
    elif command == "filter":
        ctx.invoke(filter_cmd, config_path=snapshot_path,
                   pairs_path=inputs["pairs"], output_dir=output_dir)
    elif command == "make-instructions":
        ctx.invoke(make_instructions_cmd, config_path=snapshot_path,
                   accepted_path=inputs["accepted"], output_dir=output_dir)
    else:
        raise click.ClickException(f"snapshot command {command!r} is not rerunnable")


@main.command("conformance")
@click.option("--arch-seed", type=int, default=0)
def conformance_cmd(arch_seed: int) -> None:
    """Run the backend conformance suite against the toy backend."""
    from .backend import run_conformance

    t0 = time.perf_counter()
    report = run_conformance(ToyDenoiser(arch_seed=arch_seed))
    dt = time.perf_counter() - t0
    if report.ok:
        click.echo(f"conformance OK ({dt:.2f}s)")
    else:
        for failure in report.failures:
            click.echo(f"FAIL: {failure}", err=True)
        raise SystemExit(1)


if __name__ == "__main__":
    main()
