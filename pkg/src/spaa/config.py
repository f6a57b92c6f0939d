"""Run configuration: defaults, schema validation, resolved snapshots.

A run's effective parameters are the package defaults deep-merged with
the user file and any CLI overrides; the merged result is written next
to the outputs as an immutable snapshot, so no effective parameter is
hidden and a run can be reproduced from its snapshot alone.  Output
directories are normalized to "." inside snapshots: runs are
relocatable, and re-running a snapshot into a fresh directory yields
content-identical files.  Secrets never appear in config values; remote
adapters name the environment variable holding their credential.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .errors import ConfigValidationError

DEFAULT_CONFIG: dict[str, Any] = {
    "generation": {
        "backend": "toy",
        "arch_seed": 0,
        "steps": 100,
        "resolution_gate": 32,
        "attribute_kind": "color",
        "subjects": ["lamp", "handbag"],
        "descriptors": None,  # null: the full vocabulary for the kind
        "source_descriptor": None,
        "seeds": [0],
        "template_indices": [0],
        "schedules": {
            "color": {"R": 5.0, "delta": 0.1, "floor": 1.0},
            "material": {"R": 10.0, "delta": 0.2, "floor": 1.0},
        },
        "attention_dump": {"enabled": False, "max_resolution": 16},
    },
    "pipeline": {
        "thresholds": {
            "color_sim": 0.98,
            "material_sim": 0.90,
            "leakage_count": 50,
            "pixel_tolerance": 0,
            "leakage_scale_with_area": True,
        },
        "adapters": {
            "judge": {"kind": "stub-yes"},
            "scorer": {"kind": "stub-grayscale-cosine"},
            "detector": {"kind": "stub-centered-box", "fraction": 0.5},
            "segmenter": {"kind": "stub-box-fill"},
        },
        "triples_seed": 0,
    },
    "analysis": {"top_k": 10, "layers": [], "mode": "bilinear", "side": "left"},
    "evaluation": {
        "scorers": {
            "dino_gray": {"kind": "stub-grayscale-cosine"},
            "clip": {"kind": "stub-bow-clip"},
            "lpips": {"kind": "stub-masked-mse"},
        }
    },
    "global": {"output_dir": ".", "worker_count": 1, "log_level": "INFO"},
}

_ADAPTER_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"type": "string"},
        "value": {"type": "number"},
        "fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "url": {"type": "string"},
        "auth_env": {"type": "string"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_SCHEDULE_SCHEMA = {
    "type": "object",
    "properties": {
        "R": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "minimum": 0},
        "floor": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["R", "delta", "floor"],
    "additionalProperties": False,
}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "generation": {
            "type": "object",
            "properties": {
                "backend": {"type": "string"},
                "arch_seed": {"type": "integer"},
                "steps": {"type": "integer", "minimum": 1},
                "resolution_gate": {"type": "integer", "enum": [8, 16, 32, 64]},
                "attribute_kind": {"type": "string", "enum": ["color", "material"]},
                "subjects": {
                    "type": "array",
                    "items": {"type": "string", "minLength": 1},
                    "minItems": 1,
                },
                "descriptors": {
                    "type": ["array", "null"],
                    "items": {"type": "string", "minLength": 1},
                },
                "source_descriptor": {"type": ["string", "null"]},
                "seeds": {
                    "type": "array",
                    "items": {"type": "integer"},
                    "minItems": 1,
                },
                "template_indices": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 0},
                    "minItems": 1,
                },
                "schedules": {
                    "type": "object",
                    "properties": {
                        "color": _SCHEDULE_SCHEMA,
                        "material": _SCHEDULE_SCHEMA,
                    },
                    "additionalProperties": False,
                },
                "attention_dump": {
                    "type": "object",
                    "properties": {
                        "enabled": {"type": "boolean"},
                        "max_resolution": {"type": "integer", "minimum": 1},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "pipeline": {
            "type": "object",
            "properties": {
                "thresholds": {
                    "type": "object",
                    "properties": {
                        "color_sim": {"type": "number", "minimum": -1, "maximum": 1},
                        "material_sim": {"type": "number", "minimum": -1, "maximum": 1},
                        "leakage_count": {"type": "integer", "minimum": 0},
                        "pixel_tolerance": {"type": "integer", "minimum": 0},
                        "leakage_scale_with_area": {"type": "boolean"},
                    },
                    "additionalProperties": False,
                },
                "adapters": {
                    "type": "object",
                    "properties": {
                        "judge": _ADAPTER_SCHEMA,
                        "scorer": _ADAPTER_SCHEMA,
                        "detector": _ADAPTER_SCHEMA,
                        "segmenter": _ADAPTER_SCHEMA,
                    },
                    "additionalProperties": False,
                },
                "triples_seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "analysis": {
            "type": "object",
            "properties": {
                "top_k": {"type": "integer", "minimum": 1},
                "layers": {"type": "array", "items": {"type": "string"}},
                "mode": {"type": "string", "enum": ["bilinear", "nearest"]},
                "side": {"type": "string", "enum": ["left", "right"]},
            },
            "additionalProperties": False,
        },
        "evaluation": {
            "type": "object",
            "properties": {
                "scorers": {
                    "type": "object",
                    "properties": {
                        "dino_gray": _ADAPTER_SCHEMA,
                        "clip": _ADAPTER_SCHEMA,
                        "lpips": _ADAPTER_SCHEMA,
                    },
                    "additionalProperties": False,
                }
            },
            "additionalProperties": False,
        },
        "global": {
            "type": "object",
            "properties": {
                "output_dir": {"type": "string"},
                "worker_count": {"type": "integer", "minimum": 1},
                "log_level": {
                    "type": "string",
                    "enum": ["DEBUG", "INFO", "WARNING", "ERROR"],
                },
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(config: dict) -> None:
    """Schema-check a config, reporting every violated key at once."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    violations = []
    for err in sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path)):
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        violations.append(f"{path}: {err.message}")
    if violations:
        raise ConfigValidationError(violations)


def resolve_config(user_config: Optional[dict] = None) -> dict:
    """Merge user config over the defaults and validate the result."""
    merged = deep_merge(DEFAULT_CONFIG, user_config or {})
    validate_config(merged)
    return merged


def load_config(path: Optional[Path | str]) -> dict:
    if path is None:
        return resolve_config({})
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    # A snapshot file doubles as a config: unwrap its config section.
    if "config" in raw and "command" in raw:
        raw = raw["config"]
    return resolve_config(raw)


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _normalized_for_id(config: dict) -> dict:
    snap = copy.deepcopy(config)
    snap.setdefault("global", {})["output_dir"] = "."
    return snap


def run_id_for(command: str, config: dict, inputs: dict[str, str]) -> str:
    digest = hashlib.sha256(
        canonical_json(
            {"command": command, "config": _normalized_for_id(config), "inputs": inputs}
        ).encode("utf-8")
    ).hexdigest()
    return f"{command}-{digest[:12]}"


def write_snapshot(
    run_dir: Path, command: str, config: dict, inputs: dict[str, str]
) -> Path:
    """Persist the fully resolved parameters beside the run outputs."""
    snapshot = {
        "command": command,
        "config": _normalized_for_id(config),
        "inputs": dict(sorted(inputs.items())),
    }
    path = run_dir / "resolved_config.json"
    path.write_text(
        json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def read_snapshot(path: Path | str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
