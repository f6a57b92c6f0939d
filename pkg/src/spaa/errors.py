"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Tensor operands have incompatible shapes."""


class MissingTextConditioningError(ValueError):
    """Cross-attention projection requested without a text embedding."""


class AttentionStoreMiss(KeyError):
    """Lookup of a (timestep, layer, head) key that holds no record."""


class AttentionStoreConflict(ValueError):
    """Attempt to insert a second record under an existing key."""


class InvalidRecordError(ValueError):
    """An attention record violates its structural invariants."""


class DescriptorNotFoundError(ValueError):
    """An attribute descriptor does not occur in the prompt."""

    def __init__(self, descriptor: str, prompt: str):
        self.descriptor = descriptor
        self.prompt = prompt
        super().__init__(f"descriptor {descriptor!r} not found in prompt {prompt!r}")


class InjectionMissError(RuntimeError):
    """A gated self-attention layer has no matching source record.

    Raised instead of silently skipping: partial injection corrupts
    structure preservation without any visible symptom.
    """


class BackendError(RuntimeError):
    """A backend step failed; message carries (timestep, layer) context."""


class VocabularyError(ValueError):
    """Unknown color/material name."""


class CategoryError(ValueError):
    """Instruction category incompatible with the given attribute fields."""


class DetectionMissError(RuntimeError):
    """The grounded detector found no box for the subject phrase."""


class DanglingImageRefError(ValueError):
    """A triple references an image file that does not resolve."""


class ScorerUnavailableError(RuntimeError):
    """A model-based scorer adapter is not configured or failed."""


class ConfigValidationError(ValueError):
    """Config failed schema validation; lists every violated key."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"invalid config ({len(self.violations)} problems):\n{lines}")
