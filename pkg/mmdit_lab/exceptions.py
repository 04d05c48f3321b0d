from __future__ import annotations


class LabError(Exception):
    """Base class for every error raised by mmdit_lab."""


# ----------------------------
# Configuration
# ----------------------------

class ConfigError(LabError):
    pass


class ConfigMismatch(ConfigError):
    pass


class FingerprintMismatch(ConfigError):
    pass


# ----------------------------
# Shapes / tokens
# ----------------------------

class ShapeError(LabError):
    pass


class ShapeMismatch(ShapeError):
    pass


class PromptTooLong(ShapeError):
    pass


# ----------------------------
# Attention
# ----------------------------

class AttentionError(LabError):
    pass


class FullyMaskedRow(AttentionError):
    def __init__(self, rows):
        self.rows = list(rows)
        super().__init__(f"query rows with no allowed key: {self.rows[:8]}")


# ----------------------------
# Interventions
# ----------------------------

class InterventionError(LabError):
    pass


class UnknownLayer(InterventionError):
    pass


class MissingTraceEntry(InterventionError):
    pass


class SegmentAbsent(InterventionError):
    pass


class InvalidRunSpec(InterventionError):
    pass


class SerializationError(LabError):
    pass


# ----------------------------
# Task generation
# ----------------------------

class TaskGenError(LabError):
    pass


class EmptyParameterList(TaskGenError):
    pass


class InsufficientVariety(TaskGenError):
    pass


class DenylistViolation(TaskGenError):
    def __init__(self, text: str, term: str):
        self.text = text
        self.term = term
        super().__init__(f"{text!r} names denied term {term!r}")


class MalformedInstructionJson(TaskGenError):
    pass


class ProtocolViolation(TaskGenError):
    pass


# ----------------------------
# Judging / statistics
# ----------------------------

class JudgeError(LabError):
    pass


class TransportError(JudgeError):
    pass


# instruction generation reuses the judge transport
EndpointError = TransportError


class UnknownExperimentFamilyCombo(JudgeError):
    pass


class EmptyPool(JudgeError):
    pass


class ProtocolWarning(UserWarning):
    """Raised through warnings.warn when a run departs from the experimental protocol."""
