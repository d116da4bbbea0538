"""Exception taxonomy with stable process exit codes.

The CLI maps each error family to a fixed exit code so that shell pipelines
can branch on the failure kind: 2 I/O, 3 schema, 4 judge, 5 validation.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for every failure this package raises deliberately."""

    exit_code = 1


class InputOutputError(ToolkitError):
    """File or stream failure, wrapping the underlying OSError."""

    exit_code = 2


class SchemaError(ToolkitError):
    """Input data does not match a documented record schema."""

    exit_code = 3


class RecordError(SchemaError):
    """A single JSONL line could not be parsed into a sample record."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class GroupingError(SchemaError):
    """Lines belonging to one instance were not contiguous in the stream."""

    def __init__(self, message: str, instance_id: str):
        super().__init__(message)
        self.instance_id = instance_id


class ScoreJoinError(SchemaError):
    """An offline score file does not cover a sample that needs scores."""

    def __init__(self, message: str, instance_id: str, index: int):
        super().__init__(message)
        self.instance_id = instance_id
        self.index = index


class DuplicateScoreError(SchemaError):
    """An offline score file carries the same (instance_id, index) twice."""

    def __init__(self, message: str, instance_id: str, index: int):
        super().__init__(message)
        self.instance_id = instance_id
        self.index = index


class JudgeError(ToolkitError):
    """A judge service could not produce scores after exhausting retries."""

    exit_code = 4

    def __init__(self, message: str, instance_id: str | None = None, index: int | None = None):
        super().__init__(message)
        self.instance_id = instance_id
        self.index = index


class ValidationError(ToolkitError):
    """A value violates a numeric or structural precondition."""

    exit_code = 5
