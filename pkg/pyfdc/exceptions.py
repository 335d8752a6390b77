"""Defines exceptions used in other modules."""

from pathlib import Path
from string import Template
from typing import Union


class ValidationError(Exception):
    """Base class: an input, a configuration or a file failed validation."""

    def __init__(self, msg: str):
        self.msg = msg
        super().__init__(self.msg)


class InvalidConfigError(ValidationError):
    """A configuration value is invalid."""

    def __init__(self, name: str, reason: str):
        self.name = name
        self.reason = reason
        super().__init__(f'Invalid configuration for "{self.name}": {self.reason}')


class GeometryError(ValidationError):
    """A detector geometry violates its invariants."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Invalid detector geometry: {self.reason}")


class ShapeMismatchError(ValidationError):
    """Array shapes do not compose."""

    def __init__(self, op: str, expected: object, given: object):
        self.op = op
        self.expected = expected
        self.given = given
        tml = Template("shape mismatch in '$o'.\nshape: $g\nexpected shape: $e")
        super().__init__(tml.substitute(o=self.op, g=self.given, e=self.expected))


class NonFiniteError(ValidationError):
    """An array holds NaN or infinite entries."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"non-finite values in {self.what}")


class StaleCacheError(ValidationError):
    """A backward pass was given a cache that does not match the network."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"stale or mismatched forward cache: {self.reason}")


class DegenerateFitError(ValidationError):
    """The normal equations of a circle fit are singular."""

    def __init__(self, n_hits: int, rank: int):
        self.n_hits = n_hits
        self.rank = rank
        super().__init__(
            f"degenerate helical fit: {self.n_hits} hits give a rank {self.rank} system"
        )


class GraphEventMismatchError(ValidationError):
    """A graph node refers to a hit that its event does not contain."""

    def __init__(self, event_id: int, hit_id: int):
        self.event_id = event_id
        self.hit_id = hit_id
        super().__init__(
            f"graph node refers to hit {self.hit_id} missing from event {self.event_id}"
        )


class MissingLabelsError(ValidationError):
    """A training graph carries no edge labels."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"graph #{self.index} has no edge labels")


class CheckpointFormatError(ValidationError):
    """A checkpoint file cannot be read."""

    def __init__(self, path: Union[Path, str], reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f'Error while reading checkpoint "{self.path}": {self.reason}')


class PreconditionError(ValidationError):
    """An operation was called outside its domain."""

    def __init__(self, op: str, reason: str):
        self.op = op
        self.reason = reason
        super().__init__(f"{self.op}: {self.reason}")


class ArgTypeError(ValidationError):
    """The argument isn't of the expected type."""

    def __init__(
        self, var_name: str, type_given: type, type_expected: Union[type, str]
    ):
        self.var_name = var_name
        self.type_given = type_given
        self.type_expected = type_expected
        tml = Template("variable '$v' type is not valid.\ntype: $g\nexpected type: $e")
        msg = tml.substitute(v=self.var_name, g=self.type_given, e=self.type_expected)
        super().__init__(msg)
