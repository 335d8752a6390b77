from __future__ import annotations

from enum import Enum
from typing import Union

from .exceptions import ArgTypeError


class Mode(Enum):
    """How a network is evaluated.

    Possible values:
        TRAIN: dropout active, caches kept for backpropagation
        INFER: deterministic and dropout-free
    """

    TRAIN = "train"
    INFER = "infer"

    @staticmethod
    def get_from_str(s: Union[str, Mode]) -> Mode:
        """Returns Enum value from string."""
        if isinstance(s, Mode):
            return s
        if not isinstance(s, str):
            raise ArgTypeError(var_name="s", type_given=type(s), type_expected=str)
        for k in Mode:
            if s == k.value:
                return k
        raise ValueError(f'Mode not defined: "{s}"')


class Activation(Enum):
    """Activation applied after a dense layer."""

    RELU = "relu"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"

    @staticmethod
    def get_from_str(s: Union[str, Activation]) -> Activation:
        """Returns Enum value from string."""
        if isinstance(s, Activation):
            return s
        if not isinstance(s, str):
            raise ArgTypeError(var_name="s", type_given=type(s), type_expected=str)
        for k in Activation:
            if s == k.value:
                return k
        raise ValueError(f'Activation not defined: "{s}"')
