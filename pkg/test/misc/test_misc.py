import pytest

from pyfdc.exceptions import ArgTypeError
from pyfdc.misc import Activation, Mode


@pytest.mark.parametrize("enum, value", [(Mode, "train"), (Mode, "infer"), (Activation, "relu")])
def test_get_from_str(enum, value):
    member = enum.get_from_str(value)
    assert member.value == value
    assert enum.get_from_str(member) is member


@pytest.mark.parametrize("enum", [Mode, Activation])
def test_get_from_str_rejects_non_strings(enum):
    with pytest.raises(ArgTypeError):
        enum.get_from_str(1)
    with pytest.raises(ArgTypeError):
        enum.get_from_str(None)


@pytest.mark.parametrize("enum", [Mode, Activation])
def test_get_from_str_unknown_value(enum):
    with pytest.raises(ValueError):
        enum.get_from_str("eval")
