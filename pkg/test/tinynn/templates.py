import inspect

import numpy as np
import pytest

from pyfdc.misc import Activation
from pyfdc.tinynn import AdamState, MlpParams, adam_step, bce_loss

from ..test_utils import (
    assert_close,
    build_error_msg,
    parse_name_function_tested,
    parse_test_arg_exception,
    prep_test_data,
)


def t_bce_loss(test_id: str, data: dict, debug: bool = False):

    name_f = parse_name_function_tested(inspect.currentframe().f_code.co_name)
    inputs, expected_output, d_t = prep_test_data(test_id, data, name_f)

    pred = np.asarray(inputs["pred"], dtype=np.float64)
    target = np.asarray(inputs["target"], dtype=np.float64)
    exception = parse_test_arg_exception(expected_output.get("exception"))
    if exception is not None:
        with pytest.raises(exception):
            bce_loss(pred, target)
        return

    loss, grad = bce_loss(pred, target)
    err_msg = build_error_msg(test_id, d_t)
    assert_close(loss, expected_output["loss"], msg=err_msg, rtol=expected_output.get("rtol", 1e-9))
    assert grad.shape == pred.shape, err_msg


def t_adam_step(test_id: str, data: dict, debug: bool = False):

    name_f = parse_name_function_tested(inspect.currentframe().f_code.co_name)
    inputs, expected_output, d_t = prep_test_data(test_id, data, name_f)

    p = MlpParams([np.array([[inputs["w0"]]])], [np.zeros(1)], (Activation.IDENTITY,))
    g = MlpParams([np.array([[float(inputs["grad"])]])], [np.zeros(1)], (Activation.IDENTITY,))
    s = AdamState.for_params([p])
    exception = parse_test_arg_exception(expected_output.get("exception"))
    if exception is not None:
        with pytest.raises(exception):
            adam_step(s, [p], [g], inputs["lr"])
        assert p.weights[0][0, 0] == inputs["w0"]
        assert s.t == 0
        return

    adam_step(s, [p], [g], inputs["lr"])
    err_msg = build_error_msg(test_id, d_t)
    assert_close(
        p.weights[0][0, 0], expected_output["w1"], msg=err_msg,
        rtol=expected_output.get("rtol", 1e-9),
    )
    assert p.version == 1, err_msg
