from pathlib import Path

from ..test_utils import register_tests
from .templates import t_adam_step, t_bce_loss

register_tests(globals(), [t_bce_loss, t_adam_step], Path(__file__).parent / "test_tinynn.json")
