import copy  # pylint: disable=C0114,missing-module-docstring
import os
import shutil
from pathlib import Path
from typing import Any, Union

import yaml

from pyfdc.exceptions import InvalidConfigError

PATH_CONFIG_DEFAULT = Path(__file__).parent / "default.yaml"
NAME_CONFIG_USER = "pyfdc-config.yaml"


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        name = f"{prefix}{k}"
        if k not in base:
            raise InvalidConfigError(name=name, reason="unknown key")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise InvalidConfigError(name=name, reason="expected a section")
            out[k] = _merge(base[k], v, prefix=f"{name}.")
        else:
            out[k] = v
    return out


class Config:
    def __init__(self, path_cfg: Union[Path, None] = None):
        self.path_cfg = path_cfg
        self.load_config(path_cfg)

    def load_config(self, path_cfg: Union[Path, None] = None):
        with open(PATH_CONFIG_DEFAULT, "r") as f:
            d_cfg = yaml.safe_load(f)
        if path_cfg is None:
            path_cwd = Path(os.getcwd())
            path_cfg = path_cwd / NAME_CONFIG_USER
        path_cfg = Path(path_cfg)
        if path_cfg.exists():
            with open(path_cfg, "r") as f:
                u_cfg = yaml.safe_load(f) or {}
            if not isinstance(u_cfg, dict):
                raise InvalidConfigError(name=str(path_cfg), reason="not a mapping")
            cfg = _merge(d_cfg, u_cfg)
        else:
            cfg = d_cfg
        self.cfg: dict[str, Any] = cfg

    def section(self, name: str) -> dict:
        """Returns a copy of one configuration section."""
        if name not in self.cfg:
            raise InvalidConfigError(name=name, reason="unknown section")
        return copy.deepcopy(self.cfg[name])

    @classmethod
    def create_config_file(cls, path_cfg: Union[Path, None] = None):
        if path_cfg is None:
            path_cwd = Path(os.getcwd())
            path_cfg = path_cwd / NAME_CONFIG_USER
        shutil.copy(PATH_CONFIG_DEFAULT, path_cfg)


def read_key_values(path: Union[Path, str]) -> dict:
    """Reads a file of `key = value` lines into a typed dictionary."""
    lines = []
    with open(path, "r") as f:
        for line in f:
            line = line.split("#", maxsplit=1)[0].rstrip()
            if line.strip() == "":
                continue
            if "=" not in line:
                raise InvalidConfigError(name=str(path), reason=f'bad line "{line}"')
            k, v = line.split("=", maxsplit=1)
            lines.append(f"{k.strip()}: {v.strip()}")
    try:
        out = yaml.safe_load("\n".join(lines)) or {}
    except yaml.YAMLError as e:
        raise InvalidConfigError(name=str(path), reason=str(e)) from e
    return out


def write_key_values(path: Union[Path, str], values: dict) -> None:
    """Writes a flat dictionary as `key = value` lines."""
    def _py(x):
        # numpy scalars print as np.float64(...) under numpy 2
        return x.item() if hasattr(x, "item") else x

    with open(path, "w") as f:
        for k, v in values.items():
            if isinstance(v, (list, tuple)):
                v = "[" + ", ".join(repr(_py(x)) for x in v) + "]"
            else:
                v = _py(v)
            f.write(f"{k} = {v}\n")
