from .config import Config, read_key_values, write_key_values

_ = Config
_ = read_key_values
_ = write_key_values
