"""Byzantine-robust decentralized learning with secret-shared aggregation."""
from .errors import ConfigError, PreprocessingExhausted, ProtocolError, SecureDLError
from .ring import FixedPointCodec, decode_fixed, encode_fixed
from .simulator import RunResult, SimConfig, run

__all__ = [
    "ConfigError", "FixedPointCodec", "PreprocessingExhausted", "ProtocolError", "RunResult",
    "SecureDLError", "SimConfig", "decode_fixed", "encode_fixed", "run",
]
__version__ = "0.1.0"
