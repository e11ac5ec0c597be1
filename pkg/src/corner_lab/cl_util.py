import logging
from enum import Enum, auto

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

from typing import Optional, TypedDict

from .constants import LOG_LEVEL, log_date_fmt, log_fmt


def make_logger(name: str) -> logging.Logger:
    logger = logging.Logger(name)
    logger.setLevel(LOG_LEVEL)

    stream_handler = logging.StreamHandler()
    stream_handler.setLevel(logging.DEBUG)

    formatter = logging.Formatter(log_fmt, datefmt=log_date_fmt)
    stream_handler.setFormatter(formatter)

    logger.addHandler(stream_handler)
    return logger


_LOGGERS: dict[str, logging.Logger] = {}


def set_log_level(level: int | str) -> None:
    """Applies the level to every corner_lab module logger created so far."""
    for logger in _LOGGERS.values():
        logger.setLevel(level)


def get_logger(name: str) -> logging.Logger:
    if name not in _LOGGERS:
        _LOGGERS[name] = make_logger(name)
    return _LOGGERS[name]


def format_byte_size(n_bytes: float) -> str:
    if n_bytes >= 1024**3:
        return f"{n_bytes / (1024**3):.2f} GByte"
    elif n_bytes >= 1024**2:
        return f"{n_bytes / (1024**2):.2f} MByte"
    elif n_bytes >= 1024:
        return f"{n_bytes / 1024:.2f} KByte"
    else:
        return f"{n_bytes:.0f} Byte"


def format_time(seconds: float) -> str:
    if seconds >= 1.0:
        return f"{seconds:.2f}s"
    elif seconds >= 0.001:
        return f"{seconds * 1000:.0f}ms"
    else:
        return f"{seconds * 1e6:.0f}us"


class CornerLabError(Exception):
    pass


class ExpressionSyntaxError(CornerLabError, ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class ZeroDenominatorError(CornerLabError, ZeroDivisionError):
    pass


class PrimeMismatchError(CornerLabError, ValueError):
    pass


class PrimeTooLargeError(CornerLabError, ValueError):
    pass


class MemoryCapExceededError(CornerLabError, MemoryError):
    pass


class GridFormatError(CornerLabError, ValueError):
    pass


class InvariantViolationError(CornerLabError, RuntimeError):
    pass


class NumericalHealthError(CornerLabError, RuntimeError):
    pass


class ResampleBudgetError(CornerLabError, RuntimeError):
    pass


class CL_BAD_PRIME_REASON(StrEnum):
    DENOMINATOR_VANISHES = "denominator_vanishes"
    BECOMES_CONSTANT = "becomes_constant"
    LOSES_INDEPENDENCE = "loses_independence"


class CL_POLE(Enum):
    MARKER = auto()

    def __repr__(self) -> str:
        return "POLE"


POLE = CL_POLE.MARKER


class CL_COORDINATE(StrEnum):
    FIRST = "first"
    SECOND = "second"


class CL_SUBGROUP(StrEnum):
    VERTICAL = "0xFp"  # {0} x F_p, moves x2
    HORIZONTAL = "Fpx0"  # F_p x {0}, moves x1
    FULL = "Fp2"


class CL_NORM(StrEnum):
    MEAN = "L"
    SUM = "l"


class CL_DOMAIN(StrEnum):
    SPACE = "space"
    FREQUENCY = "frequency"


class CL_AGGREGATE(StrEnum):
    F1 = "F1"
    F2 = "F2"


class CL_COUNT_METHOD(StrEnum):
    BRUTE = "brute"
    STRUCTURED = "structured"
    CHARSUM = "charsum"
    HISTOGRAM = "histogram"
    JOIN = "join"


class CL_STEP_MODE(StrEnum):
    STRICT = "strict"
    RATIO_ONLY = "ratio-only"


class CL_TRACE_BRANCH(StrEnum):
    BOTH_EIGEN = "1"
    SECOND_EIGEN = "2"
    GENERAL = "3"


class CL_IDENTITY(StrEnum):
    PROP_JAC = "prop_jac"
    JZPRIME_FACTORIZATION = "jzprime_factorization"
    S_LOG_DERIVATIVE = "s_log_derivative"


class CL_NONVANISHING(StrEnum):
    D = "D"
    J_X = "J_X"
    J_W = "J_W"
    PAIR_WRONSKIAN = "pair_wronskian"


class CL_SCAN_ROW(TypedDict, total=False):
    p: int
    variety: str
    count: Optional[int]
    exponent: int
    ratio: float
    method: str
    residual: Optional[float]
    seconds: float


class CL_ERROR_ROW(TypedDict):
    p: int
    seed: int
    abs_lambda: float
    abs_main: float
    error: float
    error_sqrt_p: float


class CL_BOMBIERI_ROW(TypedDict):
    p: int
    sup: float
    normalized: float
    pole_count: int
