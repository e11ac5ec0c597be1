import os
from dataclasses import dataclass

from dotenv import load_dotenv

log_fmt = "[%(asctime)s] [%(levelname)-7s] [%(name)-11s] --- %(message)s (%(filename)s:%(lineno)s)"
log_date_fmt = "%Y-%m-%d %H:%M:%S"

load_dotenv()

LOG_LEVEL = os.getenv("CORNER_LAB_LOG_LEVEL", "WARNING").upper()

# 2^61 - 1, the default field for randomized identity testing.
TESTING_PRIME = int(os.getenv("CORNER_LAB_TESTING_PRIME", str(2**61 - 1)))

# Cap on distinct offset buckets held by the structured Roth counter.
BUCKET_CAP = int(os.getenv("CORNER_LAB_BUCKET_CAP", "4000000"))

ZPRIME_MAX_P = int(os.getenv("CORNER_LAB_ZPRIME_MAX_P", "31"))
BRUTE_MAX_P = 3
STRUCTURED_MAX_P = 11
BOX_NORM_MAX_DEGREE = 3

CSV_SCHEMA_HEADER = "# corner-lab csv schema v1"


@dataclass(frozen=True)
class Tolerances:
    identity: float = 1e-10
    slack: float = 1e-9
    bounded: float = 1e-12
    clamp: float = 1e-12
    charsum_residual: float = 1e-3
    charsum_imag: float = 1e-8
    kernel_symmetry: float = 1e-12
    argmax_tie: float = 1e-12


TOLERANCES = Tolerances()
