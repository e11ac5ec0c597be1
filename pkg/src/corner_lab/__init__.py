"""Finite-field corner counting laboratory."""

from .cl_counting import count_corners, degree_lowering_trace, validate_inequality_chain
from .cl_kernel import kernel_table
from .cl_ratfun import parse_ratfun, reduce_mod_p, reduce_pair_mod_p
from .cl_varieties import roth_count_charsum, roth_count_structured
