"""Chebyshev collocation on overlapping mapped subdomains."""

from .chebcore import Grid, Mapping, Subdomain, cheb_grid, make_subdomain, map_forward
from .overlap import (
    GlobalOperator,
    OverlapSpec,
    assemble_multi_interval,
    assemble_one_point,
    assemble_pseudo_multipoint,
    assemble_taylor_multipoint,
    assemble_two_point,
    derivative_of_order,
    sparsity_pattern,
)

__version__ = "0.1.0"
