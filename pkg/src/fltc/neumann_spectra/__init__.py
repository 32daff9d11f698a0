"""Neumann-Laplacian spectra on model domains and the experiments built on them."""

from .contours import write_contours
from .domains import DomainSpec
from .eigenpairs import (EigenPair, eigenpairs, eigenpairs_below, eval_gradient, eval_matrix,
                         eval_pair, multiplicity_classes)
from .expansion import EigenPolynomial, SmoothBump, gradient_expansion_check
from .kernels import KernelSeries, heat_kernel, kernel_q, kernel_series, positivity_scan
from .maximizers import common_maximizer_check, locate_maximizers

__all__ = ["DomainSpec", "EigenPair", "eigenpairs", "eigenpairs_below", "eval_pair",
           "eval_gradient", "eval_matrix", "multiplicity_classes", "heat_kernel", "kernel_q",
           "kernel_series", "KernelSeries", "positivity_scan", "locate_maximizers",
           "common_maximizer_check", "gradient_expansion_check", "EigenPolynomial", "SmoothBump",
           "write_contours"]
