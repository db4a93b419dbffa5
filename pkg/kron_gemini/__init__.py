#!/usr/bin/env python3
"""
kron-gemini
Sparse Kronecker covariance estimation: Gemini and noniterative penalized flip-flop
"""

__version__ = "0.1.0"

from .errors import (KronGeminiError, ConfigError, NumericalError, NotPD, NotPSD,
                     NotConverged, SingularInput)
from .matrices import (SymMatrix, DataSet, RngSpec, PrecisionEstimate, sym_sqrt, kronecker,
                       sample_matrix_normal)
from .correlation import CorrelationMatrix, column_correlation, row_correlation, weights
from .glasso import GlassoOptions, glasso
from .clime import ClimeOptions, clime, symmetrize_min, invert_to_correlation
from .gemini import (PenaltyConfig, GeminiFit, gemini_estimate, assemble_kronecker,
                     normalize_star, plugin_constants, theory_penalties)
from .flipflop import NipffResult, nipff, nipff_penalties, tilde_a, tilde_b
from .models import GroundTruth, ar1, star_block, random_concentration
from .evaluation import (confusion, relative_error, diagnostics, roc_sweep, cross_validate,
                         EvalReport)
