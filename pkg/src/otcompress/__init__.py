"""Graph compression by support-constrained optimal transport."""

from .compressor import (
    CompressionReport,
    certify,
    compress,
    compress_bruteforce,
    maximize_potentials,
    mirror_prox,
    psi_gradients,
    psi_value,
    recover_rho1,
    round_topk,
)
from .graph import AS_WRITTEN, ORIENTED, Edge, Graph, GraphError, label_costs, stationary_prior
from .projections import project_capped_box, project_diag_simplex, project_slabs
from .transport import ot_distance, w1_oracle

__version__ = "0.1.0"
