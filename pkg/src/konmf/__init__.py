"""Kernel-based orthogonal NMF for subspace clustering (KNSC-Ncut, KNSC-Rcut, KOGNMF)."""

from .cluster import (AccuracyReport, Labeling, accuracy, assign, hungarian, orthogonality_ratio,
                      orthogonality_score)
from .data import (DataMatrix, Dataset, load_csv, shift_nonneg, stratified_holdout, two_rings,
                   write_csv)
from .errors import ConvergenceError, DataFormatError, KonmfError, ShapeError, ValidationError
from .factorize import (FactorState, HyperParams, Variant, factorize, init_factors,
                        lagrangian_gradients, objective, run, update_f, update_h_kognmf,
                        update_h_rcut, update_z_ncut)
from .graph import (GraphSet, KernelSpec, build_graph_set, build_kernel, scaled_kernel_ncut,
                    unit_degree_graph)
from .harness import (ExperimentConfig, GridResult, HoldoutReport, RunResult, RunSummary, SigmaGrid,
                      emit_results, grid_search, holdout_protocol, multi_run, run_experiment)

__version__ = "0.1.0"
