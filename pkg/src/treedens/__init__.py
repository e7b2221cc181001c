"""Tree-structured density estimation from histogram mutual information.

Pipeline: bin coordinate pairs, estimate pairwise MI by the plug-in
histogram rule, pick the maximum-weight spanning tree, and fit the product
of ratio-of-histograms conditionals along that tree.
"""

from .density import (
    RootedOrder,
    TreeDensityModel,
    eval_density,
    eval_log_density,
    fit_tree_density,
    load_model,
    root_and_order,
    sample,
    save_model,
    verify_normalization,
)
from .evaluation import (
    ModelTruth,
    identification_experiment,
    l1_distance_grid,
    l1_distance_mc,
    rate_experiment,
)
from .histograms import (
    Dataset,
    MarginalHistogram,
    PairHistogram,
    Partition1D,
    build_marginal_histogram,
    build_pair_histogram,
    cell_index,
    read_csv,
)
from .mi import MIMatrix, default_bin_widths, mi_matrix, plugin_mi
from .trees import (
    MIGapReport,
    SpanningTree,
    enumerate_spanning_trees,
    max_spanning_tree,
    mi_gap,
    optimal_tree_set,
)
from .truth import FGMTreeTruth, fgm_tree_truth, independence_truth, true_mi_matrix, true_optimal_trees

__version__ = "0.1.0"
