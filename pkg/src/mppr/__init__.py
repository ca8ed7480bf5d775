"""Motif-based personalized PageRank propagation for graph learning."""
from .exceptions import (CapacityError, ConfigError, ConvergenceError, DomainError,
                         GraphFormatError, MpprError, ShapeError, SolverError, SplitError,
                         UndefinedMetricError)
from .graph import (Graph, load_edges, load_graph, normalize_sym, read_edge_list, read_features,
                    read_labels, save_graph, to_adjacency)
from .motifs import (BlendedAdjacency, MotifAdjacency, MotifId, all_motif_adjacencies, blend,
                     motif_adjacency, split_uni_bi)
from .ppr import (PprMatrix, PropagationOperator, apply_beta, mppr_matrix, pagerank,
                  ppr_matrix_direct, ppr_matrix_neumann, propagate)
from .neural import MlpModel, init_mlp, forward, backward, adam_step, AdamState
from .metrics import accuracy, average_precision, roc_auc
from .config import ExperimentConfig, load_config
from .tasks import (EdgeSplit, NodeSplit, RunReport, aggregate, build_operator, run_experiment,
                    sample_negatives, score_edges, split_edges, split_nodes,
                    train_link_prediction, train_node_classification)

__version__ = "0.1.0"
