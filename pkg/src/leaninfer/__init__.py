"""Political-leaning inference from retweet interaction graphs.

Pipeline: ingest or synthesize a weighted retweet graph, build unsupervised
user representations (force-directed layout, walk-window embeddings, or direct
interaction-pair embeddings), optionally reduce to 2-d, then classify and
evaluate under leave-one-out or k-shot protocols.
"""

__version__ = "0.1.0"

from .embedding import EmbeddingMatrix
from .graph import (
    InteractionGraph,
    LabelSet,
    coarsen_labels,
    ingest_edges,
    ingest_labels,
    read_edge_file,
    read_label_file,
)
from .sgns import SgnsConfig, TrainPairStream, pairs_from_interactions, pairs_from_walks, train
from .walks import WalkConfig, WalkCorpus, biased_walks, uniform_walks

__all__ = [
    "EmbeddingMatrix",
    "InteractionGraph",
    "LabelSet",
    "SgnsConfig",
    "TrainPairStream",
    "WalkConfig",
    "WalkCorpus",
    "biased_walks",
    "coarsen_labels",
    "ingest_edges",
    "ingest_labels",
    "pairs_from_interactions",
    "pairs_from_walks",
    "read_edge_file",
    "read_label_file",
    "train",
    "uniform_walks",
    "__version__",
]
