"""Knowledge-bridged 3D scene graph prediction on segmented point clouds.

The pipeline: segmented point clouds become a scene-representation graph
(entities plus ordered within-threshold pairs), commonsense knowledge
becomes adjacency matrices over class vocabularies, and a typed
message-passing network with learned bridge edges couples the two streams
to predict object classes and relationship triplets.
"""

from .errors import SgBridgeError
from .evaluation import MetricsReport, TripletPrediction, relative_improvement
from .knowledge import KnowledgeGraph, TypedAdjacency, Vocab, assemble, zero_knowledge
from .scene import (
    SceneSample,
    Segment,
    SrGraph,
    build_sr_graph,
    contextual_vector,
    load_corpus,
    load_scene,
    save_corpus,
    save_scene,
    union_segment,
)
from .synth import SynthSpec, generate_synthetic_corpus
from .training import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "KnowledgeGraph",
    "MetricsReport",
    "SceneSample",
    "Segment",
    "SgBridgeError",
    "SrGraph",
    "SynthSpec",
    "TrainConfig",
    "TripletPrediction",
    "TypedAdjacency",
    "Vocab",
    "assemble",
    "build_sr_graph",
    "contextual_vector",
    "generate_synthetic_corpus",
    "load_checkpoint",
    "load_corpus",
    "load_scene",
    "relative_improvement",
    "save_checkpoint",
    "save_corpus",
    "save_scene",
    "train",
    "union_segment",
    "zero_knowledge",
]
