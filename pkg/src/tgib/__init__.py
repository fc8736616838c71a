"""Self-explaining temporal link prediction with a graph information bottleneck."""

from .bottleneck import ImportanceScores, MaskSample, kl_loss, masked_readout, sample_mask
from .evaluation import (
    ExplanationResult,
    average_precision,
    extract_explanation,
    link_eval,
    sparsity_sweep,
)
from .model import ModelConfig, TGIBModel
from .synth import GroundTruth, PlantedRuleConfig, explanation_recall, generate
from .tempgraph import (
    ComputationGraph,
    Event,
    SplitSpec,
    TemporalGraph,
    chronological_split,
    extract_computation_graph,
    inductive_mask,
    load_jodie_csv,
    make_split,
)
from .trainer import TrainConfig, classification_loss, negative_event, total_loss, train

__version__ = "0.1.0"
