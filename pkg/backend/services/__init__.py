"""
Services package for hemgen.

This package contains the service modules for SMILES handling, embedding
construction, sequence generation, library metrics, property prediction,
theory checks and pipeline orchestration.

Architecture:
- smiles_core: tokenizer, parser, valence checks, canonical/random writer, fingerprints, descriptors
- embeddings: vocabulary and hybrid trainable/fixed (SHA-256 or random) token embeddings
- optim: Adam with decoupled weight decay and global-norm clipping
- seqmodel: character-level LSTM generator (exact BPTT, checkpoints, sampling)
- genmetrics: validity, novelty, uniqueness, Tanimoto similarity, structural profile, filtering
- graph_ops: numpy attention/GRU blocks with exact backward passes
- gnn_predictor: attentive message-passing regressor for the nine dataset targets
- theory_verifier: coherence, Gershgorin conditioning, generalization bounds, residuals
- dataset_service: dataset CSV ingestion and tabular artifact writers
- pipeline_orchestrator: end-to-end run coordinator and the embedding sweep
"""

from . import embeddings, genmetrics, gnn_predictor, seqmodel, smiles_core, theory_verifier
from .dataset_service import dataset_service
from .pipeline_orchestrator import PipelineOrchestrator, run_pipeline, run_sweep

__all__ = [
    "smiles_core",
    "embeddings",
    "seqmodel",
    "genmetrics",
    "gnn_predictor",
    "theory_verifier",
    "dataset_service",
    "PipelineOrchestrator",
    "run_pipeline",
    "run_sweep",
]
