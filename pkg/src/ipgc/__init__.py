"""Items-proxy critiquing for knowledge-graph recommenders.

Train a compact CF + KG embedding base model, then refine a user's embedding at
inference time from keyphrase critiques: each critiqued keyphrase is represented by
Monte Carlo sampled proxy items from its multi-hop KG neighborhood, and an
importance-weighted prior keeps the update from forgetting the user's trained
preferences.
"""
from .base_model import (EmbeddingStore, TrainConfig, TrainingDiverged, bpr_pair_loss,
                         export_embeddings, import_embeddings, init_store, kg_triple_loss,
                         score, train_base)
from .engine import (ApplyReport, Critique, CritiqueConfig, SessionState, apply_critique,
                     apply_critiques, importance_weights, load_omega, open_session,
                     perturbation_estimate, prior_penalty, rank_items, save_omega)
from .graph import (InteractionSet, KnowledgeGraph, ParseError, ValidationError,
                    load_graph, load_interactions, load_labels)
from .metrics import hr_at_k, ndcg_at_k, recall_at_k
from .sampling import ProxySet, SamplerConfig, multihop_sample, random_sample
from .simulate import (ExperimentConfig, ExperimentResult, RoundReport, evaluate_store,
                       run_experiment, select_critiques, sweep)
from .synthetic import SyntheticConfig, build as build_synthetic, write_dataset

__version__ = "0.1.0"
