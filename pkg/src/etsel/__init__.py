"""Budget-constrained video-token selection.

Given an encoded video embedding grid and a token budget, the engine
explores candidate token subsequences that trade full key frames against
high-change delta-frame tokens, then scores every candidate against the
textual query with a shallow attention metric and keeps the best one.
"""

__version__ = "0.1.0"

from .baselines import original_uniform, retrieval_prune, similarity_prune
from .errors import (
    CorruptionError,
    DomainError,
    EtselError,
    FormatError,
    InfeasibleError,
    IOFailure,
    SchemaError,
    ValidationError,
)
from .explorer import (
    CandidateSubsequence,
    IntervalSpec,
    SearchSpace,
    allocate_quotas,
    build_candidate,
    delta_scores,
    extract_key_tokens,
    generate_search_space,
    key_frame_indices,
    partition_intervals,
    select_delta_tokens,
    token_distance,
)
from .harness import bench_timing, run_batch, run_instance, run_sweep
from .selector import (
    CandidateHidden,
    ScoreReport,
    attention_scores,
    candidate_score,
    project_qk,
    proxy_hidden,
    run_selection,
    select_best,
    visual_token_scores,
)
from .tensor_store import (
    AttentionContext,
    Budget,
    FrameTokenGrid,
    Instance,
    InstanceManifest,
    TokenRef,
    load_instance,
    load_manifest,
    load_tensor,
    parse_manifest,
    save_tensor,
)

__all__ = [
    "__version__",
    "AttentionContext",
    "Budget",
    "CandidateHidden",
    "CandidateSubsequence",
    "CorruptionError",
    "DomainError",
    "EtselError",
    "FormatError",
    "FrameTokenGrid",
    "InfeasibleError",
    "Instance",
    "InstanceManifest",
    "IntervalSpec",
    "IOFailure",
    "SchemaError",
    "ScoreReport",
    "SearchSpace",
    "TokenRef",
    "ValidationError",
    "allocate_quotas",
    "attention_scores",
    "bench_timing",
    "build_candidate",
    "candidate_score",
    "delta_scores",
    "extract_key_tokens",
    "generate_search_space",
    "key_frame_indices",
    "load_instance",
    "load_manifest",
    "load_tensor",
    "original_uniform",
    "parse_manifest",
    "partition_intervals",
    "project_qk",
    "proxy_hidden",
    "retrieval_prune",
    "run_batch",
    "run_instance",
    "run_selection",
    "run_sweep",
    "save_tensor",
    "select_best",
    "select_delta_tokens",
    "similarity_prune",
    "token_distance",
    "visual_token_scores",
]
