"""Taxonomy-sensitive QA: dataset synthesis, constrained Yes/No evaluation,
and representation analysis over model dumps."""

from .taxonomy import Taxonomy, load_taxonomy, parse_taxonomy
from .scene import SceneGraph, SceneObject, filter_scene, filter_question, load_scene_graphs, render_description
from .questgen import (
    QAInstance,
    Question,
    QTYPES,
    balance_sample,
    build_dataset,
    generate_taxomps,
    instantiate_question,
    read_dataset,
    sample_negatives,
    substitute_hypernyms,
    write_dataset,
)
from .metrics import (
    InstanceResult,
    InstanceSet,
    conditional_accuracy,
    hierarchical_consistency,
    instance_set_from_results,
    judge_instance,
    metrics_report,
    overall_accuracy,
)
from .evalclient import EndpointConfig, EvalRun, aggregate_yes_no, build_prompt, run_eval
from .dumps import EmbeddingDump, DumpManifest, load_dump, save_dump, validate_dump
from .repranalysis import (
    hierarchy_rsa_report,
    layerwise_odds_report,
    separability_report,
    static_delta_report,
    visual_similarity_report,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
