"""Surrogate resynthesis of PHI in BRAT corpora, plus leakage simulation."""

from .analytic import AnalyticQuery, estimate_threshold, expected_real, leak_probability, sweep
from .brat import AnnotationRecord, DocumentBundle, load_bundle, parse_ann, serialize_ann, write_bundle
from .leakage import (
    MIMIC_TARGETS, UAB_DISCHARGE_TARGETS, UAB_TARGETS, LeakageSimulator, LeakSummary,
    PhiDistribution, SimConfig, simulate, simulate_grid, synth_distribution,
)
from .resynth import Resynthesizer
from .rewrite import apply_plan, resolve_overlaps
from .strategy import ReplacementPlan, StrategyConfig, chain_assign, plan_document
from .surrogates import CategoryRegistry, OffsetPolicy, SurrogatePool, build_pool, generate

__all__ = [
    "AnalyticQuery", "MIMIC_TARGETS", "UAB_DISCHARGE_TARGETS", "UAB_TARGETS",
    "AnnotationRecord", "CategoryRegistry", "DocumentBundle", "LeakSummary",
    "LeakageSimulator", "OffsetPolicy", "PhiDistribution", "ReplacementPlan", "Resynthesizer",
    "SimConfig", "StrategyConfig", "SurrogatePool", "apply_plan", "build_pool", "chain_assign",
    "estimate_threshold", "expected_real", "generate", "leak_probability", "load_bundle",
    "parse_ann", "plan_document", "resolve_overlaps", "serialize_ann", "simulate",
    "simulate_grid", "sweep", "synth_distribution", "write_bundle",
]
