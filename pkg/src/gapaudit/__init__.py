"""gapaudit: demographic gap auditing for biometric verification scores.

Operates on precomputed embeddings, hair masks, and vendor attribute scores:
fuses attribute labels, computes cohort score distributions and d-prime
gaps, builds hairstyle-balanced test subsets by mask IoU, and runs bootstrap
confidence analysis.
"""

__version__ = "0.1.0"

from . import errors
from .attributes import (
    AttributeLabels,
    FusionThresholds,
    Provenance,
    Tail,
    census,
    classify_bald,
    classify_facial_hair,
    compute_labels,
    confusion_report,
    hair_ratio,
    tail_partition,
)
from .balancer import BalancedSubset, ExclusionReason, balance, emit_subset, load_subset, mask_iou
from .bootstrap import BootstrapReport, bootstrap_gap
from .corpus import (
    AttributeScores,
    Corpus,
    EmbeddingMatrix,
    HairMask,
    ImageRecord,
    load_corpus,
    parse_vendor_payload,
    save_corpus,
)
from .gapstats import GapReport, dprime, gap_report
from .scoring import (
    CohortView,
    PairKind,
    PairSpec,
    ScoreDistribution,
    cosine,
    enumerate_pairs,
    score_distribution,
)
from .synthgen import GeneratorConfig, default_paper_config, generate

__all__ = [
    "__version__",
    "errors",
    "AttributeLabels", "FusionThresholds", "Provenance", "Tail",
    "census", "classify_bald", "classify_facial_hair", "compute_labels",
    "confusion_report", "hair_ratio", "tail_partition",
    "BalancedSubset", "ExclusionReason", "balance", "emit_subset",
    "load_subset", "mask_iou",
    "BootstrapReport", "bootstrap_gap",
    "AttributeScores", "Corpus", "EmbeddingMatrix", "HairMask", "ImageRecord",
    "load_corpus", "parse_vendor_payload", "save_corpus",
    "GapReport", "dprime", "gap_report",
    "CohortView", "PairKind", "PairSpec", "ScoreDistribution", "cosine",
    "enumerate_pairs", "score_distribution",
    "GeneratorConfig", "default_paper_config", "generate",
]
