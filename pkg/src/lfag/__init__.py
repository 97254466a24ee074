"""Toolkit for constructing, cleaning, and evaluating long-form article
generation corpora: wiki mining, citation retrieval, QA annotation,
entity-level hallucination detection, generation baselines, and metrics."""

from .hdacr import HallucinationReport, HdacrConfig, detect
from .providers import ProviderConfig, ProviderSet
from .records import (
    Abstract,
    AbstractSetRecord,
    Citation,
    HeadingNode,
    OutlineRecord,
    QARecord,
    decode_record,
    encode_record,
    validate_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "Abstract",
    "AbstractSetRecord",
    "Citation",
    "HallucinationReport",
    "HdacrConfig",
    "HeadingNode",
    "OutlineRecord",
    "ProviderConfig",
    "ProviderSet",
    "QARecord",
    "decode_record",
    "detect",
    "encode_record",
    "validate_dataset",
    "__version__",
]
