"""Process-model play-out, next-activity sequence models and variant-level evaluation."""

from .log import BOS, EOS, PAD, EventLog, PrefixDataset, VariantTable, Vocabulary, read_log, write_log
from .metrics import MetricReport, abs_metrics, evaluate, freq_metrics
from .models import builtin_model, enumerate_variants, playout_log

__version__ = "0.1.0"

__all__ = [
    "BOS", "EOS", "PAD", "EventLog", "PrefixDataset", "VariantTable", "Vocabulary", "read_log", "write_log",
    "MetricReport", "abs_metrics", "evaluate", "freq_metrics", "builtin_model", "enumerate_variants",
    "playout_log",
]
