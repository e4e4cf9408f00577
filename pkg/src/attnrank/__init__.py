"""attnrank: attention-based zero-shot re-ranking engine and layer-probe toolkit.

The engine never talks to a model directly.  Its sole input is the ICRA
binary dump format (per-layer, per-document attention mass), produced by
any adapter.  On top of that it provides calibrated scoring, layer-interval
selection, listwise/setwise ranking frameworks with exact comparison
accounting, TREC-style evaluation, and a synthetic dump simulator.
"""

from attnrank.core import (
    Document,
    LayerInterval,
    Query,
    RankedList,
    RelevanceJudgments,
    stable_rank,
)
from attnrank.dump import AttentionDump, DumpStore, read_dump, validate_pair, write_dump
from attnrank.scoring import CalibratedMatrix, aggregate_layers, calibrate, score_icr

__all__ = [
    "AttentionDump",
    "CalibratedMatrix",
    "Document",
    "DumpStore",
    "LayerInterval",
    "Query",
    "RankedList",
    "RelevanceJudgments",
    "aggregate_layers",
    "calibrate",
    "read_dump",
    "score_icr",
    "stable_rank",
    "validate_pair",
    "write_dump",
]

__version__ = "0.1.0"
