"""Model runtime: attention capture, early exit, and latency measurement.

Attention is taken post-softmax (the standard attention-probability
tensor), before value mixing; the choice is recorded in the dump's model
metadata string.  Early exit truncates the block list in place for the
duration of one forward pass, so skipped layers genuinely cost nothing.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import torch

from attnrank.core import Document, Query
from attnrank.dump import AttentionDump
from attnrank.evaluation import LatencySample

from icr_adapter.prompts import (
    DEFAULT_ICR_MAX_WORDS,
    PromptPlan,
    Tokenizer,
    build_icr_prompt,
)

_BLOCK_ATTRS = (
    ("transformer", "h"),  # gpt2 family
    ("model", "layers"),  # llama / mistral / qwen family
)


def _find_blocks(model) -> tuple[object, str, torch.nn.ModuleList]:
    for owner_name, attr in _BLOCK_ATTRS:
        owner = getattr(model, owner_name, None)
        if owner is not None and hasattr(owner, attr):
            return owner, attr, getattr(owner, attr)
    raise ValueError(
        f"cannot locate decoder block list on {type(model).__name__}; "
        f"expected one of {_BLOCK_ATTRS}"
    )


@contextmanager
def early_exit_blocks(model, keep_layers: int | None):
    """Temporarily truncate the decoder to its first ``keep_layers`` blocks."""
    if keep_layers is None:
        yield
        return
    owner, attr, blocks = _find_blocks(model)
    if not 1 <= keep_layers <= len(blocks):
        raise ValueError(f"early exit wants {keep_layers} layers, model has {len(blocks)}")
    setattr(owner, attr, blocks[:keep_layers])
    try:
        yield
    finally:
        setattr(owner, attr, blocks)


@dataclass
class ModelRuntime:
    """One loaded decoder-only model plus its tokenizer."""

    model: torch.nn.Module
    tokenizer: Tokenizer
    model_name: str
    max_tokens: int | None = None
    _num_heads: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        self.model.eval()
        config = self.model.config
        self._num_heads = int(
            getattr(config, "num_attention_heads", 0) or getattr(config, "n_head")
        )
        if self.max_tokens is None:
            self.max_tokens = int(
                getattr(config, "max_position_embeddings", 0) or getattr(config, "n_positions")
            )

    @property
    def num_layers(self) -> int:
        _, _, blocks = _find_blocks(self.model)
        return len(blocks)

    def plan(self, query: Query, pool: list[Document], null: bool,
             max_words: int = DEFAULT_ICR_MAX_WORDS) -> PromptPlan:
        return build_icr_prompt(
            query, pool, null=null, max_words=max_words,
            tokenizer=self.tokenizer, max_tokens=self.max_tokens,
        )

    def extract_attention(
        self,
        plan: PromptPlan,
        early_exit_layer: int | None = None,
        config_tag: str = "",
    ) -> tuple[AttentionDump, LatencySample]:
        """One forward pass reduced to per-(layer, document) attention mass.

        With ``early_exit_layer`` set, only layers 0..early_exit_layer run
        and the dump covers exactly those layers.
        """
        total = self.num_layers
        if early_exit_layer is not None and early_exit_layer >= total:
            raise ValueError(
                f"early_exit_layer {early_exit_layer} out of range for {total} layers"
            )
        keep = None if early_exit_layer is None else early_exit_layer + 1
        ids = torch.tensor([plan.token_ids], dtype=torch.long)

        t0 = time.perf_counter()
        with torch.no_grad(), early_exit_blocks(self.model, keep):
            out = self.model(ids, output_attentions=True, use_cache=False)
        seconds = time.perf_counter() - t0

        if not getattr(out, "attentions", None):
            raise ValueError(f"model {self.model_name!r} did not return attention tensors")
        qs, qe = plan.query_span
        spans = plan.doc_spans
        doc_ids = plan.doc_ids
        matrix = np.zeros((len(out.attentions), len(doc_ids)), dtype=np.float64)
        for layer, attn in enumerate(out.attentions):
            rows = attn[0, :, qs:qe, :]  # heads x query tokens x prompt tokens
            for col, doc_id in enumerate(doc_ids):
                ds, de = spans[doc_id]
                if de > ds:
                    matrix[layer, col] = float(rows[:, :, ds:de].sum())

        dump = AttentionDump(
            query_id=plan.query_id,
            doc_ids=doc_ids,
            model_name=f"{self.model_name}[attn=post-softmax]",
            num_layers=matrix.shape[0],
            num_heads=self._num_heads,
            query_token_count=qe - qs,
            doc_token_counts=tuple(spans[d][1] - spans[d][0] for d in doc_ids),
            calibration=plan.null,
            matrix=matrix,
        )
        sample = LatencySample(
            query_id=plan.query_id,
            stage="forward_pass",
            seconds=max(seconds, 1e-9),
            config_tag=config_tag or (f"early-exit:{early_exit_layer}"
                                      if early_exit_layer is not None else "full-depth"),
        )
        return dump, sample

    def dump_pair(
        self,
        query: Query,
        pool: list[Document],
        max_words: int = DEFAULT_ICR_MAX_WORDS,
        early_exit_layer: int | None = None,
    ) -> tuple[AttentionDump, AttentionDump, list[LatencySample]]:
        """Real + content-free dumps for one query, ready for calibration."""
        real_plan = self.plan(query, pool, null=False, max_words=max_words)
        null_plan = self.plan(query, pool, null=True, max_words=max_words)
        real, s1 = self.extract_attention(real_plan, early_exit_layer)
        null, s2 = self.extract_attention(null_plan, early_exit_layer)
        return real, null, [s1, s2]
