"""Deterministic tiny decoder-only model for offline tests and demos.

This environment cannot reach a model hub, so the test model is a real
GPT-2 graph (standard transformers implementation, eager attention) whose
weights are set by hand instead of downloaded:

* token embeddings are seeded Gaussian vectors, so distinct words are
  near-orthogonal;
* every block's Q and K projections are scaled identities, which turns the
  pre-softmax logits into token-identity matches: a query token attends to
  copies of itself inside documents;
* V and the output projection are small identities and the MLP output is
  zeroed, so the residual stream stays close to the embeddings and every
  layer carries the same match signal.

The result behaves like a (very small) pretrained retriever as far as the
adapter contract is concerned: softmax rows are genuine attention
distributions, attention mass tracks lexical overlap with the query, and
forward cost scales with executed layers.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import torch
from transformers import GPT2Config, GPT2LMHeadModel

VOCAB_SIZE = 4096
N_EMBD = 64
N_LAYER = 6
N_HEAD = 4
N_POSITIONS = 1024


class WordTokenizer:
    """Whitespace word tokenizer with stable hash buckets.

    Ids 0/1 are reserved; every lowercased word maps deterministically into
    [2, vocab) via sha1, so runs agree across processes and machines.
    """

    def __init__(self, vocab_size: int = VOCAB_SIZE):
        self.vocab_size = vocab_size
        self._words: dict[int, str] = {}

    def _bucket(self, word: str) -> int:
        digest = hashlib.sha1(word.encode("utf-8")).digest()
        return 2 + int.from_bytes(digest[:4], "big") % (self.vocab_size - 2)

    def encode(self, text: str) -> list[int]:
        ids = []
        for word in text.lower().split():
            wid = self._bucket(word)
            self._words[wid] = word
            ids.append(wid)
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        # no digits in the placeholder: decoded artifacts must never be
        # mistaken for passage labels by the generation-mode parser
        return " ".join(self._words.get(i, "<unk>") for i in ids)


def build_tiny_model(seed: int = 0) -> GPT2LMHeadModel:
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=VOCAB_SIZE,
        n_positions=N_POSITIONS,
        n_embd=N_EMBD,
        n_layer=N_LAYER,
        n_head=N_HEAD,
        attn_pdrop=0.0,
        embd_pdrop=0.0,
        resid_pdrop=0.0,
        bos_token_id=0,
        eos_token_id=0,
    )
    config._attn_implementation = "eager"
    model = GPT2LMHeadModel(config)
    eye = torch.eye(N_EMBD)
    with torch.no_grad():
        model.transformer.wte.weight.normal_(0.0, 1.0)
        model.transformer.wpe.weight.normal_(0.0, 0.02)
        for block in model.transformer.h:
            qkv = torch.zeros(N_EMBD, 3 * N_EMBD)
            qkv[:, :N_EMBD] = 2.0 * eye  # Q
            qkv[:, N_EMBD : 2 * N_EMBD] = eye  # K
            qkv[:, 2 * N_EMBD :] = 0.05 * eye  # V
            block.attn.c_attn.weight.copy_(qkv)
            block.attn.c_attn.bias.zero_()
            block.attn.c_proj.weight.copy_(0.1 * eye)
            block.attn.c_proj.bias.zero_()
            block.mlp.c_proj.weight.zero_()
            block.mlp.c_proj.bias.zero_()
    model.eval()
    return model


def tiny_runtime(seed: int = 0):
    # local import: runtime imports this module for the "tiny" model spec
    from icr_adapter.runtime import ModelRuntime

    return ModelRuntime(
        model=build_tiny_model(seed),
        tokenizer=WordTokenizer(),
        model_name=f"tiny-match-gpt2-seed{seed}",
    )
