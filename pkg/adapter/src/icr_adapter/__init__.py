"""icr_adapter: bridge between a decoder-only LLM and the attnrank engine.

Builds reversed-order prompts, captures per-layer attention into ICRA dumps,
answers setwise likelihood/generation queries, and measures early-exit
forward latency.  The engine is consumed only through its external
interfaces: the ICRA file format, latency CSV, and the stdio JSONL protocol.
"""

from icr_adapter.prompts import PromptPlan, build_icr_prompt
from icr_adapter.runtime import ModelRuntime
from icr_adapter.setwise import setwise_answer

__all__ = ["PromptPlan", "build_icr_prompt", "ModelRuntime", "setwise_answer"]
