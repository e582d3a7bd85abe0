"""HTTP model server speaking the kallima provider wire protocol.

Five endpoints (posteriors, mlm, embed, perplexity, translate) backed either
by deterministic mock models (no artifacts needed) or by real transformer
checkpoints when the optional torch/transformers extras are installed.
"""

__version__ = "0.1.0"
