"""Transformer text encoder producing one unit vector per text."""

from __future__ import annotations

import threading
from typing import Sequence

import torch
from transformers import AutoModel, AutoTokenizer


class TextEncoder:
    """Loads a checkpoint once and embeds batches of texts.

    A text vector is the mean of the final-layer token states over real
    (non-padding) positions, then L2-normalized. Mean pooling is a declared
    choice; encoders in this family do not prescribe one.

    Loading happens in the constructor so a bad checkpoint fails at startup,
    not on the first request.
    """

    def __init__(self, model: str, device: str = "cpu"):
        self.tokenizer = AutoTokenizer.from_pretrained(model)
        self.model = AutoModel.from_pretrained(model)
        self.device = torch.device(device)
        self.model.to(self.device)
        self.model.eval()
        self.dim = int(self.model.config.hidden_size)
        self.max_tokens = self._token_limit()
        # one forward pass per device at a time
        self._lock = threading.Lock()

    def _token_limit(self) -> int:
        limit = self.tokenizer.model_max_length
        # tokenizers without a stored limit report a sentinel in the 1e30 range
        if limit is None or limit > 1_000_000:
            limit = getattr(self.model.config, "max_position_embeddings", 512)
        return int(limit)

    def encode(self, texts: Sequence[str]) -> list[list[float]]:
        """Embed ``texts`` in one forward pass, rows parallel to inputs."""
        if not texts:
            return []
        with self._lock, torch.no_grad():
            batch = self.tokenizer(
                list(texts),
                padding=True,
                truncation=True,
                max_length=self.max_tokens,
                return_tensors="pt",
            ).to(self.device)
            hidden = self.model(**batch).last_hidden_state
            mask = batch["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            summed = (hidden * mask).sum(dim=1)
            counts = mask.sum(dim=1).clamp(min=1.0)
            vectors = torch.nn.functional.normalize(summed / counts, p=2, dim=1)
        return vectors.cpu().tolist()
