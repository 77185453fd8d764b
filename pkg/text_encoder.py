"""
PhaseGen - Text encoder

Bag-of-tokens prompt encoder over a closed vocabulary built from the corpus:
lowercase, split on anything that is not a letter or digit, average the
learned token embeddings, L2-normalize. Unknown tokens share one UNK
embedding. Empty prompts and masked prompts both map to the learned null
embedding.
"""

import re
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

UNK_TOKEN = "<unk>"
EMBED_DIM = 512
_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(prompt: Optional[str]) -> List[str]:
    if not prompt:
        return []
    return _TOKEN_RE.findall(prompt.lower())


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        tokens = [t for t in tokens if t != UNK_TOKEN]
        self.tokens = [UNK_TOKEN] + sorted(set(tokens))
        self.index: Dict[str, int] = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def build(cls, prompts: Iterable[str]) -> "Vocabulary":
        return cls([tok for prompt in prompts for tok in tokenize(prompt)])

    def __len__(self) -> int:
        return len(self.tokens)

    def ids(self, prompt: Optional[str]) -> List[int]:
        """Token ids in ascending order (bag of tokens)."""
        return sorted(self.index.get(tok, 0) for tok in tokenize(prompt))

    def to_list(self) -> List[str]:
        return list(self.tokens)


class TextEncoder(nn.Module):
    def __init__(self, vocab: Vocabulary, dim: int = EMBED_DIM):
        super().__init__()
        self.vocab = vocab
        self.dim = dim
        self.embedding = nn.Embedding(len(vocab), dim)
        self.null_embedding = nn.Parameter(torch.randn(dim) / np.sqrt(dim))

    def forward(self, prompts: Sequence[Optional[str]], mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Differentiable batch embedding (B, dim).

        Args:
            prompts: prompt strings (None or "" means no text)
            mask: optional (B,) bool tensor; True replaces the prompt with the null embedding
        """
        rows = []
        null = F.normalize(self.null_embedding, dim=-1)
        for i, prompt in enumerate(prompts):
            ids = self.vocab.ids(prompt)
            masked = mask is not None and bool(mask[i])
            if masked or not ids:
                rows.append(null)
            else:
                vectors = self.embedding(torch.as_tensor(ids, dtype=torch.long))
                rows.append(F.normalize(vectors.mean(dim=0), dim=-1))
        return torch.stack(rows)

    def null_vector(self) -> np.ndarray:
        null = self.null_embedding.detach().double().numpy()
        return null / np.linalg.norm(null)


def encode_text(prompt: Optional[str], encoder: TextEncoder) -> np.ndarray:
    """Unit-norm float64 embedding of a prompt; empty prompt -> null embedding."""
    ids = encoder.vocab.ids(prompt)
    if not ids:
        return encoder.null_vector()
    table = encoder.embedding.weight.detach().double().numpy()
    vector = table[ids].mean(axis=0)
    return vector / np.linalg.norm(vector)
