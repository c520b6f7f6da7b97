"""Dense embedding matrices and the word2vec text serialization format."""

from __future__ import annotations

import numpy as np

from .corpus import Vocabulary


class EmbeddingMatrix:
    """A |V| x d matrix of vectors with its vocabulary attached."""

    def __init__(self, vocab: Vocabulary, vectors: np.ndarray):
        vectors = np.asarray(vectors)
        if vectors.ndim != 2 or vectors.shape[0] != len(vocab):
            raise ValueError(
                f"vector matrix shape {vectors.shape} does not match vocabulary size {len(vocab)}"
            )
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding matrix contains non-finite entries")
        self.vocab = vocab
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.vocab.token_to_id[token]]

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def save(self, path, fmt: str = "%.6g") -> None:
        """Write word2vec text format: "count dim" header then one row per token."""
        n, d = self.vectors.shape
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{n} {d}\n")
            for tok, row in zip(self.vocab.id_to_token, self.vectors):
                f.write(tok + " " + " ".join(fmt % x for x in row) + "\n")

    @classmethod
    def load(cls, path, specials: list[str] | None = None) -> "EmbeddingMatrix":
        """Read word2vec text format.

        Tokens from `specials` found at the head of the file are registered
        as special tokens; plain embedding files have none.
        """
        with open(path, encoding="utf-8") as f:
            header = f.readline().split()
            n, d = int(header[0]), int(header[1])
            tokens: list[str] = []
            rows = np.empty((n, d), dtype=np.float64)
            for i in range(n):
                parts = f.readline().rstrip("\n").split(" ")
                tokens.append(parts[0])
                rows[i] = [float(x) for x in parts[1 : d + 1]]
        head = []
        if specials:
            known = set(specials)
            while len(head) < len(tokens) and tokens[len(head)] in known:
                head.append(tokens[len(head)])
        vocab = Vocabulary(tokens[len(head):], [0] * (len(tokens) - len(head)), head)
        return cls(vocab, rows)
