"""Per-task learnable token bank: selection, usage counts, key-pull loss.

Tokens are selected per sample by a frequency-weighted cosine score and
frozen once their task closes; only the current task's tokens ever receive
gradients or count updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParseError, UsageError
from .geometry import seeded_rng

# value range for fresh token keys/values
_INIT_LOW, _INIT_HIGH = -0.1, 0.1

# stream tag for token initialization draws
_TOKEN_STREAM = 3

_MAGIC = "ofcl-token-bank v1"


@dataclass
class Token:
    key: np.ndarray  # (dim,)
    values: np.ndarray  # (token_length, dim)
    task_of_origin: int
    frequency: int = 1


class TokenBank:
    """Ordered pool of tokens across all tasks, with a per-task index."""

    def __init__(self, dim: int, token_length: int):
        if dim < 1 or token_length < 1:
            raise UsageError("token dimensions must be positive")
        self.dim = dim
        self.token_length = token_length
        self.tokens: list[Token] = []
        self._by_task: dict[int, list[int]] = {}

    def __len__(self) -> int:
        return len(self.tokens)

    def tasks(self) -> list[int]:
        return sorted(self._by_task)

    def task_indices(self, task: int) -> list[int]:
        if task not in self._by_task:
            raise UsageError(f"task {task} has no tokens")
        return list(self._by_task[task])

    def init_task_tokens(self, task: int, count: int, seed: int) -> list[int]:
        """Append ``count`` fresh tokens for ``task``, uniform in [-0.1, 0.1]."""
        if task in self._by_task:
            raise UsageError(f"task {task} already has tokens")
        if count < 1:
            raise UsageError("token count must be positive")
        rng = seeded_rng(seed, _TOKEN_STREAM, task)
        indices = []
        for _ in range(count):
            key = rng.uniform(_INIT_LOW, _INIT_HIGH, size=self.dim)
            values = rng.uniform(_INIT_LOW, _INIT_HIGH, size=(self.token_length, self.dim))
            self.tokens.append(Token(key, values, task))
            indices.append(len(self.tokens) - 1)
        self._by_task[task] = indices
        return indices

    def _candidates(self, scope_task: int | None) -> list[int]:
        if scope_task is None:
            return list(range(len(self.tokens)))
        return self.task_indices(scope_task)

    def select(self, h, k: int, scope_task: int | None = None) -> list[int]:
        """Indices of the k best tokens under (1 - cos(h, key)) * frequency.

        ``scope_task`` restricts candidates to one task's tokens (training);
        None searches the whole bank (testing). Ties break toward the lower
        index. Deterministic for a frozen bank state.
        """
        return self.select_batch(np.asarray(h, dtype=float)[None, :], k, scope_task)[0]

    def select_batch(self, hs, k: int, scope_task: int | None = None) -> list[list[int]]:
        """Vectorized :meth:`select` over the rows of ``hs``."""
        candidates = self._candidates(scope_task)
        if len(candidates) < k:
            raise UsageError(f"need {k} tokens, scope holds {len(candidates)}")
        hs = np.atleast_2d(np.asarray(hs, dtype=float))
        hn = np.linalg.norm(hs, axis=1)
        if np.any(hn == 0.0):
            raise DegenerateInputError("zero-norm query vector")
        keys = np.stack([self.tokens[i].key for i in candidates])
        kn = np.linalg.norm(keys, axis=1)
        if np.any(kn == 0.0):
            bad = candidates[int(np.flatnonzero(kn == 0.0)[0])]
            raise DegenerateInputError(f"token {bad} has a zero-norm key")
        freq = np.array([self.tokens[i].frequency for i in candidates], dtype=float)
        cos = (hs @ keys.T) / (hn[:, None] * kn[None, :])
        scores = (1.0 - cos) * freq[None, :]
        cols = np.arange(len(candidates))
        out = []
        for row in scores:
            order = np.lexsort((cols, row))  # score, then lower index
            out.append([candidates[j] for j in order[:k]])
        return out

    def record_selection(self, indices) -> None:
        """Increment the usage count of every selected token by one."""
        for i in indices:
            self.tokens[i].frequency += 1

    def key_pull_loss(self, h, selected, lam: float):
        """Cosine-distance pull of the selected keys toward the query.

        loss = lam * sum over selected of (1 - cos(h, key)). Returns
        (loss, grads) with one gradient array per selected key in selection
        order; unselected keys have zero gradient by construction.
        """
        if len(selected) == 0:
            raise UsageError("no tokens selected")
        h = np.asarray(h, dtype=float)
        hn = np.linalg.norm(h)
        if hn == 0.0:
            raise DegenerateInputError("zero-norm query vector")
        loss = 0.0
        grads = []
        for i in selected:
            key = self.tokens[i].key
            kn = np.linalg.norm(key)
            if kn == 0.0:
                raise DegenerateInputError(f"token {i} has a zero-norm key")
            cos = float(h @ key) / (hn * kn)
            loss += lam * (1.0 - cos)
            grads.append(-lam * (h / (hn * kn) - cos * key / (kn * kn)))
        return loss, grads

    # -- serialization ----------------------------------------------------

    def dumps(self) -> str:
        lines = [
            _MAGIC,
            f"dim {self.dim}",
            f"token_length {self.token_length}",
            f"count {len(self.tokens)}",
        ]
        for tok in self.tokens:
            nums = [repr(float(v)) for v in tok.key] + [
                repr(float(v)) for v in tok.values.ravel()
            ]
            lines.append(f"token {tok.task_of_origin} {tok.frequency} " + " ".join(nums))
        return "\n".join(lines) + "\n"

    def dump(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "TokenBank":
        lines = text.splitlines()
        if not lines or lines[0] != _MAGIC:
            raise ParseError("bad or missing token-bank magic line", line=1)
        try:
            dim = int(lines[1].split()[1])
            token_length = int(lines[2].split()[1])
            count = int(lines[3].split()[1])
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed token-bank header: {exc}", line=2) from exc
        bank = cls(dim, token_length)
        want = dim + token_length * dim
        for lineno, raw in enumerate(lines[4:], start=5):
            parts = raw.split()
            if not parts:
                continue
            if parts[0] != "token" or len(parts) != 3 + want:
                raise ParseError(
                    f"expected 'token <task> <freq>' with {want} numbers", line=lineno
                )
            try:
                task = int(parts[1])
                freq = int(parts[2])
                nums = np.array([float(p) for p in parts[3:]])
            except ValueError as exc:
                raise ParseError(f"bad number in token record: {exc}", line=lineno) from exc
            tok = Token(nums[:dim], nums[dim:].reshape(token_length, dim), task, freq)
            bank.tokens.append(tok)
            bank._by_task.setdefault(task, []).append(len(bank.tokens) - 1)
        if len(bank.tokens) != count:
            raise ParseError(
                f"header promised {count} tokens, found {len(bank.tokens)}",
                line=len(lines),
            )
        return bank

    @classmethod
    def load(cls, path) -> "TokenBank":
        with open(path) as fh:
            return cls.loads(fh.read())
