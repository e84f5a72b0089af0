"""In-process message bus for the simulated parties.

Every opening is a barrier: all ``n`` parties broadcast their share and the
value is only available once every contribution has arrived. Because the
simulator keeps all shares of a value stacked in one array, delivering the
broadcast reduces to summing along the party axis; the bus still accounts
for the traffic and keeps the transcript of masked openings.
"""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import ProtocolError
from .ring import DTYPE
from .sharing import Shared

# Openings that must look uniformly random to any coalition of n-1 parties.
MASKED_KINDS = ("delta", "epsilon", "trunc", "compare_mask")


class Transport:
    def __init__(self, n_parties: int, capture_limit: int = 0):
        self.n_parties = n_parties
        self.capture_limit = capture_limit
        self.low_byte_hist = {k: np.zeros(256, dtype=np.int64) for k in MASKED_KINDS}
        self.captured: dict[str, list[np.ndarray]] = defaultdict(list)
        self._captured_words = defaultdict(int)
        self.openings = defaultdict(int)
        self.words_sent = 0
        self.rounds = 0

    def open(self, value: Shared, kind: str) -> np.ndarray:
        """Broadcast every party's share of ``value`` and return the reconstruction."""
        if value.n_parties != self.n_parties:
            raise ProtocolError(
                f"opening expects {self.n_parties} contributions, got {value.n_parties}"
            )
        opened = value.shares.sum(axis=0, dtype=DTYPE)
        n = self.n_parties
        self.words_sent += n * (n - 1) * opened.size
        self.openings[kind] += opened.size
        self.rounds += 1
        if kind in self.low_byte_hist:
            self.low_byte_hist[kind] += np.bincount(
                (opened.ravel() & DTYPE(0xFF)).astype(np.intp), minlength=256
            )
            room = self.capture_limit - self._captured_words[kind]
            if room > 0:
                chunk = opened.ravel()[:room].copy()
                self.captured[kind].append(chunk)
                self._captured_words[kind] += chunk.size
        return opened

    def histogram(self) -> np.ndarray:
        """Combined low-byte histogram of all masked openings so far."""
        return sum(self.low_byte_hist.values())

    def stats(self) -> dict:
        return {
            "openings": dict(self.openings),
            "words_sent": self.words_sent,
            "rounds": self.rounds,
        }

    def dump_transcript(self, path) -> None:
        arrays = {f"words_{k}": np.concatenate(v) if v else np.zeros(0, dtype=DTYPE)
                  for k, v in self.captured.items()}
        arrays.update({f"hist_{k}": h for k, h in self.low_byte_hist.items()})
        np.savez_compressed(Path(path), **arrays)
