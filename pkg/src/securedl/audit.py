"""Uniformity audit of opened protocol values.

Every masked opening (Beaver deltas/epsilons, truncation and comparison
masks) should be indistinguishable from uniform ring elements. We test the
low byte of each opened word with a chi-square goodness-of-fit test.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import chisquare

from .ring import DTYPE
from .transport import MASKED_KINDS

ALPHA = 0.01
# chi-square needs an expected count of about 5 per bin to be meaningful
MIN_SAMPLES = 5 * 256


@dataclass
class AuditLine:
    kind: str
    samples: int
    statistic: float
    p_value: float

    @property
    def testable(self) -> bool:
        return self.samples >= MIN_SAMPLES

    def passed(self, alpha: float = ALPHA) -> bool:
        """Too-small samples are skipped rather than failed."""
        return not self.testable or self.p_value >= alpha


def low_byte_histogram(words) -> np.ndarray:
    words = np.asarray(words, dtype=DTYPE).ravel()
    return np.bincount((words & DTYPE(0xFF)).astype(np.intp), minlength=256)


def chi_square_uniform(hist) -> tuple[float, float]:
    hist = np.asarray(hist, dtype=np.float64)
    if hist.sum() == 0:
        return float("nan"), float("nan")
    res = chisquare(hist)
    return float(res.statistic), float(res.pvalue)


def audit_histograms(hists: dict) -> list[AuditLine]:
    """One line per kind with data, then a combined line named ``all``."""
    lines = []
    total = np.zeros(256, dtype=np.int64)
    for kind, hist in hists.items():
        hist = np.asarray(hist, dtype=np.int64)
        if hist.sum() == 0:
            continue
        total += hist
        lines.append(AuditLine(kind, int(hist.sum()), *chi_square_uniform(hist)))
    lines.append(AuditLine("all", int(total.sum()), *chi_square_uniform(total)))
    return lines


def verdict(lines: list[AuditLine], alpha: float = ALPHA) -> bool:
    """Every testable line passes and the combined line had enough data."""
    return lines[-1].testable and all(ln.passed(alpha) for ln in lines)


def load_transcript(path) -> dict:
    """Histograms from a transcript dump; captured words are used when no histogram was stored."""
    hists = {}
    with np.load(Path(path)) as data:
        for kind in MASKED_KINDS:
            if f"hist_{kind}" in data:
                hists[kind] = data[f"hist_{kind}"]
            elif f"words_{kind}" in data:
                hists[kind] = low_byte_histogram(data[f"words_{kind}"])
    return hists


def format_report(lines: list[AuditLine], alpha: float = ALPHA) -> str:
    rows = [f"{'kind':<14}{'samples':>12}{'chi2':>12}{'p':>10}  result"]
    for ln in lines:
        result = "skipped" if not ln.testable else ("PASS" if ln.passed(alpha) else "FAIL")
        rows.append(f"{ln.kind:<14}{ln.samples:>12}{ln.statistic:>12.2f}{ln.p_value:>10.4f}  {result}")
    return "\n".join(rows)
