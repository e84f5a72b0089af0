"""Byzantine client behaviours.

Attacks only ever touch the updates or data of clients in the Byzantine
set; honest clients never see this module.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ATTACKS = ("none", "sf", "noise", "sa", "lf", "combi")
# order in which a combination attack applies its parts
DEFAULT_COMBINATION = ("lf", "sf", "sa", "noise")


@dataclass
class AttackSpec:
    kind: str = "none"
    byzantine: tuple = ()
    noise_mean: float = 0.1
    noise_var: float = 0.1
    scale: float = 100.0
    combination: tuple = DEFAULT_COMBINATION

    def validate(self, n: int) -> None:
        if self.kind not in ATTACKS:
            raise ConfigError(f"unknown attack {self.kind!r}; choose from {ATTACKS}")
        bad = [c for c in self.byzantine if not 0 <= c < n]
        if bad:
            raise ConfigError(f"byzantine ids {bad} outside [0, {n})")
        if len(set(self.byzantine)) != len(self.byzantine):
            raise ConfigError("duplicate byzantine ids")
        if not (np.isfinite(self.scale) and np.isfinite(self.noise_mean) and self.noise_var >= 0):
            raise ConfigError("attack parameters must be finite, variance non-negative")
        unknown = [p for p in self.combination if p not in ("lf", "sf", "sa", "noise")]
        if unknown:
            raise ConfigError(f"unknown combination parts {unknown}")

    @property
    def parts(self) -> tuple:
        if self.kind == "combi":
            return tuple(self.combination)
        if self.kind == "none":
            return ()
        return (self.kind,)

    def poisons_data(self) -> bool:
        return "lf" in self.parts


def sign_flip(u) -> np.ndarray:
    return -np.asarray(u, dtype=np.float64)


def gaussian_attack(d: int, rng: np.random.Generator, mean: float = 0.1, var: float = 0.1) -> np.ndarray:
    return rng.normal(mean, np.sqrt(var), size=d)


def scaling_attack(u, factor: float = 100.0) -> np.ndarray:
    return factor * np.asarray(u, dtype=np.float64)


def label_flip(label, n_classes: int):
    label = np.asarray(label)
    if np.any((label < 0) | (label >= n_classes)):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    out = n_classes - label - 1
    return int(out) if out.ndim == 0 else out


def poison_update(u, spec: AttackSpec, rng: np.random.Generator) -> np.ndarray:
    """Apply the update-level parts of ``spec`` in their configured order."""
    out = np.asarray(u, dtype=np.float64)
    for part in spec.parts:
        if part == "sf":
            out = sign_flip(out)
        elif part == "sa":
            out = scaling_attack(out, spec.scale)
        elif part == "noise":
            noise = gaussian_attack(out.size, rng, spec.noise_mean, spec.noise_var)
            # alone, the noise attack replaces the update; in a combination it is added
            out = noise if spec.kind == "noise" else out + noise
    return out


def combination(u, labels, n_classes: int, rng: np.random.Generator, spec: AttackSpec, train=None):
    """Label flip on data, optional local training, then update-level parts.

    ``train(labels)`` re-runs local training on the poisoned labels when given;
    otherwise ``u`` is taken as the already-trained update.
    """
    labels = np.asarray(labels)
    if "lf" in spec.parts:
        labels = label_flip(labels, n_classes)
        if train is not None:
            u = train(labels)
    return poison_update(u, spec, rng), labels
