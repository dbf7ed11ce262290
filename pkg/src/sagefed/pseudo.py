"""Pseudo-label assignment from a (local, global) prediction pair.

Two confidence-gated schemes plus the single-model baselines:

  - collaborative assignment: trust the local prediction when it clears
    the threshold, fall back to the global one, abstain otherwise
  - soft correction: inside the confident-local branch, interpolate the
    local and global one-hots with a weight that decays exponentially in
    the confidence gap between the two models

All functions are pure and operate on one sample at a time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

KAPPA_HALF_AT_005 = 13.86  # exp(-kappa * 0.05) = 0.5 up to rounding


class DecisionKind(str, Enum):
    CORRECTED_SOFT = "corrected_soft"
    HARD = "hard"
    ABSTAIN = "abstain"


@dataclass(frozen=True)
class CorrectionConfig:
    tau: float = 0.95
    kappa: float = KAPPA_HALF_AT_005

    def __post_init__(self) -> None:
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must be in (0,1), got {self.tau}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")


@dataclass(frozen=True)
class PseudoLabelDecision:
    """Outcome for one unlabeled sample.

    target is None iff the sample abstained; lam is set only for soft
    corrections; branch records which model's confidence admitted the
    sample ("local"/"global", None on abstain). Argmaxes and maxima of
    both predictions are always recorded for diagnostics.
    """

    kind: DecisionKind
    target: np.ndarray | None
    confidence_local: float
    confidence_global: float
    class_local: int
    class_global: int
    lam: float | None = None
    branch: str | None = None

    @property
    def abstained(self) -> bool:
        return self.kind is DecisionKind.ABSTAIN


def _check_pair(p_l: np.ndarray, p_g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p_l = np.asarray(p_l, dtype=np.float64)
    p_g = np.asarray(p_g, dtype=np.float64)
    if p_l.ndim != 1 or p_l.shape != p_g.shape:
        raise ValueError(f"prediction shapes differ: {p_l.shape} vs {p_g.shape}")
    for name, p in (("local", p_l), ("global", p_g)):
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} prediction is not a distribution")
    return p_l, p_g


def _onehot(c: int, num_classes: int) -> np.ndarray:
    t = np.zeros(num_classes)
    t[c] = 1.0
    return t


def confidence_gap(p_l: np.ndarray, p_g: np.ndarray) -> float:
    """Absolute difference of the two max confidences."""
    p_l, p_g = _check_pair(p_l, p_g)
    return abs(float(p_l.max()) - float(p_g.max()))


def correction_coefficient(delta_c: float, kappa: float) -> float:
    """Interpolation weight exp(-kappa * delta_c), no clamping."""
    if delta_c < 0:
        raise ValueError(f"confidence gap must be >= 0, got {delta_c}")
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    return math.exp(-kappa * delta_c)


def soft_correct(p_l: np.ndarray, p_g: np.ndarray, lam: float) -> np.ndarray:
    """lam * onehot(local argmax) + (1 - lam) * onehot(global argmax)."""
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must be in [0,1], got {lam}")
    p_l, p_g = _check_pair(p_l, p_g)
    c = p_l.shape[0]
    return lam * _onehot(int(p_l.argmax()), c) + (1.0 - lam) * _onehot(int(p_g.argmax()), c)


def cpg_assign(p_l: np.ndarray, p_g: np.ndarray, cfg: CorrectionConfig) -> PseudoLabelDecision:
    """Collaborative hard assignment: local if confident, else global, else abstain."""
    p_l, p_g = _check_pair(p_l, p_g)
    conf_l, conf_g = float(p_l.max()), float(p_g.max())
    cls_l, cls_g = int(p_l.argmax()), int(p_g.argmax())
    c = p_l.shape[0]
    if conf_l > cfg.tau:
        return PseudoLabelDecision(DecisionKind.HARD, _onehot(cls_l, c), conf_l, conf_g, cls_l, cls_g, branch="local")
    if conf_g > cfg.tau:
        return PseudoLabelDecision(DecisionKind.HARD, _onehot(cls_g, c), conf_l, conf_g, cls_l, cls_g, branch="global")
    return PseudoLabelDecision(DecisionKind.ABSTAIN, None, conf_l, conf_g, cls_l, cls_g)


def sage_assign(p_l: np.ndarray, p_g: np.ndarray, cfg: CorrectionConfig) -> PseudoLabelDecision:
    """Collaborative assignment with soft correction in the local branch."""
    p_l, p_g = _check_pair(p_l, p_g)
    conf_l, conf_g = float(p_l.max()), float(p_g.max())
    cls_l, cls_g = int(p_l.argmax()), int(p_g.argmax())
    c = p_l.shape[0]
    if conf_l > cfg.tau:
        lam = correction_coefficient(abs(conf_l - conf_g), cfg.kappa)
        target = lam * _onehot(cls_l, c) + (1.0 - lam) * _onehot(cls_g, c)
        return PseudoLabelDecision(
            DecisionKind.CORRECTED_SOFT, target, conf_l, conf_g, cls_l, cls_g, lam=lam, branch="local"
        )
    if conf_g > cfg.tau:
        return PseudoLabelDecision(DecisionKind.HARD, _onehot(cls_g, c), conf_l, conf_g, cls_l, cls_g, branch="global")
    return PseudoLabelDecision(DecisionKind.ABSTAIN, None, conf_l, conf_g, cls_l, cls_g)


def _single_model_assign(p_l, p_g, cfg, which: str) -> PseudoLabelDecision:
    p_l, p_g = _check_pair(p_l, p_g)
    conf_l, conf_g = float(p_l.max()), float(p_g.max())
    cls_l, cls_g = int(p_l.argmax()), int(p_g.argmax())
    c = p_l.shape[0]
    conf, cls = (conf_l, cls_l) if which == "local" else (conf_g, cls_g)
    if conf > cfg.tau:
        return PseudoLabelDecision(DecisionKind.HARD, _onehot(cls, c), conf_l, conf_g, cls_l, cls_g, branch=which)
    return PseudoLabelDecision(DecisionKind.ABSTAIN, None, conf_l, conf_g, cls_l, cls_g)


PSEUDO_MODES = ("lpl", "gpl", "cpg", "sage")


def strategy_assign(
    mode: str, p_l: np.ndarray, p_g: np.ndarray, cfg: CorrectionConfig
) -> PseudoLabelDecision:
    """Dispatch over the pseudo-labeling schemes.

    lpl/gpl threshold a single model's prediction; cpg combines the two
    with hard labels; sage adds the soft correction.
    """
    if mode == "lpl":
        return _single_model_assign(p_l, p_g, cfg, "local")
    if mode == "gpl":
        return _single_model_assign(p_l, p_g, cfg, "global")
    if mode == "cpg":
        return cpg_assign(p_l, p_g, cfg)
    if mode == "sage":
        return sage_assign(p_l, p_g, cfg)
    raise ValueError(f"unknown pseudo-label mode {mode!r}, expected one of {PSEUDO_MODES}")
