"""The 65-term planning objective and the fluence complexity surrogate.

Each organ-at-risk contributes seven terms (mean dose, max dose, and the
average dose above five quantile thresholds of the input dose over that
organ); each target contributes three (max dose, average underdose below
prescription, average overdose above it): 8*7 + 3*3 = 65. Quantiles use
linear interpolation on sorted voxel doses, the same convention as D99.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..phantom import Phantom
from ..structures import OARS, TARGETS, StructureId

OAR_QUANTILES = (0.25, 0.50, 0.75, 0.90, 0.975)
NUM_TERMS = len(OARS) * (2 + len(OAR_QUANTILES)) + len(TARGETS) * 3


class TermKind(Enum):
    MEAN_DOSE = "mean_dose"
    MAX_DOSE = "max_dose"
    AVG_ABOVE = "avg_above"      # mean of max(0, d - threshold)
    AVG_UNDERDOSE = "avg_under"  # mean of max(0, prescription - d)
    AVG_OVERDOSE = "avg_over"    # mean of max(0, d - prescription)


@dataclass(frozen=True)
class ObjectiveTerm:
    structure: StructureId
    kind: TermKind
    threshold: float | None = None  # Gy; quantile tau or prescription rho

    def to_json(self) -> dict:
        return {
            "structure": self.structure.name,
            "kind": self.kind.value,
            "threshold": self.threshold,
        }

    @staticmethod
    def from_json(d: dict) -> "ObjectiveTerm":
        return ObjectiveTerm(
            structure=StructureId[d["structure"]],
            kind=TermKind(d["kind"]),
            threshold=d["threshold"],
        )


def build_terms(phantom: Phantom, predicted_dose: np.ndarray) -> list[ObjectiveTerm]:
    """Instantiate the 65 objective terms from a phantom and an input dose.

    The input dose (a model prediction, or any seed dose) only sets the
    per-OAR quantile thresholds; term ordering is fixed: the eight OARs in
    enum order with [mean, max, five avg-above terms], then the three
    targets in descending prescription order with [max, under, over].
    """
    if predicted_dose.shape != phantom.grid.dims:
        raise ValueError(
            f"dose dims {predicted_dose.shape} do not match phantom {phantom.grid.dims}"
        )
    terms: list[ObjectiveTerm] = []
    for oar in OARS:
        mask = phantom.grid.mask(oar)
        if not mask.any():
            raise ValueError(f"structure {oar.name} is empty")
        vals = np.sort(predicted_dose[mask].astype(np.float64))
        terms.append(ObjectiveTerm(oar, TermKind.MEAN_DOSE))
        terms.append(ObjectiveTerm(oar, TermKind.MAX_DOSE))
        for p in OAR_QUANTILES:
            tau = float(np.quantile(vals, p, method="linear"))
            terms.append(ObjectiveTerm(oar, TermKind.AVG_ABOVE, threshold=tau))
    for target in TARGETS:
        if not phantom.grid.mask(target).any():
            raise ValueError(f"structure {target.name} is empty")
        rho = phantom.prescriptions[target]
        terms.append(ObjectiveTerm(target, TermKind.MAX_DOSE, threshold=rho))
        terms.append(ObjectiveTerm(target, TermKind.AVG_UNDERDOSE, threshold=rho))
        terms.append(ObjectiveTerm(target, TermKind.AVG_OVERDOSE, threshold=rho))
    assert len(terms) == NUM_TERMS
    return terms


def term_value(term: ObjectiveTerm, dose: np.ndarray, mask: np.ndarray) -> float:
    """Evaluate one term on a dose volume restricted to a structure mask."""
    vals = dose[mask]
    if vals.size == 0:
        raise ValueError(f"empty mask for {term.structure.name}")
    if term.kind is TermKind.MEAN_DOSE:
        return float(vals.mean())
    if term.kind is TermKind.MAX_DOSE:
        return float(vals.max())
    if term.kind is TermKind.AVG_ABOVE:
        return float(np.maximum(vals - term.threshold, 0.0).mean())
    if term.kind is TermKind.AVG_UNDERDOSE:
        return float(np.maximum(term.threshold - vals, 0.0).mean())
    if term.kind is TermKind.AVG_OVERDOSE:
        return float(np.maximum(vals - term.threshold, 0.0).mean())
    raise ValueError(f"unknown term kind {term.kind}")


def term_values(terms, dose: np.ndarray, phantom: Phantom) -> np.ndarray:
    out = np.empty(len(terms))
    for i, t in enumerate(terms):
        out[i] = term_value(t, dose, phantom.grid.mask(t.structure))
    return out


def normalize_weights(alpha: np.ndarray) -> np.ndarray:
    """Project raw nonnegative weights onto the unit simplex by rescaling."""
    a = np.asarray(alpha, dtype=np.float64)
    if a.shape != (NUM_TERMS,):
        raise ValueError(f"expected {NUM_TERMS} weights, got {a.shape}")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError("weights must be finite and nonnegative")
    s = a.sum()
    if s <= 0:
        raise ValueError("weights must not be all zero")
    return a / s


def beam_fluence_maps(w: np.ndarray, beams) -> list[np.ndarray]:
    """Split a flat fluence vector into per-beam row-major maps."""
    total = sum(b.num_beamlets for b in beams)
    if w.shape != (total,):
        raise ValueError(
            f"fluence length {w.shape} does not match beam partition of {total}"
        )
    maps, off = [], 0
    for b in beams:
        maps.append(w[off : off + b.num_beamlets].reshape(b.rows, b.cols))
        off += b.num_beamlets
    return maps


def spg_complexity(w: np.ndarray, beams) -> float:
    """Sum of positive row-wise fluence gradients over all beams.

    Rows are padded with an implicit leading zero, so the step onto the
    first beamlet of each row counts; the trailing drop back to zero does
    not.
    """
    total = 0.0
    for fm in beam_fluence_maps(np.asarray(w, dtype=np.float64), beams):
        diff = np.diff(fm, axis=1, prepend=0.0)
        total += float(np.maximum(diff, 0.0).sum())
    return total


def spg_subgradient(w: np.ndarray, beams) -> np.ndarray:
    """A subgradient of spg_complexity at w."""
    g = np.zeros_like(np.asarray(w, dtype=np.float64))
    off = 0
    for b in beams:
        n = b.num_beamlets
        fm = w[off : off + n].reshape(b.rows, b.cols)
        diff = np.diff(fm, axis=1, prepend=0.0)
        active = diff > 0
        sub = np.zeros_like(fm)
        sub += active
        sub[:, :-1] -= active[:, 1:]
        g[off : off + n] = sub.ravel()
        off += n
    return g
