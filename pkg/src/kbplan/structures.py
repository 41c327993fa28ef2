"""Structure set shared by every stage of the pipeline.

Three nested planning targets (PTV70/63/56, prescribed 70/63/56 Gy) and
eight organs-at-risk. Unclassified tissue keeps the CT grayscale and never
enters the planning objective.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class StructureId(IntEnum):
    PTV70 = 0
    PTV63 = 1
    PTV56 = 2
    BRAINSTEM = 3
    SPINAL_CORD = 4
    RIGHT_PAROTID = 5
    LEFT_PAROTID = 6
    LARYNX = 7
    ESOPHAGUS = 8
    MANDIBLE = 9
    LIM_POST_NECK = 10
    UNCLASSIFIED = 11


# Target precedence is highest prescription first: a voxel inside several
# target ellipsoids is labeled with the hottest one.
TARGETS = (StructureId.PTV70, StructureId.PTV63, StructureId.PTV56)

OARS = (
    StructureId.BRAINSTEM,
    StructureId.SPINAL_CORD,
    StructureId.RIGHT_PAROTID,
    StructureId.LEFT_PAROTID,
    StructureId.LARYNX,
    StructureId.ESOPHAGUS,
    StructureId.MANDIBLE,
    StructureId.LIM_POST_NECK,
)

PRESCRIPTIONS_GY = {
    StructureId.PTV70: 70.0,
    StructureId.PTV63: 63.0,
    StructureId.PTV56: 56.0,
}

# Fixed 12-entry RGB palette for contour rendering, one row per StructureId.
# Every structure color has unequal channels so that "pure grayscale" is an
# unambiguous marker for unclassified tissue. The UNCLASSIFIED row is a
# placeholder: those pixels are drawn as density grayscale instead.
PALETTE = np.array(
    [
        [0.90, 0.10, 0.10],  # PTV70
        [0.95, 0.45, 0.10],  # PTV63
        [0.95, 0.80, 0.20],  # PTV56
        [0.20, 0.40, 0.95],  # BRAINSTEM
        [0.15, 0.80, 0.90],  # SPINAL_CORD
        [0.15, 0.75, 0.25],  # RIGHT_PAROTID
        [0.55, 0.90, 0.30],  # LEFT_PAROTID
        [0.70, 0.25, 0.85],  # LARYNX
        [0.90, 0.35, 0.65],  # ESOPHAGUS
        [0.55, 0.35, 0.15],  # MANDIBLE
        [0.35, 0.55, 0.60],  # LIM_POST_NECK
        [0.00, 0.00, 0.00],  # UNCLASSIFIED (unused; grayscale path)
    ],
    dtype=np.float32,
)


def is_target(s: StructureId) -> bool:
    return s in TARGETS


def is_oar(s: StructureId) -> bool:
    return s in OARS
