"""Plan files: JSON header + embedded KBPV dose + raw fluence.

    u32       header length
    header    UTF-8 JSON (beams, term list, alpha, complexity bound,
              provenance, achieved values, diagnostics)
    KBPV      dose payload (self-describing volume blob)
    u32       beamlet count, then f32 little-endian fluence array
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..dosecalc import Beam
from ..volio import KIND_DOSE, parse_volume, volume_bytes, volume_size_bytes
from .forward import Plan
from .terms import ObjectiveTerm


def _beam_json(b: Beam) -> dict:
    return {
        "gantry_deg": b.gantry_deg,
        "source_mm": b.source_mm,
        "rows": b.rows,
        "cols": b.cols,
        "beamlet_mm": b.beamlet_mm,
        "iso_mm": list(b.iso_mm),
    }


def _beam_from_json(d: dict) -> Beam:
    return Beam(
        gantry_deg=d["gantry_deg"],
        source_mm=d["source_mm"],
        rows=d["rows"],
        cols=d["cols"],
        beamlet_mm=d["beamlet_mm"],
        iso_mm=tuple(d["iso_mm"]),
    )


def write_plan(path, plan: Plan, beams: list[Beam], terms: list[ObjectiveTerm], spacing):
    header = {
        "provenance": plan.provenance,
        "beams": [_beam_json(b) for b in beams],
        "terms": [t.to_json() for t in terms],
        "alpha": None if plan.weights is None else [float(a) for a in plan.weights],
        "complexity_bound": plan.complexity_bound,
        "complexity": plan.complexity,
        "objective": plan.objective,
        "term_values": [float(v) for v in plan.term_values],
        "diagnostics": {
            k: v
            for k, v in plan.diagnostics.items()
            if isinstance(v, (int, float, str))
        },
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    dose_blob = volume_bytes(plan.dose, spacing, KIND_DOSE)
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(dose_blob)
        f.write(struct.pack("<I", plan.fluence.size))
        f.write(np.ascontiguousarray(plan.fluence, dtype="<f4").tobytes())


def read_plan(path) -> tuple[Plan, list[Beam], list[ObjectiveTerm], tuple]:
    with open(path, "rb") as f:
        data = f.read()
    (hlen,) = struct.unpack_from("<I", data, 0)
    header = json.loads(data[4 : 4 + hlen].decode("utf-8"))
    off = 4 + hlen
    dose, spacing, kind = parse_volume(data[off:])
    if kind != KIND_DOSE:
        raise ValueError("plan dose payload has wrong kind")
    off += volume_size_bytes(data, off)
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    fluence = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64)
    beams = [_beam_from_json(d) for d in header["beams"]]
    terms = [ObjectiveTerm.from_json(d) for d in header["terms"]]
    plan = Plan(
        fluence=fluence,
        dose=dose,
        term_values=np.asarray(header["term_values"]),
        objective=header["objective"],
        complexity=header["complexity"],
        provenance=header["provenance"],
        weights=None if header["alpha"] is None else np.asarray(header["alpha"]),
        complexity_bound=header["complexity_bound"],
        diagnostics=header.get("diagnostics", {}),
    )
    return plan, beams, terms, spacing
