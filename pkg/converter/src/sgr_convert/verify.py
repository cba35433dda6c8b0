"""Post-hoc validation of emitted .sgr1 files.

Checks run in order and the first failure wins: container integrity
(magic, sizes, checksum), CSR structure (monotone row_ptr, sorted unique
columns, no self-loops), symmetry, then the published per-dataset counts
when the filename stem is a known dataset id. A manifest.json sitting next
to the file (or passed explicitly) explains edge counts that are short by
the recorded number of stripped self-loops.
"""

from __future__ import annotations

import json
import os

from .convert import TABLE8
from .errors import ValidationError
from .sgr1 import check_symmetry, read_sgr1


def _manifest_entry(path: str, name: str, manifest_path: str | None) -> dict | None:
    candidate = manifest_path or os.path.join(os.path.dirname(path) or ".",
                                              "manifest.json")
    if not os.path.exists(candidate):
        return None
    with open(candidate) as fh:
        table = json.load(fh)
    entry = table.get(name)
    if entry is not None and not isinstance(entry, dict):
        raise ValidationError(f"manifest entry for {name!r} is not an object")
    return entry


def verify(path: str, manifest_path: str | None = None) -> dict:
    """Validate one emitted file; raises ValidationError on the first
    problem, otherwise returns a summary dict of what was checked."""
    payload = read_sgr1(path)  # magic, sizes, CRC, CSR shape all enforced here
    check_symmetry(payload.n, payload.row_ptr, payload.col_idx)

    name = os.path.splitext(os.path.basename(path))[0]
    summary = {
        "name": name,
        "nodes": payload.n,
        "directed_edges": payload.directed_edges,
        "features": int(payload.features.shape[1]),
        "classes": payload.num_classes,
        "published_counts": "not checked (unknown dataset id)",
    }
    expected = TABLE8.get(name)
    if expected is None:
        return summary

    exp_n, exp_e, exp_f, exp_c = expected
    for field, got, want in (("nodes", payload.n, exp_n),
                             ("features", summary["features"], exp_f),
                             ("classes", payload.num_classes, exp_c)):
        if got != want:
            raise ValidationError(
                f"{name}: {field} {got} does not match the published "
                f"statistics table ({want})")

    edges = payload.directed_edges
    if edges == exp_e:
        summary["published_counts"] = "exact"
        return summary

    entry = _manifest_entry(path, name, manifest_path)
    stripped = int(entry.get("self_loops_stripped", 0)) if entry else 0
    if stripped and edges + stripped == exp_e:
        summary["published_counts"] = (
            f"exact after {stripped} stripped self-loops recorded in manifest")
        return summary
    hint = ("; no manifest entry explains the difference" if entry is None
            else f"; manifest records {stripped} stripped self-loops")
    raise ValidationError(
        f"{name}: directed edges {edges} does not match the published "
        f"statistics table ({exp_e}){hint}")
