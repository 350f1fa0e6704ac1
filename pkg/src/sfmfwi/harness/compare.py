"""Cross-run comparison table and overlaid convergence / rank plots."""
from __future__ import annotations

import csv
import os

from .. import metrics
from ..errors import InvalidArgument
from ..inversion import ConvergenceRecord
from ..io import load_field
from .experiment import field_checksum, read_manifest
from .svg import line_plot

COLUMNS = ("method", "rel_l2", "ssim", "final_misfit", "rank")


def _label(manifest, run_dir, seen):
    base = manifest["method"]
    if manifest.get("scenario", {}).get("name") not in (None, "clean"):
        base += f" ({manifest['scenario']['name']})"
    label = base
    if label in seen:
        label = f"{base} [{os.path.basename(os.path.normpath(run_dir))}]"
    seen.add(label)
    return label


def compare_runs(run_dirs, out_dir):
    """Write ``comparison.csv``, ``convergence.svg`` and ``rank.svg`` for completed runs.

    Runs must share a truth model; when no truth is stored the quality columns
    are left empty rather than zero.
    """
    if not run_dirs:
        raise InvalidArgument("compare needs at least one run directory")
    rows, seen, checksums = [], set(), {}
    misfit_series, rank_series = {}, {}
    for d in run_dirs:
        manifest = read_manifest(d)
        record = ConvergenceRecord.read_csv(os.path.join(d, "convergence.csv"))
        final = load_field(os.path.join(d, "final.sfwi"))
        truth_path = os.path.join(d, "truth.sfwi")
        truth = load_field(truth_path) if os.path.exists(truth_path) else None
        checksums[d] = field_checksum(truth) if truth is not None else manifest.get("truth_sha256")
        label = _label(manifest, d, seen)
        row = {"method": label, "rel_l2": "", "ssim": "", "rank": metrics.effective_rank(final.values),
               "final_misfit": repr(float(manifest["summary"]["final_misfit"]))}
        if truth is not None:
            row["rel_l2"] = repr(metrics.rel_l2(final.values, truth.values))
            row["ssim"] = repr(metrics.ssim(final.values, truth.values))
        rows.append(row)
        misfit_series[label] = (record.column("step"), record.column("misfit"))
        rank_series[label] = (record.column("step"), record.column("rank"))
    distinct = {c for c in checksums.values() if c is not None}
    if len(distinct) > 1:
        listing = ", ".join(f"{d}: {(c or 'none')[:12]}" for d, c in checksums.items())
        raise InvalidArgument(f"runs use different truth models and are not comparable ({listing})")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "comparison.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        w.writerows(rows)
    line_plot(misfit_series, os.path.join(out_dir, "convergence.svg"), title="Data misfit",
              xlabel="physics step", ylabel="misfit", log_y=True)
    line_plot(rank_series, os.path.join(out_dir, "rank.svg"), title="Effective rank",
              xlabel="physics step", ylabel="rank")
    return rows
