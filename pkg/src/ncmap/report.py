"""Flat verification reports: one residual per row, byte-stable JSON and CSV.

Wall-clock timings never enter a report; they go to a sidecar file so two
runs with the same configuration write identical report bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

VERSION = "0.1.0"

# acceptance defaults; anything else marks a report as non-standard
DEFAULT_THRESHOLDS = {
    # fock_core
    "canonical_commutator": 1e-12,
    "number_factorization": 1e-12,
    # unitary flow
    "group_law": 1e-12,
    "inverse_is_adjoint": 1e-12,
    "unitarity": 1e-12,
    "position_shift_inverse": 1e-8,
    "position_shift": 1e-8,
    "generator_commutes": 1e-10,
    "number_conjugation": 1e-8,
    "exponential_methods": 1e-11,
    # similarity and pair
    "sylvester": 1e-10,
    "recurrence": 1e-12,
    "inverse_certificate": 1e-6,
    "deformed_commutator": 1e-6,
    "commutator_split": 1e-8,
    "similarity_conjugation": 1e-6,
    "recover_annihilation": 1e-8,
    "recover_creation": 1e-8,
    # bracket maps
    "q_commutator": 1e-9,
    "q_commutator_rearranged": 1e-9,
    "nonlinear_map": 1e-12,
    # position representation
    "indicial_roots": 1e-12,
    "dual_integrator": 1e-6,
    "infinity_pole_order": 0.5,
    "envelope_slope": 0.2,
    # dynamics
    "eom_A": 1e-6,
    "eom_B": 1e-6,
    "eom_A_order": 1.0,
    "eom_B_order": 1.0,
    "green_A": 1e-4,
    "green_B": 1e-4,
    "green_A_order": 3.0,
    "green_B_order": 3.0,
    "drift_gauge": 1e-8,
}


@dataclass(frozen=True)
class Row:
    identity: str
    block: int
    norm: str
    residual: float
    threshold: float
    relation: str = "<"

    @property
    def passed(self) -> bool:
        r, t = self.residual, self.threshold
        if not math.isfinite(r):
            return False
        return {"<": r < t, "<=": r <= t, ">=": r >= t}[self.relation]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def thresholds_with(overrides: dict | None) -> tuple[dict, bool]:
    """Merged thresholds and whether they differ from the acceptance defaults."""
    th = dict(DEFAULT_THRESHOLDS)
    changed = False
    for k, v in (overrides or {}).items():
        if k not in th:
            raise KeyError(f"unknown threshold {k!r}")
        if float(v) != th[k]:
            changed = True
        th[k] = float(v)
    return th, changed


def row(name, residual, thresholds, block=0, norm="max", relation="<") -> Row:
    return Row(name, int(block), norm, float(residual), float(thresholds[name]), relation)


def _clean(x):
    """Non-finite floats as strings so the output is strict JSON."""
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _clean(x.item())
    return x


def make_report(command: str, config: dict, rows, diagnostics=None,
                non_standard: bool = False, records=None) -> dict:
    rows = [r.as_dict() if isinstance(r, Row) else dict(r) for r in rows]
    doc = {
        "tool": "ncmap",
        "version": VERSION,
        "command": command,
        "config": config,
        "thresholds": "non-standard thresholds" if non_standard else "acceptance defaults",
        "rows": rows,
        "all_passed": all(r.get("passed", False) for r in rows),
        "diagnostics": diagnostics or {},
    }
    if records is not None:
        doc["records"] = records
    return _clean(doc)


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def to_csv(rows, columns=None) -> str:
    rows = [_clean(r.as_dict() if isinstance(r, Row) else r) for r in rows]
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


def write_report(report: dict, outdir, fmt: str = "json", name: str = "report") -> Path:
    """Write the report as JSON, or as CSV (rows) plus a JSON header file."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = outdir / f"{name}.json"
        path.write_text(to_json(report), encoding="utf-8")
        return path
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    path = outdir / f"{name}.csv"
    path.write_text(to_csv(report["rows"]), encoding="utf-8")
    head = {k: v for k, v in report.items() if k not in ("rows", "records")}
    (outdir / f"{name}.meta.json").write_text(to_json(head), encoding="utf-8")
    if report.get("records"):
        (outdir / f"{name}.records.csv").write_text(to_csv(report["records"]), encoding="utf-8")
    return path


def write_timings(timings: dict, outdir) -> Path:
    path = Path(outdir) / "timings.json"
    path.write_text(json.dumps({k: round(v, 6) for k, v in timings.items()}, indent=2,
                               sort_keys=True) + "\n", encoding="utf-8")
    return path


def summary_lines(report: dict) -> list[str]:
    out = []
    for r in report["rows"]:
        mark = "PASS" if r["passed"] else "FAIL"
        out.append(f"{mark} {r['identity']:<26} K={r['block']:<3} {r['norm']:<8} "
                   f"{r['residual']} {r['relation']} {r['threshold']}")
    return out
