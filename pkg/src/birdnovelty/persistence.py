"""On-disk formats: versioned model JSON, CSV/JSON exports, atomic writes.

Floats go through ``json``/``repr``, which emit the shortest decimal that
round-trips, so reading a written model reproduces every number exactly.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .detector import DetectionTrace
from .evaluation import ExperimentSummary, SummaryCell
from .features import FEATURE_NAMES, FeatureSet, Standardizer
from .gmm import GmmModel
from .trainer import SpeciesModel, training_report

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


def atomic_write(path, data) -> Path:
    """Write text or bytes via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def creation_stamp() -> str | None:
    """UTC time from ``SOURCE_DATE_EPOCH``, or None so reruns stay byte-identical."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def _header(provenance: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "tool_version": __version__, **provenance}


def model_to_dict(model: SpeciesModel) -> dict:
    g = model.gmm
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "species_id": model.species_id,
        "feature_set": list(model.feature_set.indices),
        "feature_names": model.feature_set.names,
        "standardizer": {
            "offset": model.standardizer.offset.tolist(),
            "scale": model.standardizer.scale.tolist(),
        },
        "gmm": {
            "K": g.K,
            "d": g.d,
            "weights": g.weights.tolist(),
            "means": g.means.tolist(),
            "covariances": g.covariances.tolist(),
            "train_log_likelihood": g.train_log_likelihood,
            "n_iter": g.n_iter,
            "converged": g.converged,
        },
        "mdl_by_k": {str(k): v for k, v in sorted(model.mdl_by_k.items())},
        "best_ll_by_k": {str(k): v for k, v in sorted(model.best_ll_by_k.items())},
        "provenance": model.provenance,
    }


def model_from_dict(d: dict) -> SpeciesModel:
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported model schema_version {version!r} (expected {SCHEMA_VERSION})")
    g = d["gmm"]
    gmm = GmmModel(
        weights=np.array(g["weights"]),
        means=np.array(g["means"]),
        covariances=np.array(g["covariances"]),
        train_log_likelihood=g["train_log_likelihood"],
        n_iter=g["n_iter"],
        converged=g["converged"],
    )
    return SpeciesModel(
        species_id=d["species_id"],
        feature_set=FeatureSet(tuple(d["feature_set"])),
        standardizer=Standardizer(np.array(d["standardizer"]["offset"]), np.array(d["standardizer"]["scale"])),
        gmm=gmm,
        mdl_by_k={int(k): v for k, v in d["mdl_by_k"].items()},
        best_ll_by_k={int(k): v for k, v in d.get("best_ll_by_k", {}).items()},
        provenance=d.get("provenance", {}),
    )


def write_model(model: SpeciesModel, path) -> Path:
    return atomic_write(path, dumps(model_to_dict(model)))


def read_model(path) -> SpeciesModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def model_filename(model: SpeciesModel) -> str:
    return f"{model.species_id}__f{'-'.join(map(str, model.feature_set.indices))}.model.json"


def csv_text(rows, comments: dict | None = None) -> str:
    buf = io.StringIO()
    if comments:
        for key, value in comments.items():
            buf.write(f"# {key}: {json.dumps(value)}\n")
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def write_feature_csv(path, features: np.ndarray, frame_index: np.ndarray, frame_hop_s: float) -> Path:
    rows = [["frame_index", "time_s", *FEATURE_NAMES]]
    for i, row in zip(frame_index, features):
        rows.append([int(i), repr(float(i * frame_hop_s)), *(repr(float(v)) for v in row)])
    return atomic_write(path, csv_text(rows))


def write_training_report(model: SpeciesModel, stem) -> tuple[Path, Path]:
    report = training_report(model)
    rows = [["K", "mdl", "best_log_likelihood", "selected"]]
    rows += [[r["K"], repr(r["mdl"]), repr(r["best_log_likelihood"]), int(r["selected"])] for r in report]
    stem = Path(stem)
    meta = _header({"model_id": model.model_id, "selected_k": model.selected_k})
    csv_path = atomic_write(stem.with_suffix(".report.csv"), csv_text(rows, meta))
    json_path = atomic_write(stem.with_suffix(".report.json"), dumps({**meta, "rows": report}))
    return csv_path, json_path


def write_trace(trace: DetectionTrace, path, provenance: dict | None = None, as_json: bool = False) -> Path:
    meta = _header({
        "model_id": trace.model_id,
        "window_s": trace.window_s,
        "hop_s": trace.hop_s,
        **(provenance or {}),
    })
    if as_json:
        return atomic_write(path, dumps({**meta, "times_s": trace.times_s.tolist(),
                                         "scores": trace.scores.tolist()}))
    rows = [["time_s", "score"]]
    rows += [[repr(float(t)), repr(float(s))] for t, s in zip(trace.times_s, trace.scores)]
    return atomic_write(path, csv_text(rows, meta))


def summary_to_dict(summary: ExperimentSummary, provenance: dict | None = None) -> dict:
    return {
        **_header({**summary.provenance, **(provenance or {})}),
        "conditions": summary.conditions,
        "cells": [dict(c.__dict__) for c in summary.cells],
    }


def summary_from_dict(d: dict) -> ExperimentSummary:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported summary schema_version {d.get('schema_version')!r}")
    prov = {k: v for k, v in d.items() if k not in ("conditions", "cells")}
    return ExperimentSummary(cells=[SummaryCell(**c) for c in d["cells"]],
                             conditions=list(d["conditions"]), provenance=prov)


def table_text(summary: ExperimentSummary, provenance: dict | None = None) -> str:
    """The summary table as CSV preceded by ``# key: value`` provenance lines."""
    meta = {k: v for k, v in summary_to_dict(summary, provenance).items() if k != "cells"}
    return csv_text(summary.table_rows(), meta)


def write_summary(summary: ExperimentSummary, out_dir, provenance: dict | None = None) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    json_path = atomic_write(out_dir / "summary.json", dumps(summary_to_dict(summary, provenance)))
    csv_path = atomic_write(out_dir / "table.csv", table_text(summary, provenance))
    return json_path, csv_path


def read_summary(path) -> ExperimentSummary:
    with open(path, encoding="utf-8") as fh:
        return summary_from_dict(json.load(fh))
