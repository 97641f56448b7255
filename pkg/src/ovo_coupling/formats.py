"""File formats: dataset CSV, suite/model/calibration/prediction JSON.

Pair keys are the string ``"i,j"`` with zero-based ``i < j``. Floats are
written with Python's shortest round-trip repr, so a saved file reloads to
bitwise-identical values. All writes go through ``write_json_atomic``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import tempfile

import numpy as np

from .classifiers import (
    BinaryLinearClassifier,
    ClassifierSuite,
    MultiOutputModel,
    Provenance,
)
from .core import CalibrationParams, ClassSet, LabeledDataset, ValidationError, pair_indices

_FEATURE = re.compile(r"^f(\d+)$")


def pair_key(pr) -> str:
    return f"{pr[0]},{pr[1]}"


def parse_pair_key(key: str) -> tuple[int, int]:
    try:
        i, j = (int(t) for t in key.split(","))
    except ValueError:
        raise ValidationError(f"bad pair key {key!r}; expected 'i,j'") from None
    return i, j


def write_text_atomic(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path, obj) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2, allow_nan=False) + "\n")


def read_json(path, what="file"):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} {path}: not valid JSON ({exc})") from None


# -- datasets -----------------------------------------------------------------

def read_dataset(path, classes: ClassSet | None = None, require_labels: bool = True) -> LabeledDataset:
    """Read a CSV with columns ``f0..f{d-1}``, optional ``id``, and ``label`` or ``labels``.

    ``labels`` holds semicolon-separated class names. Without ``classes``
    the class set is the sorted set of names present in the file.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    feats = sorted((int(m.group(1)), h) for h in header if (m := _FEATURE.match(h)))
    if not feats:
        raise ValidationError(f"{path}: no feature columns (expected f0, f1, ...)")
    if [k for k, _ in feats] != list(range(len(feats))):
        raise ValidationError(f"{path}: feature columns must be f0..f{len(feats) - 1} without gaps")
    label_col = "label" if "label" in header else "labels" if "labels" in header else None
    if label_col is None and require_labels:
        raise ValidationError(f"{path}: missing 'label' or 'labels' column")

    X = np.empty((len(rows), len(feats)))
    names = []
    for n, row in enumerate(rows):
        for c, (_, h) in enumerate(feats):
            try:
                X[n, c] = float(row[h])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}: row {n}, column {h}: not a number: {row[h]!r}") from None
        if label_col is not None:
            raw = (row[label_col] or "").strip()
            parts = [s.strip() for s in raw.split(";")] if label_col == "labels" else [raw]
            parts = [s for s in parts if s]
            if not parts and require_labels:
                raise ValidationError(f"{path}: row {n}: empty {label_col}")
            names.append(parts)
        else:
            names.append([])
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{path}: non-finite feature values")
    if classes is None:
        classes = ClassSet(tuple(sorted({nm for ps in names for nm in ps})))
    try:
        labels = [frozenset(classes.index(nm) for nm in ps) for ps in names]
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    ids = [row["id"] for row in rows] if "id" in header else [str(n) for n in range(len(rows))]
    return LabeledDataset(X, labels, classes, ids)


def write_dataset(path, ds: LabeledDataset) -> None:
    multi = not ds.is_single_label
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id"] + [f"f{c}" for c in range(ds.dim)] + ["labels" if multi else "label"])
    ids = ds.ids or [str(n) for n in range(ds.n)]
    for n in range(ds.n):
        names = ";".join(ds.class_set.labels[k] for k in sorted(ds.labels[n]))
        w.writerow([ids[n]] + [repr(float(v)) for v in ds.features[n]] + [names])
    write_text_atomic(path, buf.getvalue())


# -- models ---------------------------------------------------------------------

def suite_to_json(suite: ClassifierSuite) -> dict:
    pairs = {}
    for pr in pair_indices(suite.K):
        clf = suite.scorers[pr]
        n_i, n_j = suite.pair_counts.get(pr, (0, 0))
        pairs[pair_key(pr)] = {"weights": [float(v) for v in clf.weights], "bias": clf.bias,
                               "n_i": int(n_i), "n_j": int(n_j)}
    return {"kind": "ovo_suite", "classes": list(suite.classes.labels),
            "provenance": suite.provenance.value, "pairs": pairs}


def model_to_json(model: MultiOutputModel, classes: ClassSet) -> dict:
    return {"kind": "ova_model", "classes": list(classes.labels),
            "W": [[float(v) for v in row] for row in model.W], "b": [float(v) for v in model.b]}


def load_model(path):
    """Return ``("suite", ClassifierSuite)`` or ``("ova", (MultiOutputModel, ClassSet))``."""
    doc = read_json(path, "model file")
    kind = doc.get("kind") if isinstance(doc, dict) else None
    try:
        classes = ClassSet(tuple(doc["classes"]))
        if kind == "ovo_suite":
            scorers, counts = {}, {}
            for key, rec in doc["pairs"].items():
                pr = parse_pair_key(key)
                scorers[pr] = BinaryLinearClassifier(rec["weights"], rec["bias"], pr)
                counts[pr] = (int(rec.get("n_i", 0)), int(rec.get("n_j", 0)))
            dims = {c.weights.size for c in scorers.values()}
            if len(dims) != 1:
                raise ValidationError(f"model file {path}: pair weights differ in length")
            return "suite", ClassifierSuite(classes, scorers, Provenance(doc["provenance"]), counts)
        if kind == "ova_model":
            model = MultiOutputModel(doc["W"], doc["b"])
            if model.K != classes.K:
                raise ValidationError(f"model file {path}: {model.K} nodes for {classes.K} classes")
            return "ova", (model, classes)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"model file {path}: missing or malformed field {exc}") from None
    raise ValidationError(f"model file {path}: unknown kind {kind!r}")


# -- calibration ----------------------------------------------------------------

def calibration_to_json(params: dict) -> dict:
    return {pair_key(pr): {"eta": p.eta, "tau": p.tau, "iterations": p.iterations,
                           "converged": p.converged, "final_nll": p.final_nll}
            for pr, p in sorted(params.items())}


def load_calibration(path) -> dict:
    doc = read_json(path, "calibration file")
    if not isinstance(doc, dict):
        raise ValidationError(f"calibration file {path}: expected an object keyed by 'i,j'")
    out = {}
    for key, rec in doc.items():
        pr = parse_pair_key(key)
        try:
            out[pr] = CalibrationParams(float(rec["eta"]), float(rec["tau"]), pr,
                                        int(rec.get("iterations", 0)),
                                        bool(rec.get("converged", True)),
                                        float(rec.get("final_nll", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"calibration file {path}: pair {key!r}: bad field {exc}") from None
    return out


# -- predictions ----------------------------------------------------------------

def predictions_to_json(preds, classes: ClassSet) -> dict:
    out = []
    for pr in preds:
        rec = {"id": pr.id, "p": [float(v) for v in pr.p], "label": classes.labels[pr.label],
               "votes": None if pr.votes is None else [int(v) for v in pr.votes],
               "method": pr.method}
        if pr.labels is not None:
            rec["labels"] = [classes.labels[k] for k in sorted(pr.labels)]
        out.append(rec)
    return {"kind": "predictions", "classes": list(classes.labels), "predictions": out}


def load_predictions(path):
    """Return ``(classes, ids, label_sets, multi_label)`` from a predictions file."""
    doc = read_json(path, "predictions file")
    try:
        classes = ClassSet(tuple(doc["classes"]))
        recs = doc["predictions"]
        multi = any("labels" in r for r in recs)
        ids, sets = [], []
        for n, r in enumerate(recs):
            names = r["labels"] if multi else [r["label"]]
            ids.append(str(r["id"]))
            sets.append(frozenset(classes.index(nm) for nm in names))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"predictions file {path}: missing or malformed field {exc}") from None
    return classes, ids, sets, multi
