"""Evaluation protocols: leave-one-out and k-shot splits, F1-macro scoring,
confusion matrices, and the (method x classifier x framework) run matrix.

Per-fold seeds derive from the global seed and fold index, so fold-level
parallelism cannot change any result. Per-class F1 treats 0/0 as 0.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import derive_seed
from .classifiers import ClassifierSpec, decision_scores, fit, predict
from .graph import LabelSet, coarsen_labels


@dataclass
class SplitManifest:
    protocol: str  # "loo" | "kshot"
    k: int
    train_by_class: dict
    test_users: list
    seed: int

    def train_users(self) -> list:
        out = []
        for cls in sorted(self.train_by_class):
            out.extend(self.train_by_class[cls])
        return out


@dataclass
class EvaluationReport:
    protocol: str
    framework: str
    classes: list
    f1_macro: float
    per_class: dict
    confusion: np.ndarray  # rows = true, cols = predicted
    seed: int
    config_hash: str = ""
    wall_time_s: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "protocol": self.protocol,
            "framework": self.framework,
            "classes": list(self.classes),
            "f1_macro": self.f1_macro,
            "per_class": self.per_class,
            "confusion": self.confusion.astype(int).tolist(),
            "seed": self.seed,
            "config_hash": self.config_hash,
            "meta": self.meta,
        }
        if include_timing:
            doc["timing"] = {"wall_time_s": self.wall_time_s, "timestamp": time.time()}
        return doc

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2)

    def save(self, path, include_timing: bool = True) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json(include_timing))
            f.write("\n")


def confusion_matrix(y_true, y_pred, class_list) -> np.ndarray:
    index = {c: i for i, c in enumerate(class_list)}
    m = np.zeros((len(class_list), len(class_list)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if p in index:
            m[index[t], index[p]] += 1
    return m


def per_class_scores(y_true, y_pred, class_list) -> dict:
    """Precision/recall/F1 per class; undefined ratios (0/0) score 0."""
    cm = confusion_matrix(y_true, y_pred, class_list)
    out = {}
    for i, c in enumerate(class_list):
        tp = cm[i, i]
        fp = cm[:, i].sum() - tp
        fn = cm[i, :].sum() - tp
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        out[c] = {"precision": float(prec), "recall": float(rec), "f1": float(f1)}
    return out


def f1_macro(y_true, y_pred, class_list=None) -> float:
    """Unweighted mean of per-class F1 over class_list (defaults to the
    classes present in y_true)."""
    if len(y_true) == 0 or len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred must be equal-length and non-empty")
    if class_list is None:
        class_list = sorted(set(y_true))
    scores = per_class_scores(y_true, y_pred, class_list)
    return float(np.mean([scores[c]["f1"] for c in class_list]))


def _finish_report(protocol, framework, y_true, y_pred, classes, seed, t0, meta,
                   config_hash="") -> EvaluationReport:
    cm = confusion_matrix(y_true, y_pred, classes)
    pcs = per_class_scores(y_true, y_pred, classes)
    return EvaluationReport(
        protocol=protocol,
        framework=framework,
        classes=list(classes),
        f1_macro=float(np.mean([pcs[c]["f1"] for c in classes])),
        per_class=pcs,
        confusion=cm,
        seed=seed,
        config_hash=config_hash,
        wall_time_s=time.perf_counter() - t0,
        meta=meta,
    )


def loo_evaluate(
    X: np.ndarray,
    y,
    spec: ClassifierSpec,
    framework: str = "multiparty",
    seed: int = 0,
    workers: int = 1,
    config_hash: str = "",
    meta: dict | None = None,
) -> EvaluationReport:
    """Leave-one-out: train n models, each predicting the single held-out user."""
    t0 = time.perf_counter()
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    y = list(y)
    classes = sorted(set(y))
    if len(classes) < 2:
        raise ValueError("need at least 2 classes for evaluation")
    counts = {c: y.count(c) for c in classes}
    singles = [c for c, v in counts.items() if v < 2]
    if singles:
        warnings.warn(f"classes with a single member are unlearnable under LOO: {singles}")

    warm = None
    if spec.family == "logreg":
        # warm-start folds from the full-data optimum; the objective is
        # strictly convex so this changes speed, not the solution
        warm_full = fit(spec, X, y)
        if warm_full.family == "logreg":
            warm = warm_full.params["weights"]

    mask = np.ones(n, dtype=bool)

    def run_fold(i: int):
        mask_i = mask.copy()
        mask_i[i] = False
        yi = [y[t] for t in range(n) if t != i]
        fold_spec = replace(spec, seed=derive_seed(seed, i))
        if warm is not None and len(set(yi)) == len(classes):
            model = fit(fold_spec, X[mask_i], yi, warm_start=warm)
        else:
            model = fit(fold_spec, X[mask_i], yi)
        return predict(model, X[i : i + 1])[0]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # single-class folds already warned above
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                preds = list(pool.map(run_fold, range(n)))
        else:
            preds = [run_fold(i) for i in range(n)]

    meta = dict(meta or {})
    meta.update({"classifier": spec.family, "n_models": n})
    return _finish_report("loo", framework, y, preds, classes, seed, t0, meta, config_hash)


def kshot_split(labels: dict, k: int, anchors: dict, seed: int = 0) -> SplitManifest:
    """Training set = first k designated anchors per class; test = the rest.

    ``labels`` maps user -> class; ``anchors`` maps class -> ordered anchor
    user list (most referential first).
    """
    classes = sorted(set(labels.values()))
    train_by_class = {}
    seen = {}
    for cls in classes:
        cand = list(anchors.get(cls, []))
        if len(cand) < k:
            raise ValueError(f"class {cls!r} has {len(cand)} designated anchors, needs {k}")
        chosen = cand[:k]
        for u in chosen:
            if labels.get(u) != cls:
                raise ValueError(
                    f"anchor {u!r} designated for {cls!r} but labeled {labels.get(u)!r}"
                )
            if u in seen:
                raise ValueError(f"anchor {u!r} designated for both {seen[u]!r} and {cls!r}")
            seen[u] = cls
        train_by_class[cls] = chosen
    train_set = set(seen)
    test_users = [u for u in sorted(labels) if u not in train_set]
    return SplitManifest("kshot", k, train_by_class, test_users, seed)


def kshot_evaluate(
    features: np.ndarray,
    users: list,
    labels: dict,
    manifest: SplitManifest,
    spec: ClassifierSpec,
    framework: str = "multiparty",
    config_hash: str = "",
    meta: dict | None = None,
) -> EvaluationReport:
    """Train once on the manifest's anchors, score every remaining labeled user."""
    t0 = time.perf_counter()
    row = {u: i for i, u in enumerate(users)}
    missing = [u for u in manifest.train_users() + list(manifest.test_users) if u not in row]
    if missing:
        raise ValueError(f"{len(missing)} split users missing from feature rows, e.g. {missing[:3]}")
    train_users = manifest.train_users()
    Xtr = features[[row[u] for u in train_users]]
    ytr = [labels[u] for u in train_users]
    Xte = features[[row[u] for u in manifest.test_users]]
    yte = [labels[u] for u in manifest.test_users]
    classes = sorted(set(labels.values()))
    model = fit(replace(spec, seed=derive_seed(manifest.seed, 1)), Xtr, ytr)
    preds = predict(model, Xte)
    meta = dict(meta or {})
    meta.update({"classifier": spec.family, "k": manifest.k,
                 "train_size": len(train_users), "test_size": len(yte)})
    return _finish_report(f"{manifest.k}shot", framework, yte, preds, classes,
                          manifest.seed, t0, meta, config_hash)


@dataclass
class MatrixResult:
    reports: dict  # (method, classifier, framework) -> EvaluationReport
    errors: dict   # (method, classifier, framework) -> str

    def to_csv(self, framework: str, methods: list, classifiers: list) -> str:
        lines = ["classifier," + ",".join(methods)]
        for clf in classifiers:
            cells = []
            for m in methods:
                rep = self.reports.get((m, clf, framework))
                cells.append(f"{rep.f1_macro * 100:.1f}" if rep else "ERR")
            lines.append(clf + "," + ",".join(cells))
        return "\n".join(lines) + "\n"


def run_matrix(
    features_by_method: dict,
    users: list,
    label_set: LabelSet,
    specs: dict,
    frameworks=("binary", "multiparty"),
    protocol: str = "loo",
    anchors: dict | None = None,
    k: int = 1,
    seed: int = 0,
    workers: int = 1,
    config_hash: str = "",
) -> MatrixResult:
    """Cross-product evaluation over methods x classifiers x frameworks.

    ``features_by_method`` maps method name -> feature matrix aligned to
    ``users`` (or an Exception recorded during representation building, which
    becomes a per-cell error without aborting the run).
    """
    party = {u: label_set.party_of[u] for u in users}
    wing = {u: w for u, w in coarsen_labels(label_set).items() if u in party}
    labels_for = {"multiparty": party, "binary": wing}
    anchors_for = {"multiparty": anchors or {}}
    if anchors:
        # binary anchors: round-robin over the wing's party anchor lists so
        # k-shot training stays anchored to designated hubs in both frameworks
        by_wing = {}
        for p in sorted(anchors):
            w = label_set.wing_of.get(p)
            if w is not None:
                by_wing.setdefault(w, []).append(list(anchors[p]))
        anchors_for["binary"] = {
            w: [u for tier in zip(*lists) for u in tier]
            for w, lists in by_wing.items()
        }
    reports = {}
    errors = {}
    for method, feats in features_by_method.items():
        for clf_name, spec in specs.items():
            for fw in frameworks:
                key = (method, clf_name, fw)
                if isinstance(feats, Exception):
                    errors[key] = f"representation failed: {feats}"
                    continue
                labels = labels_for[fw]
                meta = {"method": method}
                try:
                    if protocol == "loo":
                        rep = loo_evaluate(
                            feats, [labels[u] for u in users], spec, framework=fw,
                            seed=seed, workers=workers, config_hash=config_hash, meta=meta,
                        )
                    else:
                        manifest = kshot_split(labels, k, anchors_for.get(fw, {}), seed)
                        rep = kshot_evaluate(feats, users, labels, manifest, spec,
                                             framework=fw, config_hash=config_hash, meta=meta)
                    reports[key] = rep
                except Exception as exc:  # per-cell failure, run continues
                    errors[key] = str(exc)
    return MatrixResult(reports, errors)
