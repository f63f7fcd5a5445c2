"""Pipeline configuration, artifact conventions, and stage orchestration.

Every stage writes artifacts into a run directory together with a JSON
sidecar carrying (config_hash, seed, version), so downstream stages and the
report aggregator can detect mixed-provenance inputs. Defaults reproduce the
benchmark settings; a JSON config file or CLI flags override them.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os

from pathlib import Path

import numpy as np

from . import __version__, dimred, sgns, synth, walks
from .classifiers import ClassifierSpec
from .embedding import EmbeddingMatrix
from .evaluation import kshot_evaluate, kshot_split, loo_evaluate, run_matrix
from .forceatlas2 import FA2Params, fa2_embedding
from .graph import InteractionGraph, LabelSet, read_label_file, write_edge_file

METHODS = ("relational", "deepwalk", "node2vec", "fa2")
REDUCERS = ("none", "pca", "tsne", "umap")
CLASSIFIERS = ("logreg", "gnb", "svm_linear", "svm_poly", "svm_rbf", "random_forest")
PROTOCOLS = ("loo", "1shot", "3shot")
FRAMEWORKS = ("binary", "multiparty")

DEFAULT_CONFIG = {
    "data": {"preset": "eus7-small", "base_rate": None, "hub_boost": None,
             "labeled_rate_boost": None, "decay": None},
    "method": {
        "name": "relational",
        "dims": 20,
        "walks_per_node": 10,
        "walk_length": 80,
        "window": 10,
        "p": 1.0,
        "q": 0.5,
        "negatives": 5,
        "initial_lr": 0.025,
        "epochs": 1,
        "fa2_iterations": 1000,
        "fa2_scaling": 2.0,
        "fa2_gravity": 1.0,
    },
    "reduce": {"name": "none", "perplexity": 30.0, "tsne_iterations": 1000,
               "n_neighbors": 15, "min_dist": 0.1, "umap_epochs": 200},
    "classifier": {"family": "svm_linear"},
    "protocol": "loo",
    "framework": "multiparty",
    "seed": 0,
    "workers": 0,  # 0 = take LEANINFER_WORKERS or 1
}


def resolve_config(overrides: dict | None = None, config_file=None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if config_file:
        with open(config_file, "r", encoding="utf-8") as f:
            _merge(cfg, json.load(f))
    if overrides:
        _merge(cfg, overrides)
    return cfg


def _merge(base: dict, extra: dict) -> None:
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _merge(base[key], val)
        elif val is not None:
            base[key] = val


def config_hash(cfg: dict) -> str:
    """Hash of the artifact lineage: dataset definition + global seed.

    Stage-specific knobs (classifier, protocol, reducer parameters) identify
    cells, not lineage; they live in filenames and sidecars instead, so
    reports from different classifiers on the same dataset aggregate cleanly
    while artifacts from different datasets or seeds refuse to mix.
    """
    lineage = {"data": cfg.get("data", {}), "seed": cfg.get("seed")}
    blob = json.dumps(lineage, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def effective_workers(cfg: dict) -> int:
    w = int(cfg.get("workers") or 0)
    if w < 1:
        w = int(os.environ.get("LEANINFER_WORKERS", "1"))
    return max(w, 1)


def _stamp(cfg: dict) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg["seed"], "version": __version__}


def write_sidecar(path: Path, cfg: dict, extra: dict | None = None) -> None:
    doc = _stamp(cfg)
    doc.update(extra or {})
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")


class StageError(RuntimeError):
    """A stage was invoked before its inputs exist."""


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise StageError(f"missing artifact {path.name}; run `{produced_by}` first")
    return path


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_synth(cfg: dict, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    data = cfg["data"]
    scfg = synth.preset(data["preset"], seed=cfg["seed"])
    fields = {}
    for knob in ("base_rate", "hub_boost", "labeled_rate_boost", "decay"):
        if data.get(knob) is not None:
            fields[knob] = float(data[knob])
    if fields:
        import dataclasses

        scfg = dataclasses.replace(scfg, **fields)
    graph, labels, anchors = synth.generate(scfg)
    write_edge_file(graph, out_dir / "edges.tsv")
    labels.save(out_dir / "labels.tsv")
    synth.save_anchors(anchors, out_dir / "anchors.tsv")
    graph.save(out_dir / "graph.bin")
    write_sidecar(out_dir / "dataset.json", cfg, {
        "n_users": graph.n,
        "total_weight": graph.total_weight,
        "labeled": len(labels.party_of),
        "parties": labels.parties,
        "preset": data["preset"],
    })
    return {"n_users": graph.n, "labeled": len(labels.party_of)}


def stage_ingest(cfg: dict, edges, labels_path, anchors_path, out_dir: Path) -> dict:
    from .graph import read_edge_file

    out_dir.mkdir(parents=True, exist_ok=True)
    graph = read_edge_file(edges)
    labels = read_label_file(labels_path, graph)
    graph.save(out_dir / "graph.bin")
    labels.save(out_dir / "labels.tsv")
    if anchors_path:
        anchors = synth.load_anchors(anchors_path)
        synth.save_anchors(anchors, out_dir / "anchors.tsv")
    write_sidecar(out_dir / "dataset.json", cfg, {
        "n_users": graph.n,
        "total_weight": graph.total_weight,
        "labeled": len(labels.party_of),
        "parties": labels.parties,
        "dropped_labels": labels.dropped,
    })
    return {"n_users": graph.n, "labeled": len(labels.party_of), "dropped": len(labels.dropped)}


def load_dataset(out_dir: Path):
    graph = InteractionGraph.load(_require(out_dir / "graph.bin", "synth or ingest"))
    labels = read_label_file(_require(out_dir / "labels.tsv", "synth or ingest"), graph)
    anchors_file = out_dir / "anchors.tsv"
    anchors = synth.load_anchors(anchors_file) if anchors_file.exists() else {}
    return graph, labels, anchors


def build_embedding(graph: InteractionGraph, method: str, mcfg: dict, seed: int,
                    workers: int = 1) -> EmbeddingMatrix:
    if method == "relational":
        pairs = sgns.pairs_from_interactions(graph, seed=seed)
        emb = sgns.train(pairs, _sgns_config(mcfg, seed, workers), ids=graph.ids)
    elif method in ("deepwalk", "node2vec"):
        wcfg = walks.WalkConfig(
            walks_per_node=int(mcfg["walks_per_node"]),
            walk_length=int(mcfg["walk_length"]),
            p=float(mcfg["p"]) if method == "node2vec" else 1.0,
            q=float(mcfg["q"]) if method == "node2vec" else 1.0,
            seed=seed,
        )
        corpus = walks.uniform_walks(graph, wcfg) if method == "deepwalk" else walks.biased_walks(graph, wcfg)
        pairs = sgns.pairs_from_walks(corpus, int(mcfg["window"]))
        emb = sgns.train(pairs, _sgns_config(mcfg, seed, workers), ids=graph.ids)
    elif method == "fa2":
        params = FA2Params(scaling=float(mcfg["fa2_scaling"]), gravity=float(mcfg["fa2_gravity"]),
                           seed=seed)
        emb = fa2_embedding(graph, int(mcfg["fa2_iterations"]), params)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    emb.meta["method"] = method
    return emb


def _sgns_config(mcfg: dict, seed: int, workers: int) -> sgns.SgnsConfig:
    return sgns.SgnsConfig(
        dims=int(mcfg["dims"]),
        negatives=int(mcfg["negatives"]),
        initial_lr=float(mcfg["initial_lr"]),
        epochs=int(mcfg["epochs"]),
        window=int(mcfg["window"]),
        seed=seed,
        workers=workers,
    )


def stage_embed(cfg: dict, out_dir: Path, method: str | None = None) -> Path:
    graph, _, _ = load_dataset(out_dir)
    method = method or cfg["method"]["name"]
    emb = build_embedding(graph, method, cfg["method"], cfg["seed"])
    emb.save_text(out_dir / f"emb_{method}.txt")
    emb.save(out_dir / f"emb_{method}.bin")
    write_sidecar(out_dir / f"emb_{method}.json", cfg, {"method": method, "dims": emb.dims})
    return out_dir / f"emb_{method}.txt"


def labeled_features(emb: EmbeddingMatrix, labels: LabelSet):
    users = sorted(labels.party_of)
    return users, emb.rows_for(users)


def stage_reduce(cfg: dict, out_dir: Path, method: str | None = None,
                 reducer: str | None = None) -> Path:
    method = method or cfg["method"]["name"]
    reducer = reducer or cfg["reduce"]["name"]
    if reducer not in REDUCERS or reducer == "none":
        raise ValueError(f"reducer must be one of {[r for r in REDUCERS if r != 'none']}")
    _, labels, _ = load_dataset(out_dir)
    emb_path = _require(out_dir / f"emb_{method}.bin", f"embed --method {method}")
    emb = EmbeddingMatrix.load(emb_path)
    users, X = labeled_features(emb, labels)
    rcfg = cfg["reduce"]
    if reducer == "pca":
        red = dimred.pca(X, 2, source=method)
    elif reducer == "tsne":
        red = dimred.tsne(X, perplexity=float(rcfg["perplexity"]),
                          iterations=int(rcfg["tsne_iterations"]), seed=cfg["seed"],
                          source=method)
    else:
        red = dimred.umap(X, n_neighbors=int(rcfg["n_neighbors"]),
                          min_dist=float(rcfg["min_dist"]), epochs=int(rcfg["umap_epochs"]),
                          seed=cfg["seed"], source=method)
    out = red.to_embedding(users)
    out.save_text(out_dir / f"red_{method}_{reducer}.txt")
    out.save(out_dir / f"red_{method}_{reducer}.bin")
    write_sidecar(out_dir / f"red_{method}_{reducer}.json", cfg,
                  {"method": method, "reducer": reducer, "params": out.meta.get("params", {})})
    return out_dir / f"red_{method}_{reducer}.txt"


def _features_for_eval(cfg: dict, out_dir: Path, labels: LabelSet, method: str, reducer: str):
    users = sorted(labels.party_of)
    if reducer and reducer != "none":
        path = _require(out_dir / f"red_{method}_{reducer}.bin",
                        f"reduce --method {method} --reducer {reducer}")
        emb = EmbeddingMatrix.load(path)
        return users, emb.rows_for(users)
    path = _require(out_dir / f"emb_{method}.bin", f"embed --method {method}")
    emb = EmbeddingMatrix.load(path)
    return users, emb.rows_for(users)


def stage_eval(cfg: dict, out_dir: Path, method: str | None = None,
               classifier: str | None = None, framework: str | None = None,
               protocol: str | None = None, reducer: str | None = None) -> Path:
    _, labels, anchors = load_dataset(out_dir)
    method = method or cfg["method"]["name"]
    classifier = classifier or cfg["classifier"]["family"]
    framework = framework or cfg["framework"]
    protocol = protocol or cfg["protocol"]
    reducer = reducer if reducer is not None else cfg["reduce"]["name"]
    users, X = _features_for_eval(cfg, out_dir, labels, method, reducer)
    spec = ClassifierSpec(classifier, seed=cfg["seed"])
    if framework == "binary":
        labmap = {u: labels.wing_of[labels.party_of[u]] for u in users}
    else:
        labmap = {u: labels.party_of[u] for u in users}
    chash = config_hash(cfg)
    meta = {"method": method, "reducer": reducer}
    if protocol == "loo":
        rep = loo_evaluate(X, [labmap[u] for u in users], spec, framework=framework,
                           seed=cfg["seed"], workers=effective_workers(cfg),
                           config_hash=chash, meta=meta)
    else:
        k = int(protocol[0])
        use_anchors = anchors
        if framework == "binary":
            by_wing: dict[str, list] = {}
            for p in sorted(use_anchors):
                w = labels.wing_of.get(p)
                if w is not None:
                    by_wing.setdefault(w, []).append(list(use_anchors[p]))
            use_anchors = {w: [u for tier in zip(*lists) for u in tier]
                           for w, lists in by_wing.items()}
        manifest = kshot_split(labmap, k, use_anchors, seed=cfg["seed"])
        rep = kshot_evaluate(X, users, labmap, manifest, spec, framework=framework,
                             config_hash=chash, meta=meta)
    tag = f"{method}+{reducer}" if reducer and reducer != "none" else method
    name = f"report_{tag}_{classifier}_{framework}_{protocol}.json"
    rep.save(out_dir / name)
    return out_dir / name


def stage_eval_matrix(cfg: dict, out_dir: Path, methods=METHODS,
                      classifiers=CLASSIFIERS, frameworks=FRAMEWORKS) -> dict:
    """Evaluate the full cross-product, reusing on-disk embeddings."""
    _, labels, anchors = load_dataset(out_dir)
    users = sorted(labels.party_of)
    feats = {}
    for m in methods:
        try:
            _, X = _features_for_eval(cfg, out_dir, labels, m, "none")
            feats[m] = X
        except StageError as exc:
            feats[m] = exc
    protocol = cfg["protocol"]
    specs = {c: ClassifierSpec(c, seed=cfg["seed"]) for c in classifiers}
    result = run_matrix(feats, users, labels, specs, frameworks=frameworks,
                        protocol="loo" if protocol == "loo" else "kshot",
                        anchors=anchors, k=1 if protocol == "1shot" else 3,
                        seed=cfg["seed"], workers=effective_workers(cfg),
                        config_hash=config_hash(cfg))
    for (m, c, fw), rep in sorted(result.reports.items()):
        rep.meta["reducer"] = "none"
        rep.save(out_dir / f"report_{m}_{c}_{fw}_{protocol}.json")
    for fw in frameworks:
        csv = result.to_csv(fw, list(methods), list(classifiers))
        with open(out_dir / f"summary_{fw}_{protocol}.csv", "w", encoding="utf-8") as f:
            f.write(csv)
    return {"cells": len(result.reports), "errors": dict((str(k), v) for k, v in result.errors.items())}


def stage_report(cfg: dict, out_dir: Path, force: bool = False) -> dict:
    """Aggregate reports into CSV summaries and emit SVG figures."""
    import re

    from .plots import confusion_svg, scatter_svg

    _, labels, _ = load_dataset(out_dir)
    users = sorted(labels.party_of)
    party = {u: labels.party_of[u] for u in users}
    expected_hash = config_hash(cfg)
    emitted = {"figures": [], "tables": [], "skipped": []}

    report_files = sorted(out_dir.glob("report_*.json"))
    by_cell = {}
    for path in report_files:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        if doc.get("config_hash") != expected_hash and not force:
            emitted["skipped"].append(path.name)
            continue
        mt = re.match(r"report_(.+)_([a-z_]+)_(binary|multiparty)_(\w+)\.json", path.name)
        if not mt:
            continue
        by_cell[(mt.group(1), mt.group(2), mt.group(3), mt.group(4))] = doc
        cm = np.array(doc["confusion"])
        fig = out_dir / path.name.replace("report_", "confusion_").replace(".json", ".svg")
        title = f"{mt.group(1)} / {mt.group(2)} / {mt.group(3)} / {mt.group(4)}"
        with open(fig, "w", encoding="utf-8") as f:
            f.write(confusion_svg(cm, doc["classes"], title))
        emitted["figures"].append(fig.name)

    if by_cell:
        protos = sorted({k[3] for k in by_cell})
        for proto in protos:
            for fw in FRAMEWORKS:
                cells = {k: v for k, v in by_cell.items() if k[2] == fw and k[3] == proto}
                if not cells:
                    continue
                tags = sorted({k[0] for k in cells})
                clfs = sorted({k[1] for k in cells})
                lines = ["classifier," + ",".join(tags)]
                for c in clfs:
                    row = [c]
                    for t in tags:
                        doc = cells.get((t, c, fw, proto))
                        row.append(f"{doc['f1_macro'] * 100:.1f}" if doc else "")
                    lines.append(",".join(row))
                name = f"summary_{fw}_{proto}.csv"
                with open(out_dir / name, "w", encoding="utf-8") as f:
                    f.write("\n".join(lines) + "\n")
                emitted["tables"].append(name)

    for path in sorted(out_dir.glob("red_*.bin")) + sorted(out_dir.glob("emb_fa2.bin")):
        emb = EmbeddingMatrix.load(path)
        if emb.dims != 2:
            continue
        rows = [u for u in users if u in set(emb.ids)]
        pts = emb.rows_for(rows)
        fig = out_dir / (path.stem + "_scatter.svg")
        with open(fig, "w", encoding="utf-8") as f:
            f.write(scatter_svg(pts, [party[u] for u in rows], path.stem))
        emitted["figures"].append(fig.name)
    return emitted
