"""Readers and writers for the on-disk artifacts.

Datasets travel as a CSV of `name.k` columns (one per variable dimension)
plus a sidecar metadata JSON describing each variable; graphs, discovery
results, and reports are JSON. Files are UTF-8 with LF line endings, JSON
keys are sorted, and floats are written with shortest round-trip repr, so a
rerun with the same inputs produces byte-identical output.
"""

import csv
import json

import numpy as np

from .data import Dataset, Variable
from .graphs import Cpdag, Dag, consistent_extension


def dump_json(path, obj):
    text = json.dumps(obj, sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dataset_header(dataset):
    names = []
    for v in dataset.variables:
        names.extend(f"{v.name}.{k}" for k in range(v.dim))
    return names


def write_dataset(csv_path, meta_path, dataset):
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset_header(dataset))
        for row in dataset.values:
            writer.writerow([repr(float(x)) for x in row])
    meta = {
        "n": dataset.n,
        "variables": [
            {
                "name": v.name,
                "dim": v.dim,
                "type": "discrete" if v.discrete else "continuous",
                "levels": list(v.levels) if v.levels is not None else None,
            }
            for v in dataset.variables
        ],
    }
    dump_json(meta_path, meta)


def read_dataset(csv_path, meta_path):
    meta = load_json(meta_path)
    variables = []
    for entry in meta["variables"]:
        levels = entry.get("levels")
        variables.append(
            Variable(
                entry["name"],
                dim=int(entry["dim"]),
                discrete=entry["type"] == "discrete",
                levels=tuple(levels) if levels is not None else None,
            )
        )
    with open(csv_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [[float(x) for x in row] for row in reader]
    dataset = Dataset(variables, np.array(rows, dtype=float))
    expected = dataset_header(dataset)
    if header != expected:
        raise ValueError(
            f"dataset columns {header} do not match metadata {expected}"
        )
    if meta.get("n") != dataset.n:
        raise ValueError(
            f"metadata reports n={meta.get('n')} but CSV has {dataset.n} rows"
        )
    return dataset


def graph_to_obj(graph):
    """JSON-ready dict for a Dag or Cpdag; Dags have no undirected part."""
    nodes = list(graph.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    if isinstance(graph, Dag):
        directed, undirected = graph.edges, ()
    else:
        directed, undirected = graph.directed, graph.undirected
    return {
        "nodes": nodes,
        "directed": [
            [a, b] for a, b in sorted(directed, key=lambda e: (index[e[0]], index[e[1]]))
        ],
        "undirected": [
            [a, b]
            for a, b in sorted(undirected, key=lambda e: (index[e[0]], index[e[1]]))
        ],
    }


def obj_to_cpdag(obj):
    return Cpdag(
        tuple(obj["nodes"]),
        {(a, b) for a, b in obj["directed"]},
        {(a, b) for a, b in obj["undirected"]},
    )


def obj_to_dag(obj):
    if obj.get("undirected"):
        raise ValueError("a ground-truth graph must not have undirected edges")
    return Dag(tuple(obj["nodes"]), {(a, b) for a, b in obj["directed"]})


def write_graph(path, graph):
    dump_json(path, graph_to_obj(graph))


def read_cpdag(path):
    return obj_to_cpdag(load_json(path))


def read_truth(path):
    obj = load_json(path)
    return obj_to_dag(obj["graph"]), obj.get("config", {})


def write_truth(path, truth):
    cfg = truth.config
    obj = {
        "config": {
            "num_vars": cfg.num_vars,
            "density": cfg.density,
            "n": cfg.n,
            "kind": cfg.kind,
            "discrete_ratio": cfg.discrete_ratio,
            "seed": cfg.seed,
        },
        "graph": graph_to_obj(truth.dag),
        "dims": {v: int(d) for v, d in truth.dims.items()},
    }
    dump_json(path, obj)


def write_discovery(path, result):
    """Recovered graph, per-family parameters, and the step log.

    Wall time is deliberately left out: the file must be byte-identical
    across reruns, and timing is reported by the CLI instead.
    """
    parent_map = consistent_extension(result.cpdag).parent_map()
    families = {}
    for node, fit in result.families.items():
        families[node] = {
            "parents": list(parent_map[node]),
            "value": float(fit.value),
            "sigma_x": float(fit.params.sigma_x),
            "sigma_p": float(fit.params.sigma_p),
            "sigma_eps": float(fit.params.sigma_eps),
            "converged": bool(fit.converged),
            "iterations": int(fit.iterations),
        }
    steps = [
        {
            "phase": s.phase,
            "operator": s.operator.kind,
            "x": s.operator.x,
            "y": s.operator.y,
            "subset": list(s.operator.subset),
            "delta": float(s.operator.delta),
            "total_score": float(s.total_score),
        }
        for s in result.steps
    ]
    dump_json(
        path,
        {
            "score_kind": result.score_kind,
            "total_score": float(result.total_score),
            "graph": graph_to_obj(result.cpdag),
            "families": families,
            "steps": steps,
        },
    )


def write_report(path, report):
    dump_json(
        path,
        {
            "precision": float(report.precision),
            "recall": float(report.recall),
            "f1": float(report.f1),
            "shd": int(report.shd),
            "normalized_shd": float(report.normalized_shd),
            "q": int(report.q),
        },
    )
