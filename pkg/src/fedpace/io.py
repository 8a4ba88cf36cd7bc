"""File formats: trace CSV, dataset/manifest/stats exports, selection
audits, summaries. Floats are written with repr so files round-trip
exactly and identical runs produce byte-identical output.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ClientShard, Sample
from .datagen import Dataset
from .engine import TRACE_FIELDS, RoundTrace
from .selector import Selection


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# ----- trace ------------------------------------------------------------------

def write_trace(path: str | Path, trace: Sequence[RoundTrace]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for row in trace:
            writer.writerow([_fmt(v) for v in row.as_row()])


def read_trace(path: str | Path) -> list[RoundTrace]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_FIELDS:
            raise ValueError(f"unexpected trace header in {path}")
        rows = []
        for rec in reader:
            rows.append(
                RoundTrace(
                    round=int(rec["round"]),
                    sim_time=float(rec["sim_time"]),
                    test_acc=float(rec["test_acc"]),
                    val_acc=float(rec["val_acc"]),
                    total_pseudo=int(rec["total_pseudo"]),
                    pseudo_correct_frac=float(rec["pseudo_correct_frac"]),
                    f=int(rec["f"]),
                    n=int(rec["n"]),
                    k=float(rec["k"]),
                    aug_e=float(rec["aug_e"]),
                    traffic_bytes=float(rec["traffic_bytes"]),
                    energy=float(rec["energy"]),
                )
            )
    return rows


# ----- dataset + partition ----------------------------------------------------

DATASET_FILE = "dataset.csv"
MANIFEST_FILE = "manifest.jsonl"
STATS_FILE = "partition_stats.csv"


def write_dataset(out_dir: str | Path, dataset: Dataset, shards: Sequence[ClientShard]) -> None:
    """dataset.csv: one row per sample (id, features, true label).
    manifest.jsonl: a meta line with split ranges, then one line per
    client mapping it to its sample ids and gold ids.
    partition_stats.csv: per-client class histograms."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_samples: list[Sample] = dataset.train + dataset.public + dataset.val + dataset.test
    with (out / DATASET_FILE).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"x{j}" for j in range(dataset.dim)] + ["label"])
        for s in all_samples:
            writer.writerow([s.id] + [_fmt(v) for v in s.embedding] + [s.gold_label])

    splits = {}
    start = 0
    for name in ("train", "public", "val", "test"):
        n = len(getattr(dataset, name))
        splits[name] = [start, start + n]
        start += n
    with (out / MANIFEST_FILE).open("w") as fh:
        meta = {"meta": {"num_classes": dataset.num_classes, "dim": dataset.dim, "splits": splits}}
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for shard in sorted(shards, key=lambda s: s.client_id):
            rec = {
                "client_id": shard.client_id,
                "samples": sorted(shard.gold) + sorted(shard.unlabeled),
                "gold": sorted(shard.gold),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    with (out / STATS_FILE).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["client_id", "size", "gold"] + [f"class_{c}" for c in range(dataset.num_classes)]
        )
        for shard in sorted(shards, key=lambda s: s.client_id):
            ids = list(shard.gold) + list(shard.unlabeled)
            hist = np.bincount(dataset.labels(ids), minlength=dataset.num_classes)
            writer.writerow([shard.client_id, len(ids), len(shard.gold)] + [int(h) for h in hist])


def load_dataset(data_dir: str | Path) -> tuple[Dataset, list[ClientShard]]:
    data_dir = Path(data_dir)
    dataset_path = data_dir / DATASET_FILE
    manifest_path = data_dir / MANIFEST_FILE
    for p in (dataset_path, manifest_path):
        if not p.exists():
            raise FileNotFoundError(f"missing dataset file: {p}")
    with manifest_path.open() as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    meta = lines[0]["meta"]
    rows: dict[int, tuple[np.ndarray, int]] = {}
    with dataset_path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            sid = int(rec[0])
            rows[sid] = (np.array([float(v) for v in rec[1:-1]]), int(rec[-1]))
    total = len(rows)
    dim = meta["dim"]
    X = np.zeros((total, dim))
    y = np.zeros(total, dtype=int)
    for sid, (vec, label) in rows.items():
        X[sid] = vec
        y[sid] = label
    splits = {}
    for name, (lo, hi) in meta["splits"].items():
        splits[name] = [Sample(id=i, embedding=X[i], gold_label=int(y[i])) for i in range(lo, hi)]
    dataset = Dataset(
        num_classes=meta["num_classes"],
        dim=dim,
        train=splits["train"],
        public=splits["public"],
        val=splits["val"],
        test=splits["test"],
        X=X,
        y=y,
    )
    shards = []
    for rec in lines[1:]:
        gold = set(rec["gold"])
        shards.append(
            ClientShard(
                client_id=rec["client_id"],
                gold=sorted(gold),
                unlabeled=[i for i in rec["samples"] if i not in gold],
            )
        )
    return dataset, shards


# ----- selection audit ----------------------------------------------------------

def write_selection_audit(path: str | Path, selection: Selection) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "sample_id", "score"])
        for step, (sid, score) in enumerate(zip(selection.ids, selection.scores), start=1):
            writer.writerow([step, sid, _fmt(score)])


def read_embeddings_csv(path: str | Path) -> tuple[list[int], np.ndarray]:
    """id,x0..xd rows; header optional. Returns (ids, matrix)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing embeddings file: {path}")
    ids, vecs = [], []
    with path.open(newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            try:
                sid = int(rec[0])
            except ValueError:
                continue  # header line
            ids.append(sid)
            vecs.append([float(v) for v in rec[1:]])
    if not ids:
        raise ValueError(f"no embedding rows found in {path}")
    return ids, np.array(vecs)


# ----- summaries / config echo ---------------------------------------------------

def write_json(path: str | Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dict__"):
        return vars(obj)
    return str(obj)
