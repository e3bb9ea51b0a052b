#!/usr/bin/env python3
"""Convert benchmark archives into the formats read by the pfgap loaders.

Usage: convert.py <wheel-or-archive-dir> <out-dir>

Inputs are looked up by file name inside the given directory:
  palmerpenguins-*.whl      -> penguins.csv
  aeon-*.whl                -> japanese_vowels_{train,test}.jsonl, arrowhead_{train,test}.jsonl
  PROTEINS.zip              -> proteins.jsonl             (TU graph archive layout)
  FloodModeling1_{TRAIN,TEST}.ts -> flood_{train,test}.jsonl

When scikit-learn is importable its bundled iris, wine and breast-cancer
tables are written as iris.csv, wine.csv and breast_cancer.csv.
"""
import csv
import glob
import io
import json
import os
import sys
import zipfile


def penguins(whl, out):
    z = zipfile.ZipFile(whl)
    rows = list(csv.DictReader(io.StringIO(z.read("palmerpenguins/data/penguins.csv").decode())))
    cols = ["island", "bill_length_mm", "bill_depth_mm", "flipper_length_mm", "body_mass_g", "sex"]
    islands = sorted({r["island"] for r in rows})
    kept = [r for r in rows if all(r[c] != "NA" for c in cols)]
    with open(os.path.join(out, "penguins.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["species"] + cols)
        for r in kept:
            w.writerow([
                r["species"],
                islands.index(r["island"]),
                r["bill_length_mm"],
                r["bill_depth_mm"],
                r["flipper_length_mm"],
                r["body_mass_g"],
                1 if r["sex"] == "male" else 0,
            ])
    print(f"penguins.csv: {len(kept)} rows")


def parse_ts(text, regression=False):
    records = []
    in_data = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if not in_data:
            if line.lower().startswith("@data"):
                in_data = True
            continue
        parts = line.split(":")
        label = parts[-1].strip()
        channels = []
        for dim in parts[:-1]:
            vals = []
            for v in dim.split(","):
                v = v.strip()
                vals.append(None if v in ("?", "NaN", "nan") else float(v))
            channels.append(vals)
        records.append((float(label) if regression else label, channels))
    return records


def write_series(records, path, prefix):
    with open(path, "w") as f:
        for i, (label, channels) in enumerate(records):
            f.write(json.dumps({"id": f"{prefix}{i}", "label": label, "channels": channels},
                               separators=(",", ":")) + "\n")
    print(f"{os.path.basename(path)}: {len(records)} records")


def aeon(whl, out):
    z = zipfile.ZipFile(whl)
    for name, stem in [("JapaneseVowels", "japanese_vowels"), ("ArrowHead", "arrowhead")]:
        for split in ["TRAIN", "TEST"]:
            text = z.read(f"aeon/datasets/data/{name}/{name}_{split}.ts").decode()
            write_series(parse_ts(text), os.path.join(out, f"{stem}_{split.lower()}.jsonl"),
                         f"{split.lower()}-")


def tu_graphs(zpath, out, name="PROTEINS"):
    z = zipfile.ZipFile(zpath)

    def read(suffix):
        cands = [n for n in z.namelist() if n.endswith(f"{name}_{suffix}.txt")]
        return z.read(cands[0]).decode().split() if cands else None

    a_lines = [n for n in z.namelist() if n.endswith(f"{name}_A.txt")]
    edges = [tuple(int(x) for x in l.split(",")) for l in z.read(a_lines[0]).decode().splitlines() if l.strip()]
    gi = [int(x) for x in read("graph_indicator")]
    gl = read("graph_labels")
    nl = read("node_labels") or ["0"] * len(gi)
    n_graphs = max(gi)
    nodes = [[] for _ in range(n_graphs)]
    local = {}
    for v, g in enumerate(gi, start=1):
        local[v] = len(nodes[g - 1])
        nodes[g - 1].append(nl[v - 1])
    gedges = [set() for _ in range(n_graphs)]
    for u, v in edges:
        g = gi[u - 1]
        a, b = sorted((local[u], local[v]))
        if a != b:
            gedges[g - 1].add((a, b))
    with open(os.path.join(out, "proteins.jsonl"), "w") as f:
        for g in range(n_graphs):
            f.write(json.dumps({"id": f"g{g}", "label": gl[g], "nodes": nodes[g],
                                "edges": sorted(gedges[g])}, separators=(",", ":")) + "\n")
    print(f"proteins.jsonl: {n_graphs} graphs")


def sklearn_tables(out):
    try:
        from sklearn import datasets
    except ImportError:
        print("scikit-learn not available; skipping iris/wine/breast_cancer")
        return
    for name, loader in [("iris", datasets.load_iris), ("wine", datasets.load_wine),
                         ("breast_cancer", datasets.load_breast_cancer)]:
        b = loader()
        cols = [f"f{j}" for j in range(b.data.shape[1])]
        with open(os.path.join(out, f"{name}.csv"), "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(cols + ["target"])
            for x, y in zip(b.data, b.target):
                w.writerow([repr(float(v)) for v in x] + [int(y)])
        print(f"{name}.csv: {len(b.target)} rows")


def main():
    src, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    for whl in glob.glob(os.path.join(src, "**", "palmerpenguins-*.whl"), recursive=True)[:1]:
        penguins(whl, out)
    for whl in glob.glob(os.path.join(src, "**", "aeon-*.whl"), recursive=True)[:1]:
        aeon(whl, out)
    for zp in glob.glob(os.path.join(src, "**", "PROTEINS.zip"), recursive=True)[:1]:
        tu_graphs(zp, out)
    for split in ["TRAIN", "TEST"]:
        for p in glob.glob(os.path.join(src, "**", f"FloodModeling1_{split}.ts"), recursive=True)[:1]:
            with open(p) as f:
                write_series(parse_ts(f.read(), regression=True),
                             os.path.join(out, f"flood_{split.lower()}.jsonl"), f"{split.lower()}-")
    sklearn_tables(out)


if __name__ == "__main__":
    main()
