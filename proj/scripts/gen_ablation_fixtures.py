#!/usr/bin/env python3
"""Builds the ablation replay fixtures under fixtures/ablation/.

The per-class confusion matrices behind the published ablation table are not
available, so each configuration gets a constructed record set. Correct counts
are fixed so accuracy is exact; the off-diagonal layout is then searched
(seeded, deterministic) to bring macro P/R/F1 and kappa close to the targets.
Predictions may fall outside the four reference classes, which is what a low
kappa at low accuracy requires.

Usage: scripts/gen_ablation_fixtures.py [--out fixtures/ablation]
"""

import argparse
import csv
import json
import math
import random
from pathlib import Path

CLASSES = ["Lack of fusion", "Gas porosity", "Keyhole porosity", "Balling"]
EXTRA = ["Spatter"]

# config_id: (description, records, correct, precision, recall, f1, kappa)
TARGETS = {
    "A": ("Vision-language model only", 200, 128, 0.652, 0.638, 0.645, 0.454),
    "B": ("Model with unconstrained retrieval", 200, 24, 0.125, 0.118, 0.121, 0.109),
    "C": ("Model with ontology knowledge base", 200, 144, 0.741, 0.715, 0.728, 0.536),
    "D": ("Ontology-guided retrieval and reasoning", 180, 144, 0.825, 0.792, 0.808, 0.660),
}


def metrics(m, labels):
    k = len(CLASSES)
    total = sum(sum(r) for r in m)
    rows = [sum(r) for r in m]
    cols = [sum(m[i][j] for i in range(k)) for j in range(len(labels))]
    ps, rs, fs = [], [], []
    for c in range(len(labels)):
        tp = m[c][c] if c < k else 0
        fp = cols[c] - tp
        fn = (rows[c] - tp) if c < k else 0
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(f)
    n = len(labels)
    p_o = sum(m[i][i] for i in range(k)) / total
    p_e = sum(rows[c] * cols[c] for c in range(k)) / (total * total)
    kappa = (p_o - p_e) / (1 - p_e)
    return sum(ps) / n, sum(rs) / n, sum(fs) / n, kappa


def cost(m, labels, target):
    p, r, f, kappa = metrics(m, labels)
    _, _, _, tp, tr, tf, tk = target
    return 4 * abs(f - tf) + abs(p - tp) + abs(r - tr) + 2 * abs(kappa - tk)


def search(config_id, target, rng):
    _, total, correct, *_ = target
    k = len(CLASSES)
    labels = CLASSES + (EXTRA if config_id == "B" else [])
    width = len(labels)
    m = [[0] * width for _ in range(k)]
    for i in range(correct):
        m[i % k][i % k] += 1
    for i in range(total - correct):
        r = i % k
        c = (r + 1 + i // k) % width
        if c == r:
            c = (c + 1) % width
        m[r][c] += 1
    current = cost(m, labels, target)
    best, best_m = current, [row[:] for row in m]
    steps = 300000
    for step in range(steps):
        # Move one record to another cell. Correct records stay on the
        # diagonal and errors stay off it, so accuracy never changes.
        r1, c1 = rng.randrange(k), rng.randrange(width)
        r2, c2 = rng.randrange(k), rng.randrange(width)
        if m[r1][c1] == 0 or (r1, c1) == (r2, c2):
            continue
        if (r1 == c1) != (r2 == c2):
            continue
        m[r1][c1] -= 1
        m[r2][c2] += 1
        if min(sum(row) for row in m) < 3:
            m[r1][c1] += 1
            m[r2][c2] -= 1
            continue
        c = cost(m, labels, target)
        temperature = 0.02 * (1 - step / steps) + 1e-9
        if c <= current or rng.random() < math.exp((current - c) / temperature):
            current = c
            if c < best:
                best, best_m = c, [row[:] for row in m]
        else:
            m[r1][c1] += 1
            m[r2][c2] -= 1
    m = best_m
    return m, labels


def records(config_id, m, labels, rng):
    out = []
    for r in range(len(CLASSES)):
        for c in range(len(labels)):
            out += [(CLASSES[r], labels[c])] * m[r][c]
    rng.shuffle(out)
    return [(f"{config_id}-{i + 1:03d}", ref, pred) for i, (ref, pred) in enumerate(out)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures" / "ablation"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    configurations = []
    for config_id, target in TARGETS.items():
        rng = random.Random(f"ablation-{config_id}")
        m, labels = search(config_id, target, rng)
        rows = records(config_id, m, labels, rng)
        path = out / f"{config_id}.csv"
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["item_id", "reference", "predicted"])
            w.writerows(rows)
        p, r, f1, kappa = metrics(m, labels)
        print(f"{config_id}: n={len(rows)} acc={target[2] / target[1]:.4f} P={p:.4f} R={r:.4f} F1={f1:.4f} kappa={kappa:.4f}")
        configurations.append({"config_id": config_id, "description": target[0], "records_path": path.name})
    manifest = {"classes": CLASSES, "configurations": configurations}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
