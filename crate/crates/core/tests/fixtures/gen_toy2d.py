#!/usr/bin/env python3
"""Regenerates the toy2d fixture set.

Trains a 2 -> 8 -> 3 MLP (ReLU hidden layer, softmax output) on a synthetic
three-class 2-D dataset, freezes the weights into `toy2d.model.json` and
computes golden activations with plain numpy matrix products.

Run from this directory: `python3 gen_toy2d.py`. Output is deterministic.
"""

import json

import numpy as np

rng = np.random.default_rng(20240611)

N = 500
N_TRAIN = 400
HIDDEN = 8
CLASSES = 3


def make_points():
    # Three overlapping arcs; enough overlap that the hidden layer needs
    # several tree paths per class.
    xs, ys = [], []
    per_class = [167, 167, 166]
    for c, n in enumerate(per_class):
        t = rng.uniform(0.0, 2.4, size=n)
        r = 1.0 + 0.25 * rng.standard_normal(size=n)
        angle = t + c * (2.0 * np.pi / 3.0)
        pts = np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1)
        pts += 0.15 * rng.standard_normal(size=pts.shape)
        xs.append(pts)
        ys.append(np.full(n, c))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    perm = rng.permutation(len(y))
    x = np.round(x[perm], 4)
    return x, y[perm]


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train(x, y):
    w1 = rng.standard_normal((HIDDEN, 2)) * 0.8
    b1 = np.zeros(HIDDEN)
    w2 = rng.standard_normal((CLASSES, HIDDEN)) * 0.5
    b2 = np.zeros(CLASSES)
    onehot = np.eye(CLASSES)[y]
    lr = 0.5
    for _ in range(6000):
        h_pre = x @ w1.T + b1
        h = np.maximum(h_pre, 0.0)
        p = softmax(h @ w2.T + b2)
        g_out = (p - onehot) / len(y)
        g_w2 = g_out.T @ h
        g_b2 = g_out.sum(axis=0)
        g_h = g_out @ w2
        g_h[h_pre <= 0.0] = 0.0
        g_w1 = g_h.T @ x
        g_b1 = g_h.sum(axis=0)
        w1 -= lr * g_w1
        b1 -= lr * g_b1
        w2 -= lr * g_w2
        b2 -= lr * g_b2
    # Round so the JSON stays readable; the rounded weights are the model.
    return [np.round(a, 6) for a in (w1, b1, w2, b2)]


def main():
    x, y = make_points()
    x_tr, y_tr = x[:N_TRAIN], y[:N_TRAIN]
    x_te, y_te = x[N_TRAIN:], y[N_TRAIN:]
    w1, b1, w2, b2 = train(x_tr, y_tr)

    model = {
        "input_dim": 2,
        "layers": [
            {"kind": "dense", "activation": "relu",
             "weights": w1.tolist(), "bias": b1.tolist()},
            {"kind": "dense", "activation": "softmax",
             "weights": w2.tolist(), "bias": b2.tolist()},
        ],
    }
    with open("toy2d.model.json", "w") as f:
        json.dump(model, f, indent=1)
        f.write("\n")

    def write_raw(path, xs, ys, prefix):
        with open(path, "w") as f:
            f.write("id,v_0,v_1,class\n")
            for i, (p, c) in enumerate(zip(xs, ys)):
                f.write(f"{prefix}{i:03d},{float(p[0])!r},{float(p[1])!r},{int(c)}\n")

    write_raw("toy2d.train.csv", x_tr, y_tr, "tr")
    write_raw("toy2d.test.csv", x_te, y_te, "te")

    features = [{"name": f"Class {c}", "classes": [c]} for c in range(CLASSES)]
    with open("toy2d.features.json", "w") as f:
        json.dump(features, f, indent=1)
        f.write("\n")

    probe = np.concatenate([np.zeros((1, 2)), x_tr[:100]])
    ids = ["origin"] + [f"tr{i:03d}" for i in range(100)]
    h = np.maximum(probe @ w1.T + b1, 0.0)
    o = softmax(h @ w2.T + b2)
    with open("toy2d.golden.csv", "w") as f:
        cols = [f"h_{j}" for j in range(HIDDEN)] + [f"o_{j}" for j in range(CLASSES)]
        f.write("id," + ",".join(cols) + "\n")
        for i, row in enumerate(np.concatenate([h, o], axis=1)):
            f.write(ids[i] + "," + ",".join(repr(float(v)) for v in row) + "\n")

    acc = (softmax(np.maximum(x_te @ w1.T + b1, 0.0) @ w2.T + b2).argmax(1) == y_te).mean()
    print(f"test accuracy {acc:.3f}")


if __name__ == "__main__":
    main()
