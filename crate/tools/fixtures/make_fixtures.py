"""Generate golden fixtures with an independent float64 numpy reference.

Writes VTRW weights, input images (PGM and VTRT), one trace bundle per case
and manifest.json into the output directory (default: ../../fixtures).

    python3 tools/fixtures/make_fixtures.py [out_dir]
"""

import json
import math
import os
import struct
import sys

import numpy as np

LN_EPS = 1e-6
MASK = -1e9
CONFIG_FIELDS = [
    "image_height", "image_width", "channels", "patch", "num_shifts",
    "shift_magnitude", "hidden_dim", "depth", "heads", "mlp_ratio", "num_classes",
]
ERF = np.vectorize(math.erf)


def make_config(size, patch, dim, depth, heads, classes, channels=1):
    return dict(image_height=size, image_width=size, channels=channels, patch=patch,
                num_shifts=4, shift_magnitude=2, hidden_dim=dim, depth=depth,
                heads=heads, mlp_ratio=4, num_classes=classes)


def tensor_specs(cfg):
    d, m, k = cfg["hidden_dim"], cfg["mlp_ratio"] * cfg["hidden_dim"], cfg["num_classes"]
    p, c = cfg["patch"], cfg["channels"] * (cfg["num_shifts"] + 1)
    raw = p * p * c
    t = (cfg["image_height"] // p) * (cfg["image_width"] // p) + 1
    specs = [("embed.ln.gamma", [raw]), ("embed.ln.beta", [raw]),
             ("embed.linear.weight", [raw, d]), ("embed.linear.bias", [d]),
             ("cls_token", [d]), ("pos_embed", [t, d])]
    for i in range(cfg["depth"]):
        pre = f"layers.{i}"
        specs += [(f"{pre}.ln1.gamma", [d]), (f"{pre}.ln1.beta", [d])]
        for n in ("wq", "wk", "wv"):
            specs += [(f"{pre}.attn.{n}.weight", [d, d]), (f"{pre}.attn.{n}.bias", [d])]
        specs += [(f"{pre}.attn.temperature", [1]),
                  (f"{pre}.attn.proj.weight", [d, d]), (f"{pre}.attn.proj.bias", [d]),
                  (f"{pre}.ln2.gamma", [d]), (f"{pre}.ln2.beta", [d]),
                  (f"{pre}.mlp.fc1.weight", [d, m]), (f"{pre}.mlp.fc1.bias", [m]),
                  (f"{pre}.mlp.fc2.weight", [m, d]), (f"{pre}.mlp.fc2.bias", [d])]
    specs += [("head.ln.gamma", [d]), ("head.ln.beta", [d]),
              ("head.linear.weight", [d, k]), ("head.linear.bias", [k])]
    return specs


def random_weights(cfg, seed):
    """Weights with O(1) activations; values rounded to float32."""
    rng = np.random.default_rng(seed)
    w = {}
    for name, dims in tensor_specs(cfg):
        if name.endswith(".temperature"):
            v = rng.uniform(0.5, 3.0, dims)
        elif name.endswith(".gamma"):
            v = rng.uniform(0.8, 1.2, dims)
        elif name.endswith(".weight"):
            v = rng.uniform(-1, 1, dims) * math.sqrt(3.0 / dims[0])
        else:
            v = rng.uniform(-0.3, 0.3, dims)
        w[name] = v.astype(np.float32).astype(np.float64)
    return w


def shift(img, dx, dy):
    h, wd, _ = img.shape
    out = np.zeros_like(img)
    for r in range(h):
        for c in range(wd):
            sr, sc = r - dy, c - dx
            if 0 <= sr < h and 0 <= sc < wd:
                out[r, c] = img[sr, sc]
    return out


def spt(img, cfg):
    m = cfg["shift_magnitude"]
    dirs = [(-m, -m), (m, -m), (-m, m), (m, m)][: cfg["num_shifts"]]
    return np.concatenate([img] + [shift(img, dx, dy) for dx, dy in dirs], axis=2)


def tokenize(stack, p):
    h, w, c = stack.shape
    rows = []
    for pr in range(h // p):
        for pc in range(w // p):
            rows.append(stack[pr * p:(pr + 1) * p, pc * p:(pc + 1) * p, :].reshape(-1))
    return np.array(rows)


def layer_norm(x, g, b):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * g + b


def gelu(x):
    return 0.5 * x * (1.0 + ERF(x / math.sqrt(2.0)))


def softmax(a):
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def forward(img, w, cfg):
    trace = {}
    stack = spt(img, cfg)
    h, wd, c = stack.shape
    trace["spt"] = stack.reshape(h * wd, c)
    tok = tokenize(stack, cfg["patch"])
    trace["tokens"] = tok
    e = layer_norm(tok, w["embed.ln.gamma"], w["embed.ln.beta"])
    e = e @ w["embed.linear.weight"] + w["embed.linear.bias"]
    z = np.vstack([w["cls_token"][None, :], e]) + w["pos_embed"]
    trace["embed"] = z
    heads, d = cfg["heads"], cfg["hidden_dim"]
    dk = d // heads
    for i in range(cfg["depth"]):
        p = f"layers.{i}"
        x = layer_norm(z, w[f"{p}.ln1.gamma"], w[f"{p}.ln1.beta"])
        q = x @ w[f"{p}.attn.wq.weight"] + w[f"{p}.attn.wq.bias"]
        k = x @ w[f"{p}.attn.wk.weight"] + w[f"{p}.attn.wk.bias"]
        v = x @ w[f"{p}.attn.wv.weight"] + w[f"{p}.attn.wv.bias"]
        lam = w[f"{p}.attn.temperature"][0]
        scores, outs = [], []
        for hd in range(heads):
            sl = slice(hd * dk, (hd + 1) * dk)
            a = q[:, sl] @ k[:, sl].T / lam
            np.fill_diagonal(a, MASK)
            s = softmax(a)
            scores.append(s)
            outs.append(s @ v[:, sl])
        msa = np.hstack(outs) @ w[f"{p}.attn.proj.weight"] + w[f"{p}.attn.proj.bias"]
        res1 = z + msa
        x2 = layer_norm(res1, w[f"{p}.ln2.gamma"], w[f"{p}.ln2.beta"])
        hid = gelu(x2 @ w[f"{p}.mlp.fc1.weight"] + w[f"{p}.mlp.fc1.bias"])
        mlp = hid @ w[f"{p}.mlp.fc2.weight"] + w[f"{p}.mlp.fc2.bias"]
        z = res1 + mlp
        trace.update({f"layer{i}.ln1": x, f"layer{i}.attn_scores": np.vstack(scores),
                      f"layer{i}.msa_out": msa, f"layer{i}.res1": res1,
                      f"layer{i}.ln2": x2, f"layer{i}.mlp_out": mlp, f"layer{i}.out": z})
    hl = layer_norm(z[:1], w["head.ln.gamma"], w["head.ln.beta"])
    logits = hl @ w["head.linear.weight"] + w["head.linear.bias"]
    trace["head_ln"] = hl
    trace["logits"] = logits
    return logits[0], trace


def stage_names(depth):
    subs = ["ln1", "attn_scores", "msa_out", "res1", "ln2", "mlp_out", "out"]
    return (["spt", "tokens", "embed"]
            + [f"layer{i}.{s}" for i in range(depth) for s in subs]
            + ["head_ln", "logits"])


def write_vtrw(path, cfg, w):
    specs = tensor_specs(cfg)
    out = bytearray(b"VTRW") + struct.pack("<I", 1)
    out += struct.pack("<11I", *[cfg[f] for f in CONFIG_FIELDS])
    out += struct.pack("<I", len(specs))
    offset = 0
    for name, dims in specs:
        nb = name.encode()
        out += struct.pack("<I", len(nb)) + nb
        out += struct.pack("<I", len(dims)) + struct.pack(f"<{len(dims)}I", *dims)
        out += struct.pack("<Q", offset)
        offset += 4 * int(np.prod(dims))
    for name, _ in specs:
        out += w[name].astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(out)


def write_vtrt(path, arr):
    arr = np.asarray(arr)
    out = bytearray(b"VTRT") + struct.pack("<I", arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape) + struct.pack("<I", 1)
    out += arr.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(out)


def write_pgm(path, samples, maxval):
    h, w = samples.shape
    data = samples.astype(">u2").tobytes() if maxval > 255 else samples.astype(np.uint8).tobytes()
    with open(path, "wb") as f:
        f.write(f"P5\n# synthetic\n{w} {h}\n{maxval}\n".encode() + data)


def shape_image(kind, size, rng, channels=1):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = rng.uniform(size * 0.3, size * 0.7, 2)
    r = np.hypot(yy - cy, xx - cx)
    if kind == "blob":
        base = np.exp(-(r / (size * 0.15)) ** 2)
    elif kind == "bar":
        base = (np.abs(yy - cy) < size * 0.08).astype(float) * (np.abs(xx - cx) < size * 0.35)
    elif kind == "corner":
        base = ((yy > cy) & (xx > cx) & (yy - cy < size * 0.3) & (xx - cx < size * 0.3)).astype(float)
    else:
        base = (np.abs(r - size * 0.25) < size * 0.06).astype(float)
    speckle = rng.exponential(1.0, (size, size, channels))
    img = np.clip(base[:, :, None] * 0.8 * speckle + 0.05 * rng.random((size, size, channels)), 0, 1)
    return img


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")
    out = os.path.abspath(out)
    os.makedirs(os.path.join(out, "images"), exist_ok=True)
    rng = np.random.default_rng(20240611)

    models = [
        ("toy", make_config(32, 8, 32, 2, 2, 4), 11,
         [("blob", "pgm8"), ("bar", "pgm8"), ("corner", "pgm16"), ("ring", "vtrt")]),
        ("odd", make_config(24, 8, 20, 1, 4, 3), 12, [("ring", "pgm8"), ("bar", "vtrt")]),
        ("rgb", make_config(16, 4, 12, 1, 3, 5, channels=2), 13, [("blob", "vtrt"), ("corner", "vtrt")]),
    ]
    cases = []
    for model, cfg, seed, samples in models:
        w = random_weights(cfg, seed)
        write_vtrw(os.path.join(out, f"{model}.vtrw"), cfg, w)
        for idx, (kind, fmt) in enumerate(samples):
            name = f"{model}-{idx}-{kind}"
            size, ch = cfg["image_height"], cfg["channels"]
            img = shape_image(kind, size, rng, ch)
            if fmt == "vtrt":
                img = img.astype(np.float32).astype(np.float64)
                rel = f"images/{name}.vtrt"
                write_vtrt(os.path.join(out, rel), img)
            else:
                maxval = 255 if fmt == "pgm8" else 4095
                q = np.round(img[:, :, 0] * maxval).astype(np.int64)
                rel = f"images/{name}.pgm"
                write_pgm(os.path.join(out, rel), q, maxval)
                img = (q / maxval)[:, :, None]
            # the engine reads float32 pixels
            img = img.astype(np.float32).astype(np.float64)
            logits, trace = forward(img, w, cfg)
            top = np.sort(logits)[::-1]
            assert top[0] - top[1] > 1e-3 * max(1.0, abs(top[0])), f"{name}: ambiguous argmax"
            tdir = f"traces/{name}"
            os.makedirs(os.path.join(out, tdir), exist_ok=True)
            names = stage_names(cfg["depth"])
            assert set(names) == set(trace)
            for s in names:
                write_vtrt(os.path.join(out, tdir, f"{s}.vtrt"), trace[s])
            cases.append(dict(name=name, weights=f"{model}.vtrw", image=rel,
                              expected_class=int(np.argmax(logits)), trace_dir=tdir, stages=names))
    manifest = dict(format="vtr-fixtures", version=1,
                    tolerances=dict(stage_rel=1e-4, logits_rel=1e-4), cases=cases)
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(f"wrote {len(cases)} cases to {out}")


if __name__ == "__main__":
    main()
