#!/usr/bin/env python3
"""Smoke test for the ugda_py extension module.

Builds the module if needed, imports it, and exercises every binding with
small numeric cross-checks. Exits 0 on success.

    python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def ensure_module():
    so = REPO / "target" / "debug" / "libugda_py.so"
    if not so.exists():
        subprocess.run(
            ["cargo", "build", "-p", "ugda-py", "--features", "extension-module"],
            cwd=REPO,
            check=True,
        )
    staging = Path(tempfile.mkdtemp(prefix="ugda_py_"))
    shutil.copy2(so, staging / "ugda_py.so")
    sys.path.insert(0, str(staging))


ensure_module()
import ugda_py  # noqa: E402

checks = 0


def ok(name, cond, detail=""):
    global checks
    if not cond:
        raise AssertionError(f"{name}: {detail}")
    checks += 1
    print(f"ok {name}")


def stats(img):
    """Per-channel mean/std computed in Python, independent of the library."""
    h, w, c = img.height, img.width, img.channels
    data = img.data()
    means, stds = [], []
    for ch in range(c):
        vals = data[ch::c]
        m = sum(vals) / len(vals)
        v = sum((x - m) ** 2 for x in vals) / len(vals)
        means.append(m)
        stds.append(math.sqrt(v))
    return means, stds


# --- fixture -----------------------------------------------------------------
(left, right), gt = ugda_py.make_synthetic_pair(7, 48, 64, 3)
ok("synthetic pair shape", left.height == 48 and left.width == 64 and left.channels == 3)

m, s = left.channel_stats()
m_ref, s_ref = stats(left)
ok(
    "channel stats agree with python reference",
    all(abs(a - b) < 1e-12 for a, b in zip(m, m_ref))
    and all(abs(a - b) < 1e-12 for a, b in zip(s, s_ref)),
)

# --- augmentation ------------------------------------------------------------
(pairs, records) = ugda_py.augment_batch(
    [(left, right), (right, left)], seed=11, clip="none"
)
ok("augment returns one record per image", len(records) == 4)
worst = 0.0
for rec in records:
    ok(f"pair {rec['pair']} side {rec['side']} applied", rec["applied"])
    img = pairs[rec["pair"]][0 if rec["side"] == "L" else 1]
    mean, std = stats(img)
    for c in range(3):
        worst = max(worst, abs(mean[c] - rec["mu_prime"][c]), abs(std[c] - rec["sigma_prime"][c]))
ok("augmented stats hit their targets", worst <= 1e-9, f"worst deviation {worst}")

# Zero spread: a single pair whose two sides are the same image must come
# back bit-identical.
(identity_pairs, _) = ugda_py.augment_batch([(left, left)], seed=99)
ok(
    "identical pool is returned unchanged",
    identity_pairs[0][0].data() == left.data() and identity_pairs[0][1].data() == left.data(),
)

# Different seeds give different draws.
(_, records_b) = ugda_py.augment_batch([(left, right)], seed=12)
ok(
    "seed changes the draw",
    records[0]["eps_mu"] != records_b[0]["eps_mu"],
)

# --- matching + metrics ------------------------------------------------------
disp = ugda_py.match_pair(left, right, d_max=8)
report = ugda_py.compute_metrics(disp, gt, threshold=1.0)
ok(
    "matcher recovers the constant shift",
    report["d1"] <= 0.01 and report["epe"] < 0.5,
    f"report {report}",
)
ok(
    "metric bookkeeping is consistent",
    report["n_valid"] > 0 and report["n_bad"] <= report["n_valid"],
)

# --- losses ------------------------------------------------------------------
(shape, feats) = ugda_py.extract_features(left)
ok("feature volume has the advertised size", len(feats) == shape[0] * shape[1] * shape[2])

zero = ugda_py.consistency_loss(left, left, right, right)
ok("consistency of an unchanged pair is zero", zero == 0.0, f"got {zero}")

aug_l, aug_r = pairs[0]
cons = ugda_py.consistency_loss(left, aug_l, right, aug_r)
ok("consistency of an augmented pair is positive", cons > 0.0)

disp_loss = ugda_py.smooth_l1_loss(disp, gt, beta=1.0)
total = ugda_py.total_loss(disp, gt, left, aug_l, right, aug_r, lam=0.17)
ok(
    "total loss decomposes into its two terms",
    abs(total - (disp_loss + 0.17 * cons)) < 1e-12,
    f"{total} vs {disp_loss} + 0.17*{cons}",
)

max_rel_err, checked = ugda_py.gradient_check(seed=3, height=6, width=6, samples=4)
ok(
    "analytic gradients match finite differences",
    checked > 0 and max_rel_err <= 1e-3,
    f"max rel err {max_rel_err} over {checked} coords",
)

# --- file round trips ----------------------------------------------------------
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)

    ugda_py.write_pfm_disparity(tmp / "d.pfm", disp)
    back = ugda_py.read_pfm_disparity(tmp / "d.pfm")
    same = back.valid() == disp.valid() and all(
        (not v) or abs(a - b) < 1e-6
        for v, a, b in zip(disp.valid(), back.disparity(), disp.disparity())
    )
    ok("pfm round trip preserves the map", same)

    quant = ugda_py.Disparity(2, 3, [k / 256.0 for k in (1, 77, 512, 9999, 65535, 300)], [True] * 6)
    ugda_py.write_kitti_disparity(tmp / "d.png", quant)
    back = ugda_py.read_kitti_disparity(tmp / "d.png")
    ok(
        "16-bit png round trip is value-exact",
        back.disparity() == quant.disparity() and back.valid() == quant.valid(),
    )

    ugda_py.save_image_png(tmp / "img.png", left)
    img = ugda_py.load_image(tmp / "img.png")
    worst = max(abs(a - b) for a, b in zip(img.data(), left.data()))
    ok("8-bit png round trip stays within quantization", worst <= 0.5 / 255.0, f"worst {worst}")

# --- error mapping -------------------------------------------------------------
try:
    ugda_py.match_pair(left, right, census_window=4)
except ValueError:
    ok("invalid arguments raise ValueError", True)
else:
    ok("invalid arguments raise ValueError", False, "no exception")

try:
    ugda_py.load_image("/nonexistent/image.png")
except (IOError, OSError):
    ok("missing files raise OSError", True)
else:
    ok("missing files raise OSError", False, "no exception")

print(f"smoke test: {checks} checks passed")
