"""Smoke test for the Python bindings.

Build and install first:  pip install --no-build-isolation -e crates/python
Then run:                  python python/smoke_test.py
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

import upq


def scene():
    # left half road (stuff class 0), right half two cars (class 13)
    gt = np.zeros((32, 32), dtype=np.uint16)
    gt[:, 16:24] = 13 * 1000 + 1
    gt[:, 24:] = 13 * 1000 + 2
    return gt


def check_pq_identity():
    gt = scene()
    report = upq.evaluate([gt], [gt.copy()])
    assert report["overall"]["all"]["pq"] == 1.0, report["overall"]


def check_constant_aupq_equals_pq():
    gt = scene()
    pred = gt.copy()
    pred[:4, :] = 1000  # a sidewalk strip
    ones = np.ones(gt.shape)
    difficulty = np.zeros(gt.shape, dtype=np.uint8)
    pq = upq.evaluate([gt], [pred])
    aupq = upq.evaluate([gt], [pred], [difficulty], [ones], [ones], metric="aupq", grid_size=4)
    assert pq["overall"]["all"]["pq"] == aupq["overall"]["all"]["pq"]


def check_difficulty():
    h1 = scene()
    h2 = h1.copy()
    h2[:, 24:] = 13 * 1000 + 1  # annotators merged the two cars
    d = upq.derive_difficulty(h1, h2)
    assert d.dtype == np.uint8 and d.shape == h1.shape
    assert (d[:, :16] == 0).all() and (d[:, 24:] == 1).all()


def check_marginal():
    probs = np.zeros((2, 20))
    probs[0, 0] = 0.9
    probs[0, 19] = 0.1
    probs[1, 13] = 0.6
    probs[1, 19] = 0.4
    masks = np.zeros((2, 8, 8))
    masks[0, :, :4] = 1.0
    masks[1, :, 4:] = 1.0
    pan, s_class, s_inst = upq.marginal_confidences(probs, masks)
    assert pan[0, 0] == 0 and pan[0, 7] // 1000 == 13
    assert abs(s_class[0, 0] - 0.9) < 1e-12 and abs(s_inst[0, 7] - 1.0) < 1e-12


def check_errors():
    try:
        upq.evaluate([scene()], [scene()[:8]])
    except upq.ValidationError as e:
        assert "dimension" in str(e)
    else:
        raise AssertionError("expected ValidationError")
    try:
        upq.evaluate_manifest("/nonexistent/manifest.json")
    except upq.InputError:
        pass
    else:
        raise AssertionError("expected InputError")


def check_manifest():
    with tempfile.TemporaryDirectory() as tmp:
        cli = Path(__file__).resolve().parents[1] / "target" / "debug" / "upq"
        if not cli.exists():
            print("skip manifest check: build the upq binary first")
            return
        subprocess.run([cli, "synth", tmp, "--count", "3", "--seed", "7"], check=True, capture_output=True)
        report = upq.evaluate_manifest(Path(tmp) / "manifest.json", metric="aupq", workers=2)
        assert report["metric"] == "aupq"
        assert len(report["overall"]["sweep"]["pq"]) == 16


def main():
    checks = [check_pq_identity, check_constant_aupq_equals_pq, check_difficulty, check_marginal, check_errors, check_manifest]
    for check in checks:
        check()
        print("ok", check.__name__)
    assert all(diffs == 0 for _, _, diffs in upq.selfcheck(20))
    print("ok selfcheck")
    return 0


if __name__ == "__main__":
    sys.exit(main())
