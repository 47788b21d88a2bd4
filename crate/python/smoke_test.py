#!/usr/bin/env python3
"""Smoke test for the entroflow_py extension module.

Builds nothing itself: run `cargo build -p entroflow-py` first (or pass
--release and build in release mode). The script copies the cdylib next to a
temp dir as `entroflow_py.so`, imports it, and exercises the bindings.
"""

import argparse
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module(profile: str):
    lib = REPO / "target" / profile / "libentroflow_py.so"
    if not lib.exists():
        sys.exit(f"{lib} not found; run `cargo build -p entroflow-py` first")
    moddir = Path(tempfile.mkdtemp(prefix="entroflow_py_"))
    shutil.copy(lib, moddir / "entroflow_py.so")
    sys.path.insert(0, str(moddir))
    import entroflow_py

    return entroflow_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--release", action="store_true")
    args = parser.parse_args()
    ef = load_module("release" if args.release else "debug")

    # Entropy basics.
    approx(ef.shannon_entropy([4]), 0.0)
    approx(ef.shannon_entropy([1, 1, 1, 1]), 2.0)
    approx(ef.shannon_entropy([3, 1]), -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25)))
    approx(ef.normalized_entropy([5, 5, 5]), 1.0)
    approx(ef.normalized_entropy([9]), 0.0)

    # Entropy rate.
    approx(ef.entropy_rate([7] * 50), 0.0)
    approx(ef.entropy_rate([0, 1] * 4 + [0], block_order=2), 0.5)
    try:
        ef.entropy_rate([1], block_order=5)
    except ValueError:
        pass
    else:
        raise AssertionError("short sequence must raise ValueError")

    # Calibration quantile.
    approx(ef.calibrate_threshold([0.80, 0.85, 0.90, 0.95], 0.25), 0.80)

    # End-to-end: synthetic flood is confirmed, clean trace is not.
    with tempfile.TemporaryDirectory() as tmp:
        trace = str(Path(tmp) / "attack.csv")
        labels = str(Path(tmp) / "labels.jsonl")
        n = ef.generate_trace(
            trace, labels, seed=3, duration=20.0, rate=200.0, attack_rate=800.0,
            attack_start=10.0, attack_duration=5.0,
        )
        assert n > 0
        summary = json.loads(ef.detect(trace, json.dumps({"th1": 0.9, "th2": 0.2})))
        assert summary["windows"] == 20, summary["windows"]
        assert summary["attacked"] >= 4, summary
        attacked = [v for v in summary["verdicts"] if v["state"] == "Attacked"]
        assert all(v["attack_flow"]["dst_addr"] == "10.99.0.1" for v in attacked)

        clean = str(Path(tmp) / "clean.csv")
        ef.generate_trace(clean, seed=4, duration=20.0, rate=200.0)
        summary = json.loads(ef.detect(clean, json.dumps({"th1": 0.5, "th2": 0.2})))
        assert summary["attacked"] == 0, summary

    print("smoke test passed")


if __name__ == "__main__":
    main()
