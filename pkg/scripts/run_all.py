"""Run every desk-scale experiment and write JSON (and CSV curves) to results/.

    python scripts/run_all.py [--quick] [--out results]
"""

import argparse
import subprocess
import sys
from pathlib import Path

FULL = {
    "bound_check": ["bound-check"],
    "grad_study": ["grad-study"],
    "bench_dense": ["bench", "--mode", "dense"],
    "bench_sparse": ["bench", "--mode", "sparse", "--n-list", "1000,2000,4000,8000,16000"],
    "planted": ["planted"],
    "robustness": ["robustness"],
    "ablate_k": ["ablate-k"],
}

QUICK = {
    "bound_check": ["bound-check", "--n", "200", "--k-list", "3,6,12", "--epochs", "300"],
    "grad_study": ["grad-study", "--er-n", "300", "--trials", "50"],
    "bench_dense": ["bench", "--n-list", "250,500,1000", "--reps", "3"],
    "planted": ["planted", "--seeds", "0,1"],
    "robustness": ["robustness", "--seeds", "0", "--drops", "0,0.5,0.9"],
    "ablate_k": ["ablate-k", "--seeds", "0", "--k-list", "1,4,8,16"],
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = []
    for name, argv in (QUICK if args.quick else FULL).items():
        cmd = [sys.executable, "-m", "icg.cli", *argv, "--out", str(out / f"{name}.json"), "--csv", str(out / f"{name}.csv")]
        print("$", " ".join(cmd[2:]), flush=True)
        if subprocess.run(cmd).returncode:
            failed.append(name)
    print("failed:", failed or "none")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
