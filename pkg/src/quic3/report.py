"""Benchmark runner: ``quic3-bench DIR [--qgen off both] [--csv out.csv] [--plot out.png]``.

Every problem file in ``DIR`` is run once per qgen mode.  One delimited
line per run goes to stdout (and to ``--csv``); ``--plot`` renders lemma
counts and run times per problem to an image file.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Optional

from .engine import QGEN_MODES, EngineConfig, run
from .problem import load_problem
from .smt import make_backend

FIELDS = ("problem", "qgen", "verdict", "depth", "lemmas", "inv", "time_s", "expected")
SUFFIXES = (".qtr", ".smt2")


def expected_verdict(path: Path) -> Optional[str]:
    side = path.with_suffix(".expected")
    if side.exists():
        return side.read_text().split()[0]
    return None


def problem_files(root: Path) -> list[Path]:
    return sorted(p for p in root.rglob("*") if p.suffix in SUFFIXES)


def run_suite(files, modes, max_depth: int, backend: str = "external", timeout: float = 10.0) -> list[dict]:
    rows = []
    for path in files:
        problem = load_problem(path)
        for mode in modes:
            solver = make_backend(backend, timeout)
            try:
                v, _ = run(problem, EngineConfig(max_depth=max_depth, qgen=mode), solver)
            finally:
                if hasattr(solver, "close"):
                    solver.close()
            st = v.stats
            rows.append({"problem": path.stem, "qgen": mode, "verdict": v.name, "depth": st.depth,
                         "lemmas": st.lemmas, "inv": "" if st.inv is None else st.inv,
                         "time_s": round(st.time_s, 3), "expected": expected_verdict(path) or ""})
    return rows


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def plot(rows, out: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    problems = list(dict.fromkeys(r["problem"] for r in rows))
    modes = list(dict.fromkeys(r["qgen"] for r in rows))
    fig, axes = plt.subplots(1, 2, figsize=(max(6, 1.2 * len(problems) + 3), 4))
    width = 0.8 / max(1, len(modes))
    for k, mode in enumerate(modes):
        by = {r["problem"]: r for r in rows if r["qgen"] == mode}
        xs = [p + k * width for p in range(len(problems))]
        axes[0].bar(xs, [by[p]["lemmas"] if p in by else 0 for p in problems], width, label=mode)
        axes[1].bar(xs, [by[p]["time_s"] if p in by else 0 for p in problems], width, label=mode)
    for ax, title in zip(axes, ("lemmas", "time (s)")):
        ax.set_title(title)
        ax.set_xticks([p + 0.4 - width / 2 for p in range(len(problems))])
        ax.set_xticklabels(problems, rotation=45, ha="right", fontsize=8)
        ax.legend()
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)
    return out


def main(argv: Optional[list] = None) -> int:
    ap = argparse.ArgumentParser(prog="quic3-bench", description="Run a directory of problems.")
    ap.add_argument("dir", type=Path)
    ap.add_argument("--qgen", nargs="+", choices=QGEN_MODES, default=["off", "both"])
    ap.add_argument("--max-depth", type=int, default=30)
    ap.add_argument("--backend", default="external")
    ap.add_argument("--timeout", type=float, default=10.0)
    ap.add_argument("--csv", type=Path)
    ap.add_argument("--plot", type=Path)
    args = ap.parse_args(argv)
    files = problem_files(args.dir)
    if not files:
        print(f"error: no problem files under {args.dir}", file=sys.stderr)
        return 3
    rows = run_suite(files, args.qgen, args.max_depth, args.backend, args.timeout)
    text = to_csv(rows)
    sys.stdout.write(text)
    if args.csv:
        args.csv.write_text(text)
    if args.plot:
        plot(rows, args.plot)
    mismatched = [r for r in rows if r["expected"] and r["verdict"] != "unknown" and r["verdict"] != r["expected"]]
    return 1 if mismatched else 0


if __name__ == "__main__":
    sys.exit(main())
