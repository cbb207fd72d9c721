"""Run the full pipeline on the bundled demo corpus and print the headline diagnostics.

    python3 scripts/run_demo.py [--output DIR] [--threads N]
"""

import argparse
import json
import sys
import time
from pathlib import Path

from tracebias.cli import main
from tracebias.synth import SynthConfig, expected_stats


def run(outdir: Path, threads: int) -> dict:
    steps = [["synth", "--demo", "--output", str(outdir)]]
    conf = str(outdir / "run.json")
    for cmd in ("train", "classify", "segment", "analyze"):
        steps.append([cmd, "--config", conf, "--threads", str(threads)])
    for argv in steps:
        start = time.perf_counter()
        code = main(argv)
        print(f"{argv[0]:<9} exit {code}  {time.perf_counter() - start:6.1f} s", file=sys.stderr)
        if code:
            raise SystemExit(code)
    return json.loads((outdir / "report.json").read_text())


def summary(outdir: Path, report: dict) -> dict:
    synth = SynthConfig.from_json(outdir / "synth_config.json")
    ex = expected_stats(synth)
    pooled = report["entangle"]["pooled"]
    low = report["bundle"]["strata"]["strata"][0]
    cv = json.loads((outdir / "cv_report.json").read_text())["cross_validation"]
    return {
        "cv_mean_f1": cv["mean_f1"],
        "p_political": [pooled["p_political"], ex.p_political],
        "p_news": [pooled["p_news"], ex.p_news],
        "p_both": [pooled["p_both"], ex.p_both],
        "single_frame_share": [report["flatten"]["single_frame_share"], ex.political_single_frame_share],
        "count_share_le_10s": [low["count_share"], ex.political_count_share[0]],
        "duration_share_le_10s": [low["duration_share"], ex.political_duration_share[0]],
        "news_vs_political_r": report["entangle"]["news_vs_political_correlation"],
    }


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--output", default="demo_out")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.output)
    rep = run(out, args.threads)
    print("measured vs expected:")
    print(json.dumps(summary(out, rep), indent=2))
