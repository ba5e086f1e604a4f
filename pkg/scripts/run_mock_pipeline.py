"""Run every pipeline stage in order against a config, stopping at the first failure.

    python3 scripts/make_mock_corpus.py out/mock
    python3 scripts/run_mock_pipeline.py out/mock/config.yaml
"""

import argparse
import sys
import time

from artcontext.cli import dispatch

STAGES = [
    ["ingest"],
    ["embed", "--space", "a"],
    ["embed", "--space", "c"],
    ["pca"],
    ["distances"],
    ["project2d"],
    ["train-year"],
    ["eval-year"],
    ["keywords"],
    ["trends"],
    ["century-prompts"],
    ["experiment"],
    ["noise-probe"],
    ["report"],
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--from", dest="start", default="ingest", help="first stage to run")
    args = ap.parse_args()
    names = [s[0] for s in STAGES]
    if args.start not in names:
        ap.error(f"unknown stage {args.start}")
    for argv in STAGES[names.index(args.start):]:
        t0 = time.perf_counter()
        code = dispatch(argv[:1] + ["--config", args.config] + argv[1:])
        print(f"# {' '.join(argv)}: exit {code} in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
        if code:
            sys.exit(code)


if __name__ == "__main__":
    main()
