"""Write a synthetic corpus, mock profile and pipeline config to a directory.

    python3 scripts/make_mock_corpus.py out/mock --n 1000 --seed 0
"""

import argparse
from pathlib import Path

from artcontext.config import SAMPLE_CONFIG
from artcontext.synthetic import make_corpus, write_corpus_files


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    corpus = make_corpus(args.n, seed=args.seed)
    files = write_corpus_files(corpus, out)
    (out / "config.yaml").write_text(SAMPLE_CONFIG, encoding="utf-8")
    print(f"{len(corpus.paintings)} paintings written; metadata {files['metadata']}; config {out / 'config.yaml'}")


if __name__ == "__main__":
    main()
