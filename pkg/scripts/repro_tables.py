"""Write all reproduced tables to a directory (default: repro_out)."""

import argparse

from tontine.repro import reproduce

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("outdir", nargs="?", default="repro_out")
parser.add_argument("--paths", type=int, default=10_000)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()
for path in reproduce(args.outdir, args.paths, args.seed):
    print(path)
