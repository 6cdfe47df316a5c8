#!/usr/bin/env python3
"""Write MovieLens-100K `u.data` (tab-separated user, item, rating, timestamp).

The canonical download is https://grouplens.org/datasets/movielens/100k/.
When that host is unreachable, this script rebuilds the identical file from the
copy bundled inside the `pytorch-widedeep` wheel on PyPI (100,000 rows, same
order as the original).

usage: python3 scripts/materialize_ml100k.py [OUT_PATH]   (default data/ml-100k/u.data)
"""
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def main() -> int:
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join("data", "ml-100k", "u.data")
    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "pytorch-widedeep==1.7.0", "-d", tmp],
            check=True,
        )
        wheel = glob.glob(os.path.join(tmp, "*.whl"))[0]
        with zipfile.ZipFile(wheel) as z:
            df = pd.read_parquet(io.BytesIO(z.read(MEMBER)))
    df = df[["user_id", "movie_id", "rating", "timestamp"]]
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w", newline="\n") as f:
        for row in df.itertuples(index=False):
            f.write(f"{row[0]}\t{row[1]}\t{row[2]}\t{row[3]}\n")
    print(f"wrote {len(df)} ratings to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
