"""Rebuild the raw MovieLens-100K files (u.data, u.item, u.user).

The GroupLens host is not always reachable, so this pulls the three tables
from the ``pytorch-widedeep`` wheel on PyPI (which ships them as parquet)
and writes them back out in the original ML-100K text layout.

    python scripts/fetch_ml100k.py data/ml-100k
"""
import argparse
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile

import pandas as pd

WHEEL = "pytorch-widedeep==1.7.0"
MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_{}.parquet.brotli"


def _read_tables(wheel_path):
    with zipfile.ZipFile(wheel_path) as zf:
        return {
            name: pd.read_parquet(io.BytesIO(zf.read(MEMBER.format(name))))
            for name in ("data", "items", "users")
        }


def write_ml100k(tables, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    data = tables["data"]
    with open(os.path.join(out_dir, "u.data"), "w") as fh:
        for row in data.itertuples(index=False):
            fh.write(f"{row.user_id}\t{row.movie_id}\t{row.rating}\t{row.timestamp}\n")

    items = tables["items"]
    genre_cols = list(items.columns[5:])
    assert len(genre_cols) == 19, genre_cols
    with open(os.path.join(out_dir, "u.item"), "w", encoding="latin-1") as fh:
        for _, row in items.iterrows():
            release = "" if pd.isna(row["release_date"]) else row["release_date"]
            url = "" if pd.isna(row["IMDb_URL"]) else row["IMDb_URL"]
            flags = "|".join(str(int(row[c])) for c in genre_cols)
            fh.write(f"{row['movie_id']}|{row['movie_title']}|{release}||{url}|{flags}\n")

    with open(os.path.join(out_dir, "u.genre"), "w") as fh:
        for idx, name in enumerate(genre_cols):
            fh.write(f"{name}|{idx}\n")

    users = tables["users"]
    with open(os.path.join(out_dir, "u.user"), "w") as fh:
        for row in users.itertuples(index=False):
            fh.write(f"{row.user_id}|{row.age}|{row.gender}|{row.occupation}|{row.zip_code}\n")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", nargs="?", default="data/ml-100k")
    parser.add_argument("--wheel", help="use an already downloaded wheel")
    args = parser.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.run(
                [sys.executable, "-m", "pip", "download", "--no-deps", "-q", WHEEL, "-d", tmp],
                check=True,
            )
            wheel = glob.glob(os.path.join(tmp, "*.whl"))[0]
        write_ml100k(_read_tables(wheel), args.out_dir)
    print(f"wrote ML-100K files to {args.out_dir}")


if __name__ == "__main__":
    main()
