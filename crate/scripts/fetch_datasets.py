#!/usr/bin/env python3
"""Build data/compas.csv and data/adult.csv from the copies bundled in the
`responsibly` wheel on PyPI.

    python3 scripts/fetch_datasets.py [--wheel path/to/responsibly.whl]

Compas: ProPublica two-year file, standard screening filters, restricted to
African-American and Caucasian defendants.
Adult: UCI training split as distributed, raw tokens kept ('?' marks missing).
"""
import argparse
import csv
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA = os.path.join(ROOT, "data")

COMPAS_COLUMNS = [
    "sex", "age", "race", "juv_fel_count", "juv_misd_count",
    "juv_other_count", "priors_count", "c_charge_degree", "two_year_recid",
]

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]


def find_wheel(explicit):
    if explicit:
        return explicit
    tmp = tempfile.mkdtemp()
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", "--no-deps",
         "responsibly==0.1.2", "-d", tmp],
    )
    return glob.glob(os.path.join(tmp, "responsibly-*.whl"))[0]


def write_compas(z):
    raw = z.read("responsibly/dataset/compas/compas-scores-two-years.csv")
    reader = csv.DictReader(io.StringIO(raw.decode("utf-8")))
    out_path = os.path.join(DATA, "compas.csv")
    kept = 0
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COMPAS_COLUMNS)
        for row in reader:
            if row["days_b_screening_arrest"] == "":
                continue
            if not -30 <= int(row["days_b_screening_arrest"]) <= 30:
                continue
            if row["is_recid"] == "-1" or row["c_charge_degree"] == "O":
                continue
            if row["score_text"] == "N/A":
                continue
            if row["race"] not in ("African-American", "Caucasian"):
                continue
            w.writerow([row[c] for c in COMPAS_COLUMNS])
            kept += 1
    print(f"compas: {kept} rows -> {out_path}")


def write_adult(z):
    raw = z.read("responsibly/dataset/adult/adult.data").decode("utf-8")
    out_path = os.path.join(DATA, "adult.csv")
    kept = 0
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(ADULT_COLUMNS)
        for line in raw.splitlines():
            fields = [t.strip() for t in line.split(",")]
            if len(fields) != len(ADULT_COLUMNS):
                continue
            w.writerow(fields)
            kept += 1
    print(f"adult: {kept} rows -> {out_path}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel")
    args = ap.parse_args()
    os.makedirs(DATA, exist_ok=True)
    with zipfile.ZipFile(find_wheel(args.wheel)) as z:
        write_compas(z)
        write_adult(z)


if __name__ == "__main__":
    main()
