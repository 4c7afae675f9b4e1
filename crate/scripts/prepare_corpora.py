#!/usr/bin/env python3
"""Convert the raw Adult-Income and ProPublica COMPAS files into the flat CSVs
under data/ that the shipped schemas describe.

Usage:
    python3 scripts/prepare_corpora.py --adult-dir DIR --compas-csv FILE --out data/

DIR must contain the UCI files adult.data and adult.test. Rows with missing
values are dropped, race is collapsed to two groups and native-country is
collapsed to United-States/Other.
"""

import argparse
import os

import pandas as pd

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]

ADULT_KEEP = [
    "age", "workclass", "education", "marital_status", "occupation",
    "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]

COMPAS_KEEP = [
    "sex", "age", "race", "juv_fel_count", "juv_misd_count",
    "juv_other_count", "priors_count", "c_charge_degree", "two_year_recid",
]


def load_adult(adult_dir):
    frames = []
    for name, skip in (("adult.data", 0), ("adult.test", 1)):
        df = pd.read_csv(
            os.path.join(adult_dir, name),
            names=ADULT_COLUMNS,
            skiprows=skip,
            skipinitialspace=True,
            na_values="?",
        )
        frames.append(df)
    df = pd.concat(frames, ignore_index=True)
    df = df.dropna()
    df["income"] = df["income"].str.rstrip(".")
    df["race"] = df["race"].where(df["race"] == "White", "Non-White")
    df["native_country"] = df["native_country"].where(
        df["native_country"] == "United-States", "Other"
    )
    return df[ADULT_KEEP]


def load_compas(path):
    df = pd.read_csv(path)
    df = df[
        (df["days_b_screening_arrest"] <= 30)
        & (df["days_b_screening_arrest"] >= -30)
        & (df["is_recid"] != -1)
        & (df["c_charge_degree"] != "O")
        & (df["score_text"] != "N/A")
    ]
    # the raw file carries priors_count twice; pandas suffixes the second
    df = df.loc[:, ~df.columns.str.endswith(".1")]
    df = df[COMPAS_KEEP].dropna().copy()
    df["race"] = df["race"].where(df["race"] == "Caucasian", "Non-Caucasian")
    df["two_year_recid"] = df["two_year_recid"].map({0: "no", 1: "yes"})
    return df


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--adult-dir", required=True)
    ap.add_argument("--compas-csv", required=True)
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    adult = load_adult(args.adult_dir)
    adult.to_csv(os.path.join(args.out, "adult.csv"), index=False)
    print(f"adult: {len(adult)} rows")
    for col in adult.columns:
        if adult[col].dtype == object:
            print(f"  {col}: {sorted(adult[col].unique())}")

    compas = load_compas(args.compas_csv)
    compas.to_csv(os.path.join(args.out, "compas.csv"), index=False)
    print(f"compas: {len(compas)} rows")
    for col in compas.columns:
        if compas[col].dtype == object:
            print(f"  {col}: {sorted(compas[col].unique())}")


if __name__ == "__main__":
    main()
