#!/usr/bin/env python3
"""Regenerate the CSV datasets bundled under data/.

Wine, breast-cancer, and 8x8 digits come from scikit-learn's built-in copies
of the classic UCI tables.  The heart table is synthesized here with a fixed
seed: 303 rows x 13 clinical-style features with a planted logistic rule, so
the distillation benchmark has a UCI-shaped binary task without shipping
third-party data.
"""

from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.datasets import load_breast_cancer, load_digits, load_wine

OUT = Path(__file__).resolve().parent.parent / "data"


def write(df: pd.DataFrame, name: str) -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    path = OUT / name
    df.to_csv(path, index=False)
    print(f"wrote {path} ({len(df)} rows, {len(df.columns)} cols)")


def sklearn_table(bunch, label_names=None) -> pd.DataFrame:
    df = pd.DataFrame(bunch.data, columns=list(bunch.feature_names))
    labels = bunch.target
    if label_names is not None:
        labels = [label_names[t] for t in labels]
    df["label"] = labels
    return df


def digits_table() -> pd.DataFrame:
    bunch = load_digits()
    cols = [f"p{i}" for i in range(bunch.data.shape[1])]
    df = pd.DataFrame(bunch.data.astype(int), columns=cols)
    df["label"] = bunch.target
    return df


def heart_table(n: int = 303, seed: int = 20260825) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    age = np.clip(np.rint(rng.normal(54, 9, n)), 29, 77).astype(int)
    sex = rng.binomial(1, 0.68, n)
    cp = rng.choice(4, n, p=[0.47, 0.17, 0.28, 0.08])
    trestbps = np.clip(np.rint(rng.normal(131, 17, n)), 94, 200).astype(int)
    chol = np.clip(np.rint(rng.normal(246, 51, n)), 126, 564).astype(int)
    fbs = rng.binomial(1, 0.15, n)
    restecg = rng.choice(3, n, p=[0.5, 0.47, 0.03])
    thalach = np.clip(np.rint(rng.normal(150, 22, n)), 71, 202).astype(int)
    exang = rng.binomial(1, 0.33, n)
    oldpeak = np.round(np.clip(rng.exponential(1.04, n), 0.0, 6.2), 1)
    slope = rng.choice(3, n, p=[0.21, 0.46, 0.33])
    ca = rng.choice(5, n, p=[0.57, 0.21, 0.12, 0.07, 0.03])
    thal = rng.choice(4, n, p=[0.02, 0.55, 0.06, 0.37])

    # Signal lives mostly in the coarse categorical columns, mirroring how
    # the classic Cleveland table behaves for axis-aligned classifiers.
    logit = (
        -2.2
        + 0.02 * (age - 54)
        + 0.5 * sex
        + 1.1 * (cp == 0)
        - 0.012 * (thalach - 150)
        + 0.9 * exang
        + 0.5 * oldpeak
        + 1.2 * (ca >= 1)
        + 0.3 * (ca >= 2)
        + 1.2 * (thal == 3)
        + 0.45 * (slope == 2)
        + rng.normal(0.0, 0.35, n)
    )
    label = (logit > 0).astype(int)

    return pd.DataFrame(
        {
            "age": age,
            "sex": sex,
            "cp": cp,
            "trestbps": trestbps,
            "chol": chol,
            "fbs": fbs,
            "restecg": restecg,
            "thalach": thalach,
            "exang": exang,
            "oldpeak": oldpeak,
            "slope": slope,
            "ca": ca,
            "thal": thal,
            "label": label,
        }
    )


def main() -> None:
    write(sklearn_table(load_wine()), "wine.csv")
    write(sklearn_table(load_breast_cancer()), "cancer.csv")
    write(digits_table(), "digits8x8.csv")
    df = heart_table()
    print(f"heart positives: {df['label'].mean():.3f}")
    write(df, "heart.csv")


if __name__ == "__main__":
    main()
