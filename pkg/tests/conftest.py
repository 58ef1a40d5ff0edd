from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from causalfair.dataset import ColumnSpec, Dataset, SfmRoles, load_csv
from causalfair.pipeline import AnalysisConfig, load_dataset

DATA = Path(__file__).parent / "data"

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status", "occupation",
    "relationship", "race", "sex", "capital-gain", "capital-loss", "hours-per-week", "native-country", "income",
]
RELATIONSHIP = {
    "Husband": "husband",
    "Wife": "wife",
    "Not-in-family": "no-family",
    "Own-child": "own-child",
    "Unmarried": "unmarried",
    "Other-relative": "others",
}
RACE = {
    "White": "Caucasian",
    "Black": "African-American",
    "Asian-Pac-Islander": "Asian-American",
    "Amer-Indian-Eskimo": "Indigenous",
    "Other": "Others",
}


def _adult_frame() -> pd.DataFrame | None:
    files = [DATA / "adult.data.gz", DATA / "adult.test.gz"]
    if not all(f.exists() for f in files):
        return None
    frames = [
        pd.read_csv(f, header=None, names=ADULT_COLUMNS, skipinitialspace=True, comment="|", dtype=str)
        for f in files
    ]
    df = pd.concat(frames, ignore_index=True)
    df = df.replace("?", "")
    df["income"] = df["income"].str.rstrip(".")
    df["sex"] = df["sex"].str.lower()
    df["relationship"] = df["relationship"].map(RELATIONSHIP)
    df["race"] = df["race"].map(RACE)
    return df.fillna("")


@pytest.fixture(scope="session")
def adult_frame() -> pd.DataFrame:
    df = _adult_frame()
    if df is None:
        pytest.skip("Adult data not available under tests/data; skipping Adult fixtures")
    return df


@pytest.fixture(scope="session")
def adult_csv(adult_frame: pd.DataFrame, tmp_path_factory: pytest.TempPathFactory) -> Path:
    path = tmp_path_factory.mktemp("adult") / "adult.csv"
    adult_frame.to_csv(path, index=False)
    return path


def _student_path() -> Path | None:
    candidates = [DATA / "student-mat.csv"]
    if os.environ.get("CAUSALFAIR_DATA_DIR"):
        candidates.insert(0, Path(os.environ["CAUSALFAIR_DATA_DIR"]) / "student-mat.csv")
    return next((p for p in candidates if p.exists()), None)


@pytest.fixture(scope="session")
def student_csv(tmp_path_factory: pytest.TempPathFactory) -> Path:
    path = _student_path()
    if path is None:
        pytest.skip("student-mat.csv not found (set CAUSALFAIR_DATA_DIR); skipping Student-Mat fixtures")
    frame = pd.read_csv(path, sep=None, engine="python", dtype=str)
    out = tmp_path_factory.mktemp("student") / "student.csv"
    frame.to_csv(out, index=False)
    return out


@pytest.fixture
def toy() -> Dataset:
    return load_csv(DATA / "toy.csv", [ColumnSpec("x"), ColumnSpec("y", "integer")])


@pytest.fixture
def toy_roles() -> SfmRoles:
    return SfmRoles("x", "y", (), (), ("a",), ("b",), 1)


def random_dataset(
    seed: int, n_z: int, n_w: int, n: int = 300, max_card: int = 3, y_card: int = 2, x_card: int = 2
) -> tuple[Dataset, SfmRoles]:
    """Arbitrary (structure-free) categorical data with SFM role names."""
    rng = np.random.default_rng(seed)
    names = [f"z{i}" for i in range(n_z)] + ["x"] + [f"w{i}" for i in range(n_w)] + ["y"]
    cards = [int(rng.integers(2, max_card + 1)) for _ in range(n_z)] + [x_card]
    cards += [int(rng.integers(2, max_card + 1)) for _ in range(n_w)] + [y_card]
    codes = np.column_stack([rng.integers(0, k, size=n) for k in cards])
    # guarantee every state appears at least once
    for j, k in enumerate(cards):
        codes[:k, j] = np.arange(k)
    cols = tuple(ColumnSpec(nm, "integer", tuple(range(k))) for nm, k in zip(names, cards))
    roles = SfmRoles("x", "y", tuple(names[:n_z]), tuple(names[n_z + 1 : n_z + 1 + n_w]), (0,), (1,), 1)
    return Dataset(cols, codes), roles


def adult_config(name: str) -> AnalysisConfig:
    return AnalysisConfig.from_dict(json.loads((DATA / f"adult_{name}.json").read_text()))


def adult_dataset(adult_csv: Path, name: str) -> tuple[Dataset, AnalysisConfig]:
    """Adult rows restricted to the role columns of a stored configuration."""
    cfg = adult_config(name)
    return load_dataset(adult_csv, cfg), cfg
