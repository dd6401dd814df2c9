"""
Reading analysis data from CSV and expanding covariates into a design matrix.
"""

__all__ = [
    "ColumnRoles",
    "ExpansionSpec",
    "expand_covariates",
    "ingest",
    "read_csv",
    "read_table",
]

import itertools
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from glmfit import Dataset, DesignMatrix
from hserrors import ConfigError, DataError
from hslogger import logger


@dataclass(frozen=True)
class ColumnRoles:
    treatment: str
    outcome: str
    numeric: tuple = ()
    categorical: tuple = ()
    binary: tuple = ()

    def __post_init__(self):
        for name in ("numeric", "categorical", "binary"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.treatment or not self.outcome:
            raise ConfigError("Treatment and outcome columns must be named")
        used = self.used
        repeated = sorted(name for name, count in Counter(used).items() if count > 1)
        if repeated:
            raise ConfigError(
                f"Columns assigned more than one role: {', '.join(repeated)}"
            )

    @property
    def covariates(self):
        return self.numeric + self.categorical + self.binary

    @property
    def used(self):
        return (self.treatment, self.outcome) + self.covariates


@dataclass(frozen=True)
class ExpansionSpec:
    """
    Covariate expansion rule.

    `degree` is the largest total degree of numeric monomials. With
    `interactions` = 2, numeric cross products up to `degree`, numeric by
    dummy and dummy by dummy products (across different variables) are added.
    Variables in `power_interactions` also get their dummies multiplied by the
    squared numerics.
    """

    degree: int = 1
    interactions: int = 1
    power_interactions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "power_interactions", tuple(self.power_interactions))
        if self.degree not in (1, 2, 3):
            raise ConfigError(f"Expansion degree must be 1, 2 or 3, got {self.degree}")
        if self.interactions not in (1, 2):
            raise ConfigError(
                f"Interaction order must be 1 or 2, got {self.interactions}"
            )


def read_csv(path):
    """Read a UTF-8 CSV with a header row, mapping read failures to DataError."""
    try:
        return pd.read_csv(Path(path), encoding="utf-8")
    except FileNotFoundError as e:
        raise DataError(f"Input file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise DataError(f"Input file is empty: {path}") from e
    except pd.errors.ParserError as e:
        raise DataError(f"Malformed CSV in {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise DataError(f"Input file is not valid UTF-8: {path}") from e
    except OSError as e:
        raise DataError(f"Failed to read {path}: {e}") from e


def _zero_one(frame, column, what):
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = frame[column][values.isna() | ~values.isin([0, 1])]
    if len(bad):
        shown = ", ".join(sorted({str(v) for v in bad.unique()})[:5])
        raise DataError(f"{what} column '{column}' must be 0/1; found {shown}")
    return values.astype(float)


def read_table(path, roles: ColumnRoles) -> pd.DataFrame:
    """
    Load the columns named in `roles`, dropping rows with missing values.

    Treatment and binary columns are checked to be 0/1, numeric columns to
    be numeric, and categorical columns are read as strings.
    """
    frame = read_csv(path)
    if frame.empty:
        raise DataError(f"Input file has no data rows: {path}")
    missing = [column for column in roles.used if column not in frame.columns]
    if missing:
        raise DataError(f"Input file lacks columns: {', '.join(missing)}")

    frame = frame.loc[:, list(roles.used)]
    complete = frame.notna().all(axis=1)
    dropped = int((~complete).sum())
    if dropped:
        logger.warning(f"Dropped {dropped} rows with missing values in used columns")
        frame = frame.loc[complete].reset_index(drop=True)
    if frame.empty:
        raise DataError("No complete rows remain after dropping missing values")

    frame[roles.treatment] = _zero_one(frame, roles.treatment, "Treatment")
    for column in roles.binary:
        frame[column] = _zero_one(frame, column, "Binary")
    for column in (roles.outcome,) + roles.numeric:
        try:
            frame[column] = pd.to_numeric(frame[column]).astype(float)
        except (TypeError, ValueError) as e:
            raise DataError(f"Column '{column}' must be numeric: {e}") from e
    for column in roles.categorical:
        frame[column] = frame[column].astype(str)
    logger.info(
        f"Read {len(frame)} rows and {len(roles.covariates)} covariates from {path}"
    )
    return frame


def _monomial_name(variables, exponents):
    return ":".join(
        name if power == 1 else f"{name}^{power}"
        for name, power in zip(variables, exponents)
        if power
    )


def expand_covariates(
    frame: pd.DataFrame, roles: ColumnRoles, spec: ExpansionSpec
) -> DesignMatrix:
    """
    Design matrix without intercept, columns in a fixed order.

    Base numerics, pure powers, numeric cross monomials, dummies, numeric by
    dummy products, dummy by dummy products of different variables and
    squared numerics by dummies of the variables in `power_interactions`.
    Categorical dummies drop the lexicographically first level.
    """
    numeric = {name: frame[name].to_numpy(dtype=float) for name in roles.numeric}
    columns = []

    for name in roles.numeric:
        columns.append((name, numeric[name]))
    for power in range(2, spec.degree + 1):
        for name in roles.numeric:
            columns.append((f"{name}^{power}", numeric[name] ** power))
    if spec.interactions >= 2:
        k = len(roles.numeric)
        for total in range(2, spec.degree + 1):
            for combo in itertools.combinations_with_replacement(range(k), total):
                exponents = [combo.count(i) for i in range(k)]
                if sum(1 for e in exponents if e) < 2:
                    continue
                values = np.ones(len(frame))
                for i, e in enumerate(exponents):
                    if e:
                        values = values * numeric[roles.numeric[i]] ** e
                columns.append((_monomial_name(roles.numeric, exponents), values))

    dummies = []
    for name in roles.categorical:
        levels = sorted(frame[name].unique())
        if len(levels) < 2:
            logger.warning(
                f"Categorical column '{name}' has a single level and adds no dummies"
            )
        for level in levels[1:]:
            indicator = (frame[name] == level).to_numpy(dtype=float)
            dummies.append((name, f"{name}[{level}]", indicator))
    for name in roles.binary:
        dummies.append((name, name, frame[name].to_numpy(dtype=float)))
    columns.extend((label, values) for _, label, values in dummies)

    if spec.interactions >= 2:
        for name in roles.numeric:
            for _, label, values in dummies:
                columns.append((f"{name}:{label}", numeric[name] * values))
        pairs = itertools.combinations(dummies, 2)
        for (first, label_a, a), (second, label_b, b) in pairs:
            if first != second:
                columns.append((f"{label_a}:{label_b}", a * b))
    if spec.degree >= 2:
        for source, label, values in dummies:
            if source in spec.power_interactions:
                for name in roles.numeric:
                    columns.append((f"{name}^2:{label}", numeric[name] ** 2 * values))

    names = [label for label, _ in columns]
    repeated = sorted(label for label, count in Counter(names).items() if count > 1)
    if repeated:
        raise DataError(f"Expansion generates duplicate columns: {', '.join(repeated)}")
    if not columns:
        raise DataError("Expansion produced no covariate columns")
    values = np.column_stack([values for _, values in columns])
    logger.debug(
        f"Expanded {len(roles.covariates)} covariates into {len(names)} columns"
    )
    return DesignMatrix(values, tuple(names))


def ingest(path, config) -> Dataset:
    """Read `path` and build the dataset from `config.roles` and `config.expansion`."""
    frame = read_table(path, config.roles)
    design = expand_covariates(frame, config.roles, config.expansion)
    return Dataset(
        design,
        frame[config.roles.treatment].to_numpy(dtype=float),
        frame[config.roles.outcome].to_numpy(dtype=float),
        label=Path(path).name,
    )
