"""Small synthetic CSVs shaped like the public datasets (same headers, fake values)."""

import numpy as np
import pandas as pd


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def gmsc_frame(n=400, seed=0):
    rng = np.random.default_rng(seed)
    d30 = rng.poisson(0.4, n)
    d60 = rng.poisson(0.2, n)
    d90 = rng.poisson(0.2, n)
    util = rng.uniform(0, 1.2, n)
    logit = -2.5 + 0.6 * np.sqrt(d30) + 1.0 * np.sqrt(d60) + 1.4 * np.sqrt(d90) + 1.2 * util
    y = (rng.uniform(size=n) < _sigmoid(logit)).astype(int)
    income = rng.lognormal(8.5, 0.5, n)
    income[rng.choice(n, 5, replace=False)] = np.nan
    return pd.DataFrame(
        {
            "Unnamed: 0": np.arange(1, n + 1),
            "SeriousDlqin2yrs": y,
            "RevolvingUtilizationOfUnsecuredLines": util,
            "age": rng.integers(21, 90, n),
            "NumberOfTime30-59DaysPastDueNotWorse": d30,
            "DebtRatio": rng.uniform(0, 1, n),
            "MonthlyIncome": income,
            "NumberOfOpenCreditLinesAndLoans": rng.integers(0, 20, n),
            "NumberOfTimes90DaysLate": d90,
            "NumberRealEstateLoansOrLines": rng.integers(0, 4, n),
            "NumberOfTime60-89DaysPastDueNotWorse": d60,
            "NumberOfDependents": rng.integers(0, 4, n).astype(float),
        }
    )


def compas_frame(n=300, seed=0):
    rng = np.random.default_rng(seed)
    fel = rng.poisson(0.3, n)
    misd = rng.poisson(0.3, n)
    priors = rng.poisson(2.0, n)
    age = rng.integers(18, 70, n)
    logit = -0.5 + 0.8 * np.sqrt(fel) + 0.4 * np.sqrt(misd) + 0.2 * priors - 0.03 * (age - 35)
    y = (rng.uniform(size=n) < _sigmoid(logit)).astype(int)
    return pd.DataFrame(
        {
            "age": age,
            "juv_fel_count": fel,
            "juv_misd_count": misd,
            "priors_count": priors,
            "charge_id": rng.integers(1, 400, n),
            "charge_degree (misd/fel)": rng.choice(["misd", "fel"], n),
            "race": rng.choice(["a", "b"], n),
            "sex": rng.choice(["Male", "Female"], n),
            "compas_decile_score": rng.integers(1, 11, n),
            "compas_guess": rng.integers(0, 2, n),
            "two_year_recid": y,
        }
    )


def heart_frame(n=200, seed=0):
    rng = np.random.default_rng(seed)
    b = {k: rng.integers(0, 2, n) for k in ("anaemia", "high_blood_pressure", "diabetes", "sex", "smoking")}
    ef = rng.uniform(15, 70, n)
    logit = -1.0 + 0.6 * b["anaemia"] + 0.6 * b["high_blood_pressure"] + 0.5 * b["diabetes"] + 0.2 * b["smoking"] - 0.04 * (ef - 40)
    y = (rng.uniform(size=n) < _sigmoid(logit)).astype(int)
    return pd.DataFrame(
        {
            "age": rng.uniform(40, 95, n),
            "anaemia": b["anaemia"],
            "creatinine_phosphokinase": rng.uniform(20, 3000, n),
            "diabetes": b["diabetes"],
            "ejection_fraction": ef,
            "high_blood_pressure": b["high_blood_pressure"],
            "platelets": rng.uniform(1e5, 5e5, n),
            "serum_creatinine": rng.uniform(0.5, 4, n),
            "serum_sodium": rng.uniform(120, 150, n),
            "sex": b["sex"],
            "smoking": b["smoking"],
            "time": rng.integers(4, 285, n),
            "DEATH_EVENT": y,
        }
    )


FRAMES = {"gmsc": gmsc_frame, "compas": compas_frame, "heart": heart_frame}


def write_csv(tmp_path, name, **kw):
    path = tmp_path / f"{name}.csv"
    FRAMES[name](**kw).to_csv(path, index=False)
    return path
