"""Synthetic EV-crash generator with a planted, analytically known signal.

Labels are drawn from configurable class priors. A documented subset of
columns (intersection relation, first harmful event, age bin, speed
limit bin, day of week, and the two braking-assist flags) carries the
signal: each is sampled from a per-class mixture

    P(v | c) = signal_strength * [v == anchor(feature, c)]
             + (1 - signal_strength) / |categories|

with class-specific anchor categories. All remaining columns are label
independent noise. Because signal features are conditionally independent
given the class and the within-bin numeric materialization is class
free, the Bayes-optimal accuracy is exactly enumerable over the product
of the signal category sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import N_CLASSES
from .errors import ConfigError
from .schema import Column, CrashTable, default_schema

# Anchor for (feature position p, class c) is category (p + c) mod size,
# so any feature with >= 3 categories separates all three classes.
SIGNAL_FEATURES = (
    ("Intrsct_Relat_ID",
     ("INTERSECTION", "NON-INTERSECTION", "DRIVEWAY", "INTERSECTION-RELATED")),
    ("FHE_Collsn_ID",
     ("REAR-END", "ANGLE", "SIDESWIPE", "HEAD-ON", "FIXED-OBJECT")),
    ("Prsn_Age", ("<=30", "31-60", ">60")),
    ("Crash_Speed_Limit", ("<=30", "35-50", "55-65", ">=70")),
    ("Day_of_Week", ("SUN", "MON", "TUE", "WED", "THU", "FRI", "SAT")),
    ("HasAutomaticBrakingSystem", ("Y", "N")),
    ("HasAutomaticEmergencyBrakingSystem", ("Y", "N")),
)

SIGNAL_FEATURE_NAMES = tuple(name for name, _ in SIGNAL_FEATURES)

# Numeric materialization of binned signal values; the within-bin draw
# is label independent so it adds no class information.
_AGE_RANGES = {"<=30": (16, 30), "31-60": (31, 60), ">60": (61, 90)}
_SPEED_CHOICES = {
    "<=30": (20, 25, 30),
    "35-50": (35, 40, 45, 50),
    "55-65": (55, 60, 65),
    ">=70": (70, 75),
}

# Label-independent noise columns: (tokens, probabilities).
_NOISE_CATEGORICAL = {
    "Prsn_Gndr_ID": (("MALE", "FEMALE", "UNKNOWN"), (0.55, 0.43, 0.02)),
    "Prsn_Rest_ID": (
        ("SHOULDER & LAP BELT", "NONE", "CHILD SEAT", "UNKNOWN"),
        (0.90, 0.05, 0.03, 0.02),
    ),
    "Veh_Make_ID": (
        ("TESLA", "CHEVROLET", "NISSAN", "FORD", "BMW", "HYUNDAI", "KIA", "RIVIAN"),
        (0.45, 0.12, 0.10, 0.08, 0.07, 0.07, 0.06, 0.05),
    ),
    "Veh_Body_Styl_ID": (
        ("PASSENGER CAR, 4-DOOR", "SPORT UTILITY VEHICLE",
         "PASSENGER CAR, 2-DOOR", "PICKUP", "TRUCK"),
        (0.50, 0.30, 0.10, 0.07, 0.03),
    ),
    "Wthr_Cond_ID": (
        ("CLEAR", "CLOUDY", "RAIN", "SNOW", "FOG", "SLEET/HAIL"),
        (0.60, 0.20, 0.12, 0.03, 0.03, 0.02),
    ),
    "Light_Cond_ID": (
        ("DAYLIGHT", "DARK, LIGHTED", "DARK, NOT LIGHTED", "DUSK", "DAWN"),
        (0.65, 0.15, 0.10, 0.05, 0.05),
    ),
    "Surf_Cond_ID": (
        ("DRY", "WET", "GRAVEL", "SNOW", "ICE"),
        (0.75, 0.15, 0.04, 0.03, 0.03),
    ),
    "Road_Algn_ID": (
        ("STRAIGHT, LEVEL", "STRAIGHT, GRADE", "CURVE, LEVEL", "CURVE, GRADE"),
        (0.70, 0.12, 0.12, 0.06),
    ),
    "Harm_Evnt_ID": (
        ("MOTOR VEHICLE IN TRANSPORT", "FIXED OBJECT", "PEDESTRIAN",
         "PARKED CAR", "OTHER"),
        (0.70, 0.15, 0.05, 0.05, 0.05),
    ),
}

# Raw KABCO sub-codes per three-class label.
_KABCO_EMISSION = {0: (("K", "A"), (0.3, 0.7)), 1: (("B", "C"), (0.45, 0.55)),
                  2: (("O",), (1.0,))}

# Fraction of cells blanked in these noise columns to exercise imputation.
_MISSING_RATE = 0.02
_MISSING_COLUMNS = ("Prsn_Gndr_ID", "Veh_Mod_Year")


@dataclass(frozen=True)
class GenConfig:
    n_rows: int
    class_priors: tuple = (0.05, 0.25, 0.70)
    signal_strength: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1:
            raise ConfigError("n_rows must be >= 1")
        priors = tuple(float(p) for p in self.class_priors)
        if len(priors) != N_CLASSES or min(priors) < 0:
            raise ConfigError("class_priors must be 3 nonnegative values")
        if abs(sum(priors) - 1.0) > 1e-12:
            raise ConfigError("class_priors must sum to 1 within 1e-12")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ConfigError("signal_strength must lie in [0, 1]")
        object.__setattr__(self, "class_priors", priors)


@dataclass
class GenResult:
    table: CrashTable
    bayes_accuracy: float
    config: GenConfig


def _anchor(position: int, c: int, size: int) -> int:
    return (position + c) % size


def class_conditionals(signal_strength: float):
    """Per signal feature, the (n_classes, n_categories) distribution."""
    s = signal_strength
    dists = []
    for p, (_, cats) in enumerate(SIGNAL_FEATURES):
        V = len(cats)
        P = np.full((N_CLASSES, V), (1.0 - s) / V)
        for c in range(N_CLASSES):
            P[c, _anchor(p, c, V)] += s
        dists.append(P)
    return dists


def bayes_accuracy(priors, signal_strength: float) -> float:
    """Exact accuracy of the Bayes rule, enumerated over the signal space."""
    joint = np.asarray(priors, dtype=np.float64)[:, None]
    for P in class_conditionals(signal_strength):
        joint = np.einsum("ck,cv->ckv", joint, P).reshape(N_CLASSES, -1)
    return float(joint.max(axis=0).sum())


def calibrate_signal_strength(priors, target_accuracy: float, tol=1e-9) -> float:
    """Signal strength whose analytic Bayes accuracy equals the target."""
    lo, hi = 0.0, 1.0
    f_lo, f_hi = bayes_accuracy(priors, lo), bayes_accuracy(priors, hi)
    if not f_lo <= target_accuracy <= f_hi:
        raise ConfigError(
            f"target accuracy {target_accuracy} outside attainable "
            f"[{f_lo:.4f}, {f_hi:.4f}]"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bayes_accuracy(priors, mid) < target_accuracy:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _sample_signal(rng, y, position, categories, s):
    n = y.size
    V = len(categories)
    anchors = np.array([_anchor(position, c, V) for c in range(N_CLASSES)])
    take_anchor = rng.random(n) < s
    base = rng.integers(0, V, size=n)
    return np.where(take_anchor, anchors[y], base)


def generate_ev_crashes(cfg: GenConfig) -> GenResult:
    """Emit a reference-schema CrashTable with a known Bayes accuracy."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed))
    n = cfg.n_rows
    y = rng.choice(N_CLASSES, size=n, p=np.asarray(cfg.class_priors))
    signal_tokens = {}
    for p, (name, cats) in enumerate(SIGNAL_FEATURES):
        idx = _sample_signal(rng, y, p, cats, cfg.signal_strength)
        signal_tokens[name] = [cats[i] for i in idx]

    none_missing = np.zeros(n, dtype=bool)
    built = {}

    # numeric materialization of the binned signal values
    age = np.empty(n, dtype=np.float64)
    for lab, (lo, hi) in _AGE_RANGES.items():
        mask = np.array([t == lab for t in signal_tokens["Prsn_Age"]])
        age[mask] = rng.integers(lo, hi + 1, size=int(mask.sum()))
    built["Prsn_Age"] = Column("Prsn_Age", "numeric", [float(v) for v in age],
                               none_missing)
    speed = np.empty(n, dtype=np.float64)
    for lab, choices in _SPEED_CHOICES.items():
        mask = np.array([t == lab for t in signal_tokens["Crash_Speed_Limit"]])
        speed[mask] = rng.choice(choices, size=int(mask.sum()))
    built["Crash_Speed_Limit"] = Column(
        "Crash_Speed_Limit", "numeric", [float(v) for v in speed], none_missing
    )
    for name in ("Intrsct_Relat_ID", "FHE_Collsn_ID", "Day_of_Week",
                 "HasAutomaticBrakingSystem", "HasAutomaticEmergencyBrakingSystem"):
        built[name] = Column(name, "categorical", signal_tokens[name], none_missing)

    for name, (tokens, probs) in _NOISE_CATEGORICAL.items():
        draw = rng.choice(len(tokens), size=n, p=np.asarray(probs))
        built[name] = Column(name, "categorical", [tokens[i] for i in draw],
                             none_missing)
    built["Veh_Mod_Year"] = Column(
        "Veh_Mod_Year", "numeric",
        [float(v) for v in rng.integers(2013, 2024, size=n)], none_missing
    )
    built["Crash_Year"] = Column(
        "Crash_Year", "numeric",
        [float(v) for v in rng.integers(2017, 2024, size=n)], none_missing
    )
    built["IsElectric"] = Column("IsElectric", "categorical", ["True"] * n,
                                 none_missing)

    sev = [None] * n
    for c, (codes, probs) in _KABCO_EMISSION.items():
        mask = np.flatnonzero(y == c)
        draw = rng.choice(len(codes), size=mask.size, p=np.asarray(probs))
        for i, j in zip(mask, draw):
            sev[i] = codes[j]
    built["Prsn_Injry_Sev_ID"] = Column("Prsn_Injry_Sev_ID", "categorical", sev,
                                        none_missing)

    for name in _MISSING_COLUMNS:
        col = built[name]
        blank = rng.random(n) < _MISSING_RATE
        values = list(col.values)
        for i in np.flatnonzero(blank):
            values[i] = "" if col.kind == "categorical" else math.nan
        built[name] = Column(name, col.kind, values, blank)

    columns = [built[s.name] for s in default_schema()]
    return GenResult(
        table=CrashTable(columns),
        bayes_accuracy=bayes_accuracy(cfg.class_priors, cfg.signal_strength),
        config=cfg,
    )


def plugin_accuracy(cfg: GenConfig, n_samples: int, seed: int = 0) -> float:
    """Empirical accuracy of the plug-in Bayes rule on fresh signal draws."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    y = rng.choice(N_CLASSES, size=n_samples, p=np.asarray(cfg.class_priors))
    dists = class_conditionals(cfg.signal_strength)
    log_post = np.tile(np.log(np.asarray(cfg.class_priors)), (n_samples, 1))
    for p, (name, cats) in enumerate(SIGNAL_FEATURES):
        idx = _sample_signal(rng, y, p, cats, cfg.signal_strength)
        log_post += np.log(dists[p][:, idx]).T
    return float(np.mean(np.argmax(log_post, axis=1) == y))
