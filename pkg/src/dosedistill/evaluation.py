"""Accuracy metrics, the dose safety window, and the multi-split study.

The safety window accepts a predicted weekly dose within 20% of the
clinically deduced one, boundary inclusive. Above it is an over-prescription
(bleeding risk); below it an under-prescription (clot/stroke risk).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .dataset import Cohort, FeatureCatalog, RawRecord, split_cohorts
from .models import fit_least_squares, train_mlp
from .profiles import Profile, ProfileCatalog

if TYPE_CHECKING:  # pragma: no cover
    from .distillation import DistillationConfig

SAFETY_MARGIN = 0.2
SAFETY_MARGIN_LOW = 1.0 - SAFETY_MARGIN
SAFETY_MARGIN_HIGH = 1.0 + SAFETY_MARGIN

# FDA-guide side-effect labels for out-of-window errors, for report text only.
RISK_LABELS = {
    "under": "under-prescription: clot, embolism, stroke risk",
    "over": "over-prescription: bleeding risk",
}


class DoseBand(Enum):
    UNDER = "under"
    WITHIN_WINDOW = "within_window"
    OVER = "over"


def classify_dose(pred: float, truth: float) -> DoseBand:
    """Place one prediction relative to the 20% safety window.

    Boundary inclusive: exactly 0.8x or 1.2x the true dose counts as within
    the window.
    """
    if truth <= 0:
        raise ValueError(f"true dose must be positive, got {truth}")
    if pred > SAFETY_MARGIN_HIGH * truth:
        return DoseBand.OVER
    if pred < SAFETY_MARGIN_LOW * truth:
        return DoseBand.UNDER
    return DoseBand.WITHIN_WINDOW


@dataclass(frozen=True)
class SafetyPartition:
    """Counts of under / within-window / over predictions."""

    under: int
    within: int
    over: int

    @property
    def n(self) -> int:
        return self.under + self.within + self.over

    @property
    def under_pct(self) -> float:
        return 100.0 * self.under / self.n

    @property
    def within_pct(self) -> float:
        return 100.0 * self.within / self.n

    @property
    def over_pct(self) -> float:
        return 100.0 * self.over / self.n


@dataclass(frozen=True)
class EvalReport:
    """MAE (mg/week), MAPE (%), and the safety partition of one evaluation."""

    mae: float
    mape: float
    n: int
    safety: SafetyPartition

    def __post_init__(self):
        if self.n < 1 or self.safety.n != self.n:
            raise ValueError("report size and safety counts disagree")


def mae(preds: Sequence[float], truths: Sequence[float]) -> float:
    preds = np.asarray(preds, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if preds.shape != truths.shape or preds.ndim != 1:
        raise ValueError(f"shape mismatch: {preds.shape} vs {truths.shape}")
    if preds.size == 0:
        raise ValueError("empty input")
    return float(np.mean(np.abs(preds - truths)))


def mape(preds: Sequence[float], truths: Sequence[float]) -> float:
    """Mean absolute percentage error, in percent. Requires positive truths."""
    preds = np.asarray(preds, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if preds.shape != truths.shape or preds.ndim != 1:
        raise ValueError(f"shape mismatch: {preds.shape} vs {truths.shape}")
    if preds.size == 0:
        raise ValueError("empty input")
    if np.any(truths <= 0):
        raise ValueError("MAPE requires all true doses to be positive")
    return float(100.0 * np.mean(np.abs(preds - truths) / truths))


def evaluate_predictions(preds, truths) -> EvalReport:
    preds = np.asarray(preds, dtype=float)
    truths = np.asarray(truths, dtype=float)
    over = preds > SAFETY_MARGIN_HIGH * truths
    under = preds < SAFETY_MARGIN_LOW * truths
    safety = SafetyPartition(
        under=int(under.sum()),
        within=int(len(preds) - over.sum() - under.sum()),
        over=int(over.sum()),
    )
    return EvalReport(mae(preds, truths), mape(preds, truths), len(preds), safety)


def evaluate_model(model, valid: Cohort, profile: Profile) -> EvalReport:
    """Mask each validation record through the profile, predict, aggregate."""
    visible = list(profile.visible_features)
    if model.dim != len(visible):
        raise ValueError(
            f"model takes {model.dim} features but profile {profile.name!r} "
            f"discloses {len(visible)}"
        )
    preds = model.predict(valid.X[:, visible])
    return evaluate_predictions(preds, valid.y)


@dataclass(frozen=True)
class StudyResult:
    """Per-split reports for one (model kind, profile) arm, with aggregates."""

    model: str
    profile: str
    per_run: tuple[EvalReport, ...]

    def _agg(self, pick) -> tuple[float, float]:
        vals = np.array([pick(r) for r in self.per_run])
        return float(vals.mean()), float(vals.std())

    @property
    def mae_mean_std(self) -> tuple[float, float]:
        return self._agg(lambda r: r.mae)

    @property
    def mape_mean_std(self) -> tuple[float, float]:
        return self._agg(lambda r: r.mape)

    @property
    def under_mean_std(self) -> tuple[float, float]:
        return self._agg(lambda r: r.safety.under_pct)

    @property
    def within_mean_std(self) -> tuple[float, float]:
        return self._agg(lambda r: r.safety.within_pct)

    @property
    def over_mean_std(self) -> tuple[float, float]:
        return self._agg(lambda r: r.safety.over_pct)


def run_study(
    records: Sequence[RawRecord],
    catalog: FeatureCatalog,
    profile_catalog: ProfileCatalog,
    config: "DistillationConfig",
    runs: int = 10,
    base_seed: int = 0,
    ratio: float = 0.65,
    jobs: int = 1,
) -> dict[tuple[str, str], StudyResult]:
    """Repeated-split comparison of all four arms.

    Per run j (split seed ``base_seed + j``): a non-redacted linear model and
    a non-redacted MLP on the public profile, then per profile the
    partially-redacted model (lambda 0) and the best-lambda imitation model,
    with the best lambda re-selected on that run's validation split.
    Profiles that redact nothing reuse the non-redacted MLP's report for
    both arms.
    """
    from .distillation import sweep_lambda

    if runs < 1:
        raise ValueError("need at least one run")
    grid = config.lambda_grid
    if grid[0] != 0.0:
        config = replace(config, lambda_grid=(0.0, *grid))

    public = profile_catalog.public
    reports: dict[tuple[str, str], list[EvalReport]] = {}

    def add(kind: str, profile_name: str, report: EvalReport) -> None:
        reports.setdefault((kind, profile_name), []).append(report)

    for j in range(runs):
        seed_j = base_seed + j
        train, valid = split_cohorts(records, catalog, ratio, seed_j)
        run_config = replace(config, train=replace(config.train, seed=seed_j))

        linear = fit_least_squares(train.X, train.y)
        add("linear", public.name, evaluate_model(linear, valid, public))
        mlp = train_mlp(train.X, train.y, run_config.train)
        mlp_report = evaluate_model(mlp, valid, public)
        add("mlp", public.name, mlp_report)

        for profile in profile_catalog:
            if profile.is_public:
                add("partial", profile.name, mlp_report)
                add("distilled", profile.name, mlp_report)
                continue
            points, best = sweep_lambda(train, valid, profile, run_config, jobs=jobs)
            add("partial", profile.name, points[0][1])
            add("distilled", profile.name, best.metrics)

    return {
        (kind, name): StudyResult(kind, name, tuple(reps))
        for (kind, name), reps in reports.items()
    }
