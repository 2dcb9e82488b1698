"""Versioned JSON serialization for models, catalogs, and bundles.

Parameter arrays are stored as base64 little-endian float64 and scalars as
hex floats, so a save/load round trip is bit-faithful. All JSON is written
with sorted keys and a fixed indent, so identical objects produce identical
bytes.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np

from .dataset import Feature, FeatureCatalog, FeatureCategory, StandardizationParams
from .errors import DataError
from .models import LinearModel, MlpModel, TrainConfig
from .profiles import Profile

FORMAT_VERSION = 1


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).copy()


def encode_scalar(v: float) -> str:
    return float(v).hex()


def decode_scalar(s: str) -> float:
    return float.fromhex(s)


def model_to_obj(model: LinearModel | MlpModel) -> dict:
    if isinstance(model, LinearModel):
        return {
            "kind": "linear",
            "alpha": encode_array(model.alpha),
            "beta": encode_scalar(model.beta),
        }
    if isinstance(model, MlpModel):
        return {
            "kind": "mlp",
            "dim": model.dim,
            "hidden": model.hidden,
            "W1": encode_array(model.W1),
            "b1": encode_array(model.b1),
            "w2": encode_array(model.w2),
            "b2": encode_scalar(model.b2),
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_obj(obj: dict) -> LinearModel | MlpModel:
    kind = obj.get("kind")
    if kind == "linear":
        return LinearModel(decode_array(obj["alpha"]), decode_scalar(obj["beta"]))
    if kind == "mlp":
        return MlpModel(
            decode_array(obj["W1"]),
            decode_array(obj["b1"]),
            decode_array(obj["w2"]),
            decode_scalar(obj["b2"]),
        )
    raise DataError(f"unknown model kind {kind!r}")


def catalog_to_obj(catalog: FeatureCatalog) -> dict:
    return {
        "features": [
            {
                "name": f.name,
                "category": f.category.label,
                "kind": f.kind,
                "encoding_map": dict(f.encoding_map) if f.encoding_map else None,
            }
            for f in catalog.features
        ]
    }


def catalog_from_obj(obj: dict) -> FeatureCatalog:
    return FeatureCatalog(
        tuple(
            Feature(
                f["name"],
                FeatureCategory.from_label(f["category"]),
                f["kind"],
                f.get("encoding_map"),
            )
            for f in obj["features"]
        )
    )


def standardizer_to_obj(params: StandardizationParams) -> dict:
    return {"means": encode_array(params.means), "stds": encode_array(params.stds)}


def standardizer_from_obj(obj: dict) -> StandardizationParams:
    return StandardizationParams(decode_array(obj["means"]), decode_array(obj["stds"]))


def profile_to_obj(profile: Profile) -> dict:
    return {
        "name": profile.name,
        "redacted_categories": sorted(c.label for c in profile.redacted_categories),
        "redacted_features": sorted(profile.redacted_features),
        "dim": profile.dim,
    }


def profile_from_obj(obj: dict) -> Profile:
    return Profile(
        obj["name"],
        frozenset(FeatureCategory.from_label(c) for c in obj["redacted_categories"]),
        frozenset(obj["redacted_features"]),
        obj["dim"],
    )


def train_config_to_obj(config: TrainConfig) -> dict:
    return {
        "learning_rate": config.learning_rate,
        "adam_beta1": config.adam_beta1,
        "adam_beta2": config.adam_beta2,
        "adam_eps": config.adam_eps,
        "batch_size": config.batch_size,
        "max_epochs": config.max_epochs,
        "patience": config.patience,
        "seed": config.seed,
        "hidden": config.hidden,
        "holdout_fraction": config.holdout_fraction,
    }


def train_config_from_obj(obj: dict) -> TrainConfig:
    return TrainConfig(**obj)


def config_digest(obj: Any) -> str:
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def report_to_obj(report) -> dict:
    return {
        "mae": report.mae,
        "mape": report.mape,
        "n": report.n,
        "safety": {
            "under": report.safety.under,
            "within": report.safety.within,
            "over": report.safety.over,
            "under_pct": report.safety.under_pct,
            "within_pct": report.safety.within_pct,
            "over_pct": report.safety.over_pct,
        },
    }


def report_from_obj(obj: dict):
    from .evaluation import EvalReport, SafetyPartition

    s = obj["safety"]
    return EvalReport(
        obj["mae"],
        obj["mape"],
        obj["n"],
        SafetyPartition(s["under"], s["within"], s["over"]),
    )


def bundle_to_obj(bundle) -> dict:
    return {
        "profile": profile_to_obj(bundle.profile),
        "privileged": model_to_obj(bundle.privileged),
        "distilled": model_to_obj(bundle.distilled),
        "lambda": bundle.lam,
        "metrics": report_to_obj(bundle.metrics),
        "privileged_inputs": bundle.privileged_inputs.value,
    }


def bundle_from_obj(obj: dict):
    from .distillation import DistilledBundle, PrivilegedInputs

    return DistilledBundle(
        profile_from_obj(obj["profile"]),
        model_from_obj(obj["privileged"]),
        model_from_obj(obj["distilled"]),
        obj["lambda"],
        report_from_obj(obj["metrics"]),
        PrivilegedInputs(obj["privileged_inputs"]),
    )


def pack_to_obj(catalog, standardizer, bundles, train_config) -> dict:
    """A model pack: everything `predict` needs to serve disclosures."""
    return {
        "format_version": FORMAT_VERSION,
        "catalog": catalog_to_obj(catalog),
        "standardizer": standardizer_to_obj(standardizer),
        "train_config": train_config_to_obj(train_config),
        "train_config_digest": config_digest(train_config_to_obj(train_config)),
        "bundles": [bundle_to_obj(b) for b in bundles],
    }


def pack_from_obj(obj: dict):
    if obj.get("format_version") != FORMAT_VERSION:
        raise DataError(
            f"unsupported model file version {obj.get('format_version')!r}"
        )
    return (
        catalog_from_obj(obj["catalog"]),
        standardizer_from_obj(obj["standardizer"]),
        [bundle_from_obj(b) for b in obj["bundles"]],
        train_config_from_obj(obj["train_config"]),
    )


def save_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None
